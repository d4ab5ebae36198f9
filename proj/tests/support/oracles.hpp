#pragma once

// Independent reference implementations used only by tests. These stay
// deliberately naive so they cannot share a failure mode with the library
// paths they check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "shira/matrix.hpp"

namespace oracle {

// Plain 3-loop product.
inline shira::DenseMatrix naive_matmul(const shira::DenseMatrix &a, const shira::DenseMatrix &b) {
    shira::DenseMatrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) {
                acc += a(i, k) * b(k, j);
            }
            c(i, j) = acc;
        }
    }
    return c;
}

// Eigenvalues of a symmetric matrix by classic two-sided Jacobi rotations,
// sorted descending. Used as the Gram-matrix oracle for singular values.
inline std::vector<double> jacobi_sym_eigenvalues(shira::DenseMatrix a, int max_sweeps = 100) {
    const std::size_t n = a.rows;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                off += a(i, j) * a(i, j);
            }
        }
        if (off < 1e-28) {
            break;
        }
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) {
                    continue;
                }
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) {
        ev[i] = a(i, i);
    }
    std::sort(ev.begin(), ev.end(), std::greater<double>());
    return ev;
}

// Central finite difference of f with respect to one scalar parameter.
inline double central_diff(std::function<double(double)> f, double x0, double h = 1e-6) {
    return (f(x0 + h) - f(x0 - h)) / (2.0 * h);
}

} // namespace oracle
