#pragma once

#include <cmath>
#include <cstddef>
#include <cstring>
#include <string>
#include <vector>

#include "shira/error.hpp"

namespace shira {

/// Dense row-major matrix of doubles. All computation in the toolkit is done
/// in 64-bit; narrower types appear only in the serialization formats.
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data; // length rows*cols, row-major

    DenseMatrix() = default;

    DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {
        if (r == 0 || c == 0) {
            throw ParameterError("DenseMatrix: dimensions must be positive");
        }
    }

    double &operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::size_t size() const { return rows * cols; }

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            m(i, i) = 1.0;
        }
        return m;
    }
};

inline bool same_shape(const DenseMatrix &a, const DenseMatrix &b) {
    return a.rows == b.rows && a.cols == b.cols;
}

inline void require_same_shape(const DenseMatrix &a, const DenseMatrix &b, const char *what) {
    if (!same_shape(a, b)) {
        throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows) + "x" +
                         std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                         std::to_string(b.cols) + ")");
    }
}

inline void require_finite(const DenseMatrix &m, const char *what) {
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        if (!std::isfinite(m.data[i])) {
            throw NumericError(std::string(what) + ": non-finite entry at flat index " +
                               std::to_string(i));
        }
    }
}

inline DenseMatrix transpose(const DenseMatrix &m) {
    DenseMatrix t(m.cols, m.rows);
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            t(j, i) = m(i, j);
        }
    }
    return t;
}

inline DenseMatrix add(const DenseMatrix &a, const DenseMatrix &b) {
    require_same_shape(a, b, "add");
    DenseMatrix c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) {
        c.data[i] += b.data[i];
    }
    return c;
}

inline DenseMatrix sub(const DenseMatrix &a, const DenseMatrix &b) {
    require_same_shape(a, b, "sub");
    DenseMatrix c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) {
        c.data[i] -= b.data[i];
    }
    return c;
}

inline DenseMatrix scaled(const DenseMatrix &m, double s) {
    DenseMatrix c = m;
    for (double &x : c.data) {
        x *= s;
    }
    return c;
}

inline double max_abs_diff(const DenseMatrix &a, const DenseMatrix &b) {
    require_same_shape(a, b, "max_abs_diff");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        worst = std::max(worst, std::fabs(a.data[i] - b.data[i]));
    }
    return worst;
}

/// Exact bit-level equality, including signed zeros.
inline bool bit_identical(const DenseMatrix &a, const DenseMatrix &b) {
    if (!same_shape(a, b)) {
        return false;
    }
    return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

} // namespace shira
