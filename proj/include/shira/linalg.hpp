#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "shira/error.hpp"
#include "shira/matrix.hpp"

namespace shira {

// ============================================================================
// Products
// ============================================================================

/// C = A * B. Tiled over columns and the shared dimension so the B panel stays
/// cache-resident; no packing, no BLAS.
inline DenseMatrix matmul(const DenseMatrix &a, const DenseMatrix &b) {
    if (a.cols != b.rows) {
        throw ShapeError("matmul: inner dimensions differ (" + std::to_string(a.cols) + " vs " +
                         std::to_string(b.rows) + ")");
    }
    DenseMatrix c(a.rows, b.cols);
    const std::size_t m = a.rows, k = a.cols, n = b.cols;
    constexpr std::size_t jb = 256, kb = 128;
    for (std::size_t j0 = 0; j0 < n; j0 += jb) {
        const std::size_t j1 = std::min(j0 + jb, n);
        for (std::size_t k0 = 0; k0 < k; k0 += kb) {
            const std::size_t k1 = std::min(k0 + kb, k);
            for (std::size_t i = 0; i < m; ++i) {
                double *crow = c.data.data() + i * n;
                const double *arow = a.data.data() + i * k;
                for (std::size_t kk = k0; kk < k1; ++kk) {
                    const double av = arow[kk];
                    const double *brow = b.data.data() + kk * n;
                    for (std::size_t j = j0; j < j1; ++j) {
                        crow[j] += av * brow[j];
                    }
                }
            }
        }
    }
    return c;
}

// ============================================================================
// SVD
// ============================================================================

/// Singular values, sorted non-increasing.
struct Spectrum {
    std::vector<double> singular_values;
};

struct SvdResult {
    DenseMatrix u;  // rows x k, orthonormal columns
    Spectrum s;     // k = min(rows, cols)
    DenseMatrix vt; // k x cols, orthonormal rows
    std::size_t sweeps = 0;
};

namespace detail {

// One-sided Jacobi on a tall matrix (rows >= cols). Columns are repeatedly
// orthogonalised by plane rotations; at convergence the column norms are the
// singular values. Rotations also accumulate into V. Columns whose norm falls
// below a floor relative to ||A||_F are numerically zero: rotating them only
// churns roundoff noise, so they are skipped and reported as sigma = 0.
inline SvdResult svd_tall(DenseMatrix a) {
    const std::size_t m = a.rows, n = a.cols;
    DenseMatrix v = DenseMatrix::identity(n);
    const double tol = 1e-12;
    const std::size_t max_sweeps = 100;
    double total_sq = 0.0;
    for (double x : a.data) {
        total_sq += x * x;
    }
    const double cutoff = std::sqrt(total_sq) * 1e-14;
    const double cutoff_sq = cutoff * cutoff;

    std::size_t sweep = 0;
    bool converged = (cutoff == 0.0); // all-zero matrix
    while (sweep < max_sweeps && !converged) {
        converged = true;
        ++sweep;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t k = 0; k < m; ++k) {
                    const double x = a(k, i), y = a(k, j);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if (alpha <= cutoff_sq || beta <= cutoff_sq || gamma == 0.0) {
                    continue;
                }
                if (std::fabs(gamma) <= tol * std::sqrt(alpha * beta)) {
                    continue;
                }
                converged = false;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t =
                    (zeta >= 0.0 ? 1.0 : -1.0) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t k = 0; k < m; ++k) {
                    const double x = a(k, i), y = a(k, j);
                    a(k, i) = c * x - s * y;
                    a(k, j) = s * x + c * y;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double x = v(k, i), y = v(k, j);
                    v(k, i) = c * x - s * y;
                    v(k, j) = s * x + c * y;
                }
            }
        }
    }
    if (!converged) {
        throw NumericError("svd: no convergence after " + std::to_string(sweep) + " sweeps");
    }

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) {
        double sq = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            sq += a(k, j) * a(k, j);
        }
        sigma[j] = std::sqrt(sq);
        if (sigma[j] <= cutoff) {
            sigma[j] = 0.0;
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        return sigma[x] > sigma[y] || (sigma[x] == sigma[y] && x < y);
    });

    SvdResult res;
    res.sweeps = sweep;
    res.u = DenseMatrix(m, n);
    res.vt = DenseMatrix(n, n);
    res.s.singular_values.resize(n);
    for (std::size_t out = 0; out < n; ++out) {
        const std::size_t src = order[out];
        res.s.singular_values[out] = sigma[src];
        for (std::size_t k = 0; k < n; ++k) {
            res.vt(out, k) = v(k, src);
        }
        if (sigma[src] > 0.0) {
            for (std::size_t k = 0; k < m; ++k) {
                res.u(k, out) = a(k, src) / sigma[src];
            }
        }
    }

    // Exactly-zero singular values leave empty U columns; complete them to an
    // orthonormal basis from canonical vectors.
    for (std::size_t out = 0; out < n; ++out) {
        if (res.s.singular_values[out] > 0.0) {
            continue;
        }
        for (std::size_t cand = 0; cand < m; ++cand) {
            std::vector<double> w(m, 0.0);
            w[cand] = 1.0;
            for (std::size_t c = 0; c < n; ++c) {
                if (c == out) {
                    continue;
                }
                if (res.s.singular_values[c] == 0.0 && c > out) {
                    continue; // not yet filled
                }
                double dot = 0.0;
                for (std::size_t k = 0; k < m; ++k) {
                    dot += res.u(k, c) * w[k];
                }
                for (std::size_t k = 0; k < m; ++k) {
                    w[k] -= dot * res.u(k, c);
                }
            }
            double nrm = 0.0;
            for (double x : w) {
                nrm += x * x;
            }
            if (nrm > 0.25) {
                nrm = std::sqrt(nrm);
                for (std::size_t k = 0; k < m; ++k) {
                    res.u(k, out) = w[k] / nrm;
                }
                break;
            }
        }
    }
    return res;
}

} // namespace detail

/// Thin SVD by one-sided Jacobi: U diag(s) Vt reconstructs m; iteration cap
/// 100 sweeps, pair convergence at relative off-diagonal 1e-12.
inline SvdResult svd(const DenseMatrix &m) {
    require_finite(m, "svd");
    if (m.rows >= m.cols) {
        return detail::svd_tall(m);
    }
    SvdResult t = detail::svd_tall(transpose(m));
    SvdResult res;
    res.sweeps = t.sweeps;
    res.s = std::move(t.s);
    res.u = transpose(t.vt); // rows x k
    res.vt = transpose(t.u); // k x cols
    return res;
}

// ============================================================================
// Rank and norms
// ============================================================================

/// Best rank-r approximation (Eckart-Young): keep the r largest singular
/// triplets. Spectral error of the result is sigma_{r+1}.
inline DenseMatrix truncate_rank(const DenseMatrix &m, std::size_t r) {
    const std::size_t k = std::min(m.rows, m.cols);
    if (r < 1 || r > k) {
        throw ParameterError("truncate_rank: r must be in [1, " + std::to_string(k) + "], got " +
                             std::to_string(r));
    }
    SvdResult d = svd(m);
    DenseMatrix us(m.rows, r);
    DenseMatrix vtr(r, m.cols);
    for (std::size_t j = 0; j < r; ++j) {
        const double sj = d.s.singular_values[j];
        for (std::size_t i = 0; i < m.rows; ++i) {
            us(i, j) = d.u(i, j) * sj;
        }
        for (std::size_t c = 0; c < m.cols; ++c) {
            vtr(j, c) = d.vt(j, c);
        }
    }
    return matmul(us, vtr);
}

inline double spectral_norm(const DenseMatrix &m) { return svd(m).s.singular_values.front(); }

inline double frobenius_norm(const DenseMatrix &m) {
    double sq = 0.0;
    for (double x : m.data) {
        sq += x * x;
    }
    return std::sqrt(sq);
}

/// Number of entries with |x| > eps.
inline std::size_t nnz(const DenseMatrix &m, double eps) {
    if (eps < 0.0) {
        throw ParameterError("nnz: eps must be non-negative");
    }
    std::size_t count = 0;
    for (double x : m.data) {
        if (std::fabs(x) > eps) {
            ++count;
        }
    }
    return count;
}

/// Number of singular values above tol * sigma_1.
inline std::size_t numeric_rank(const DenseMatrix &m, double tol = 1e-10) {
    if (tol <= 0.0) {
        throw ParameterError("numeric_rank: tol must be positive");
    }
    SvdResult d = svd(m);
    const double s1 = d.s.singular_values.front();
    if (s1 == 0.0) {
        return 0;
    }
    std::size_t r = 0;
    for (double s : d.s.singular_values) {
        if (s > tol * s1) {
            ++r;
        }
    }
    return r;
}

} // namespace shira
