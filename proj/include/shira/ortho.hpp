#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "shira/adapter.hpp"
#include "shira/error.hpp"
#include "shira/linalg.hpp"
#include "shira/mask.hpp"
#include "shira/matrix.hpp"
#include "shira/random.hpp"

namespace shira {

// ============================================================================
// A1^T * A2
// ============================================================================

namespace detail {

using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline DenseMatrix gram_dense(const DenseMatrix &a1, const DenseMatrix &a2) {
    Eigen::Map<const EigenRowMajor> m1(a1.data.data(), static_cast<Eigen::Index>(a1.rows),
                                       static_cast<Eigen::Index>(a1.cols));
    Eigen::Map<const EigenRowMajor> m2(a2.data.data(), static_cast<Eigen::Index>(a2.rows),
                                       static_cast<Eigen::Index>(a2.cols));
    DenseMatrix c(a1.cols, a2.cols);
    Eigen::Map<EigenRowMajor> mc(c.data.data(), static_cast<Eigen::Index>(c.rows),
                                 static_cast<Eigen::Index>(c.cols));
    mc.noalias() = m1.transpose() * m2;
    return c;
}

// Row-compressed accumulation: cost sum_k nnz(a1 row k) * nnz(a2 row k), which
// is what makes 4096-dim products of 99%-sparse adapters cheap.
inline DenseMatrix gram_sparse(const DenseMatrix &a1, const DenseMatrix &a2) {
    DenseMatrix c(a1.cols, a2.cols);
    std::vector<std::uint32_t> cols1, cols2;
    std::vector<double> vals1, vals2;
    cols1.reserve(256);
    cols2.reserve(256);
    vals1.reserve(256);
    vals2.reserve(256);
    for (std::size_t k = 0; k < a1.rows; ++k) {
        const double *r1 = a1.data.data() + k * a1.cols;
        const double *r2 = a2.data.data() + k * a2.cols;
        cols1.clear();
        vals1.clear();
        for (std::size_t j = 0; j < a1.cols; ++j) {
            if (r1[j] != 0.0) {
                cols1.push_back(static_cast<std::uint32_t>(j));
                vals1.push_back(r1[j]);
            }
        }
        if (cols1.empty()) {
            continue;
        }
        cols2.clear();
        vals2.clear();
        for (std::size_t j = 0; j < a2.cols; ++j) {
            if (r2[j] != 0.0) {
                cols2.push_back(static_cast<std::uint32_t>(j));
                vals2.push_back(r2[j]);
            }
        }
        if (cols2.empty()) {
            continue;
        }
        for (std::size_t p = 0; p < cols1.size(); ++p) {
            double *crow = c.data.data() + static_cast<std::size_t>(cols1[p]) * c.cols;
            const double v1 = vals1[p];
            for (std::size_t q = 0; q < cols2.size(); ++q) {
                crow[cols2[q]] += v1 * vals2[q];
            }
        }
    }
    return c;
}

inline double density_estimate(const DenseMatrix &m) {
    // sample-based; exact scan is wasted work on 16M-entry matrices
    const std::size_t n = m.data.size();
    const std::size_t step = std::max<std::size_t>(1, n / 4096);
    std::size_t seen = 0, nz = 0;
    for (std::size_t i = 0; i < n; i += step) {
        ++seen;
        if (m.data[i] != 0.0) {
            ++nz;
        }
    }
    return static_cast<double>(nz) / static_cast<double>(seen);
}

} // namespace detail

/// Product A1^T * A2, the object both orthogonality metrics are defined on.
/// Sparse operands take the row-compressed path; dense ones a GEMM.
inline DenseMatrix gram_product(const DenseMatrix &a1, const DenseMatrix &a2) {
    require_same_shape(a1, a2, "gram_product");
    const bool sparse =
        detail::density_estimate(a1) < 0.05 || detail::density_estimate(a2) < 0.05;
    return sparse ? detail::gram_sparse(a1, a2) : detail::gram_dense(a1, a2);
}

// ============================================================================
// AWOM / AWOR
// ============================================================================

enum class AwomNorm { frobenius, spectral };

/// Magnitude of A1^T A2. Frobenius by default (the elementwise l2 reading);
/// the spectral variant is available for comparison.
inline double awom(const DenseMatrix &a1, const DenseMatrix &a2,
                   AwomNorm norm = AwomNorm::frobenius) {
    DenseMatrix p = gram_product(a1, a2);
    return norm == AwomNorm::frobenius ? frobenius_norm(p) : spectral_norm(p);
}

/// Sparsity ratio of A1^T A2: 1 - nnz / m^2.
inline double awor(const DenseMatrix &a1, const DenseMatrix &a2, double eps = 1e-12) {
    DenseMatrix p = gram_product(a1, a2);
    const double total = static_cast<double>(p.rows) * static_cast<double>(p.cols);
    return 1.0 - static_cast<double>(nnz(p, eps)) / total;
}

// ============================================================================
// Lemma verifiers
// ============================================================================

struct NullSpaceCheck {
    bool orthogonal = false;
    double residual = 0.0; // ||dense(a1)^T dense(a2)||_F
};

/// True when the adapters cannot interfere multiplicatively, i.e. the product
/// of their dense forms vanishes to 1e-10.
inline NullSpaceCheck verify_null_space(const SparseAdapter &a1, const SparseAdapter &a2) {
    if (a1.rows != a2.rows || a1.cols != a2.cols) {
        throw ShapeError("verify_null_space: adapter shapes differ");
    }
    DenseMatrix d1 = to_dense(a1);
    DenseMatrix d2 = to_dense(a2);
    NullSpaceCheck res;
    res.residual = frobenius_norm(gram_product(d1, d2));
    res.orthogonal = res.residual <= 1e-10;
    return res;
}

struct StructOrthoReport {
    double max_abs_dev = 0.0;  // product vs identity + S2 + S1^T, elementwise
    bool product_matches = false;
    double awor_value = 0.0;
    double awor_bound = 0.0;   // 1 - (nnz(I) + nnz(S1) + nnz(S2)) / m^2
    bool bound_holds = false;
    std::size_t product_nnz = 0;
    std::size_t support_total = 0;
};

/// Builds two struct adapters I + S_i with random values on stride-f rows at
/// the given offsets and checks the product identity plus the AWOR bound.
/// Offsets on the same stride class would overlap, which breaks the lemma's
/// precondition.
inline StructOrthoReport verify_struct_orthogonality(std::size_t f, std::size_t o1,
                                                     std::size_t o2, std::size_t m,
                                                     std::uint64_t seed) {
    if (f < 1 || o1 >= f || o2 >= f) {
        throw ParameterError("verify_struct_orthogonality: offsets must lie in [0, f)");
    }
    if (o1 == o2) {
        throw ParameterError("verify_struct_orthogonality: overlapping offsets");
    }
    if (m < 2) {
        throw ParameterError("verify_struct_orthogonality: m must be >= 2");
    }
    Rng rng(seed);
    DenseMatrix s1(m, m), s2(m, m);
    for (std::size_t i = o1; i < m; i += f) {
        for (std::size_t j = 0; j < m; ++j) {
            s1(i, j) = rng.gaussian();
        }
    }
    for (std::size_t i = o2; i < m; i += f) {
        for (std::size_t j = 0; j < m; ++j) {
            s2(i, j) = rng.gaussian();
        }
    }
    DenseMatrix a1 = s1, a2 = s2;
    for (std::size_t i = 0; i < m; ++i) {
        a1(i, i) += 1.0;
        a2(i, i) += 1.0;
    }

    DenseMatrix prod = gram_product(a1, a2);

    StructOrthoReport rep;
    // expected entry: delta_ij + S2[i][j] + S1[j][i]
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double expected = (i == j ? 1.0 : 0.0) + s2(i, j) + s1(j, i);
            rep.max_abs_dev = std::max(rep.max_abs_dev, std::fabs(prod(i, j) - expected));
        }
    }
    rep.product_matches = rep.max_abs_dev <= 1e-12;
    rep.product_nnz = nnz(prod, 1e-12);
    const std::size_t rows1 = o1 < m ? (m - 1 - o1) / f + 1 : 0;
    const std::size_t rows2 = o2 < m ? (m - 1 - o2) / f + 1 : 0;
    rep.support_total = m + rows1 * m + rows2 * m;
    const double total = static_cast<double>(m) * static_cast<double>(m);
    rep.awor_value = 1.0 - static_cast<double>(rep.product_nnz) / total;
    rep.awor_bound = 1.0 - static_cast<double>(rep.support_total) / total;
    rep.bound_holds = rep.product_nnz <= rep.support_total;
    return rep;
}

// ============================================================================
// Fig. 4 / Fig. 9 style simulation
// ============================================================================

enum class StyleKind { dense, sparse_lora, shira_wm, shira_struct };

inline const char *style_name(StyleKind k) {
    switch (k) {
    case StyleKind::dense:
        return "dense";
    case StyleKind::sparse_lora:
        return "sparse_lora";
    case StyleKind::shira_wm:
        return "shira_wm";
    default:
        return "shira_struct";
    }
}

/// Random-adapter family for the simulation: dense Gaussian, LoRA with
/// sparsified Gaussian factors, top-|w| masked Gaussian, or identity +
/// Gaussian stride rows.
struct AdapterStyle {
    StyleKind kind = StyleKind::dense;
    double sparsity = 0.99;   // zero fraction (sparse_lora factors, shira_wm)
    std::size_t rank = 256;   // sparse_lora
    std::size_t frequency = 100; // shira_struct
};

enum class OverlapMode { independent, overlap, non_overlap };

inline const char *overlap_mode_name(OverlapMode m) {
    switch (m) {
    case OverlapMode::independent:
        return "-";
    case OverlapMode::overlap:
        return "overlap";
    default:
        return "nonoverlap";
    }
}

struct OrthoRow {
    std::size_t dim = 0;
    std::string style;
    std::string overlap_mode;
    double awom_mean = 0.0, awom_std = 0.0;
    double awor_mean = 0.0, awor_std = 0.0;
    std::size_t trials = 0;
};

struct OrthoReport {
    std::vector<OrthoRow> rows;
};

namespace detail {

inline DenseMatrix wm_masked_gaussian(std::size_t dim, double sparsity, std::uint64_t seed) {
    DenseMatrix g = seeded_gaussian(dim, dim, seed);
    const std::size_t keep = static_cast<std::size_t>(
        std::llround((1.0 - sparsity) * static_cast<double>(dim) * static_cast<double>(dim)));
    Mask m = build_wm_mask(g, keep);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
        if (!m.bits[i]) {
            g.data[i] = 0.0;
        }
    }
    return g;
}

inline DenseMatrix sparse_lora_adapter(std::size_t dim, const AdapterStyle &style,
                                       std::uint64_t seed) {
    const std::size_t r = std::min(style.rank, dim);
    DenseMatrix a = seeded_gaussian(dim, r, mix_seed(seed, 0));
    DenseMatrix b = seeded_gaussian(r, dim, mix_seed(seed, 1));
    Rng rng(mix_seed(seed, 2));
    for (double &x : a.data) {
        if (rng.uniform() < style.sparsity) {
            x = 0.0;
        }
    }
    for (double &x : b.data) {
        if (rng.uniform() < style.sparsity) {
            x = 0.0;
        }
    }
    return matmul(a, b);
}

inline DenseMatrix struct_adapter(std::size_t dim, std::size_t f, std::size_t offset,
                                  std::uint64_t seed) {
    DenseMatrix m(dim, dim);
    Rng rng(seed);
    for (std::size_t i = offset; i < dim; i += f) {
        for (std::size_t j = 0; j < dim; ++j) {
            m(i, j) = rng.gaussian();
        }
    }
    for (std::size_t i = 0; i < dim; ++i) {
        m(i, i) += 1.0;
    }
    return m;
}

// Values on a given support; used by the overlap study.
inline DenseMatrix values_on_support(std::size_t dim, const std::vector<std::uint64_t> &support,
                                     std::uint64_t seed) {
    DenseMatrix m(dim, dim);
    Rng rng(seed);
    for (std::uint64_t i : support) {
        m.data[i] = rng.gaussian();
    }
    return m;
}

struct PairMetrics {
    double awom, awor;
};

inline PairMetrics style_pair_metrics(std::size_t dim, const AdapterStyle &style,
                                      OverlapMode mode, double eps, std::uint64_t seed) {
    DenseMatrix a1, a2;
    switch (style.kind) {
    case StyleKind::dense:
        a1 = seeded_gaussian(dim, dim, mix_seed(seed, 10));
        a2 = seeded_gaussian(dim, dim, mix_seed(seed, 11));
        break;
    case StyleKind::sparse_lora:
        a1 = sparse_lora_adapter(dim, style, mix_seed(seed, 20));
        a2 = sparse_lora_adapter(dim, style, mix_seed(seed, 21));
        break;
    case StyleKind::shira_wm:
        if (mode == OverlapMode::independent) {
            a1 = wm_masked_gaussian(dim, style.sparsity, mix_seed(seed, 30));
            a2 = wm_masked_gaussian(dim, style.sparsity, mix_seed(seed, 31));
        } else {
            // A shared base weight matrix defines the saliency order: the
            // overlap variant trains the same top-k both times, the
            // non-overlap variant the next top-k slice.
            DenseMatrix w = seeded_gaussian(dim, dim, mix_seed(seed, 32));
            const std::size_t keep = static_cast<std::size_t>(std::llround(
                (1.0 - style.sparsity) * static_cast<double>(dim) * static_cast<double>(dim)));
            Mask m1 = build_wm_mask(w, keep);
            std::vector<std::uint64_t> s1 = m1.to_indices();
            std::vector<std::uint64_t> s2;
            if (mode == OverlapMode::overlap) {
                s2 = s1;
            } else {
                std::unordered_set<std::uint64_t> excl(s1.begin(), s1.end());
                s2 = build_wm_mask(w, keep, excl).to_indices();
            }
            a1 = values_on_support(dim, s1, mix_seed(seed, 33));
            a2 = values_on_support(dim, s2, mix_seed(seed, 34));
        }
        break;
    case StyleKind::shira_struct: {
        const std::size_t f = std::max<std::size_t>(2, std::min(style.frequency, dim));
        Rng rng(mix_seed(seed, 40));
        const std::size_t o1 = static_cast<std::size_t>(rng.index(f));
        std::size_t o2 = static_cast<std::size_t>(rng.index(f - 1));
        if (o2 >= o1) {
            ++o2; // distinct offsets, uniform over the remaining classes
        }
        a1 = struct_adapter(dim, f, o1, mix_seed(seed, 41));
        a2 = struct_adapter(dim, f, o2, mix_seed(seed, 42));
        break;
    }
    }
    DenseMatrix p = gram_product(a1, a2);
    const double total = static_cast<double>(p.rows) * static_cast<double>(p.cols);
    PairMetrics pm;
    pm.awom = frobenius_norm(p);
    pm.awor = 1.0 - static_cast<double>(nnz(p, eps)) / total;
    return pm;
}

struct MeanStd {
    double mean, std;
};

inline MeanStd mean_std(const std::vector<double> &xs) {
    double mean = 0.0;
    for (double x : xs) {
        mean += x;
    }
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) {
        var += (x - mean) * (x - mean);
    }
    var = xs.size() > 1 ? var / static_cast<double>(xs.size() - 1) : 0.0;
    return {mean, std::sqrt(var)};
}

} // namespace detail

/// Runs `trials` random adapter pairs per (dim, style) cell and reports
/// AWOM/AWOR statistics; the SHiRA-WM overlap/non-overlap variants are
/// appended for the coincidence study. Cells are pure given their derived
/// seed, so trials are evaluated on a small worker pool.
inline OrthoReport simulate_fig4(const std::vector<std::size_t> &dims,
                                 const std::vector<AdapterStyle> &styles, std::size_t trials,
                                 std::uint64_t seed, double eps = 1e-12,
                                 bool include_overlap_study = true, std::size_t threads = 0) {
    if (dims.empty()) {
        throw ParameterError("simulate_fig4: need at least one dimension");
    }
    for (std::size_t d : dims) {
        if (d < 2) {
            throw ParameterError("simulate_fig4: dims must be >= 2");
        }
    }
    if (trials < 1) {
        throw ParameterError("simulate_fig4: trials must be >= 1");
    }
    if (threads == 0) {
        threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    }

    struct Cell {
        std::size_t dim;
        AdapterStyle style;
        OverlapMode mode;
        std::uint64_t cell_id;
    };
    std::vector<Cell> cells;
    std::uint64_t cell_id = 0;
    for (std::size_t d : dims) {
        for (const AdapterStyle &st : styles) {
            cells.push_back({d, st, OverlapMode::independent, cell_id++});
        }
        if (include_overlap_study) {
            AdapterStyle wm;
            wm.kind = StyleKind::shira_wm;
            cells.push_back({d, wm, OverlapMode::overlap, cell_id++});
            cells.push_back({d, wm, OverlapMode::non_overlap, cell_id++});
        }
    }

    OrthoReport report;
    report.rows.resize(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
        std::vector<double> awoms(trials), awors(trials);
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            for (;;) {
                const std::size_t t = next.fetch_add(1);
                if (t >= trials) {
                    return;
                }
                const std::uint64_t s = mix_seed(seed, cells[c].cell_id * 1000003ull + t);
                detail::PairMetrics pm =
                    detail::style_pair_metrics(cells[c].dim, cells[c].style, cells[c].mode, eps, s);
                awoms[t] = pm.awom;
                awors[t] = pm.awor;
            }
        };
        std::vector<std::thread> pool;
        const std::size_t nw = std::min(threads, trials);
        pool.reserve(nw);
        for (std::size_t w = 0; w < nw; ++w) {
            pool.emplace_back(worker);
        }
        for (std::thread &th : pool) {
            th.join();
        }
        detail::MeanStd am = detail::mean_std(awoms);
        detail::MeanStd ar = detail::mean_std(awors);
        OrthoRow &row = report.rows[c];
        row.dim = cells[c].dim;
        row.style = style_name(cells[c].style.kind);
        row.overlap_mode = overlap_mode_name(cells[c].mode);
        row.awom_mean = am.mean;
        row.awom_std = am.std;
        row.awor_mean = ar.mean;
        row.awor_std = ar.std;
        row.trials = trials;
    }
    return report;
}

inline void write_ortho_csv(const std::string &path, const OrthoReport &report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    out << "dim,style,overlap_mode,awom_mean,awom_std,awor_mean,awor_std,trials\n";
    char buf[256];
    for (const OrthoRow &r : report.rows) {
        std::snprintf(buf, sizeof(buf), "%zu,%s,%s,%.10g,%.10g,%.10g,%.10g,%zu\n", r.dim,
                      r.style.c_str(), r.overlap_mode.c_str(), r.awom_mean, r.awom_std,
                      r.awor_mean, r.awor_std, r.trials);
        out << buf;
    }
}

} // namespace shira
