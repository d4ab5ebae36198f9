#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "shira/adapter.hpp"
#include "shira/linalg.hpp"
#include "shira/mask.hpp"
#include "shira/matrix.hpp"
#include "shira/model.hpp"
#include "shira/random.hpp"

namespace shira {

/// ||S||_0: the adapter's parameter count is exactly its nonzero count.
inline std::size_t param_complexity(const SparseAdapter &a) { return a.indices.size(); }

// ============================================================================
// LoRA as rank-r approximation of a sparse adapter
// ============================================================================

struct LoraApprox {
    DenseMatrix approx;     // best rank-r reconstruction of dense(S)
    double spectral_error;  // ||S - S_r||_2, measured on the difference
    double frobenius_error; // ||S - S_r||_F, measured on the difference
    Spectrum spectrum;      // singular values of dense(S)
};

/// Truncates the adapter's dense form to rank r and measures the error both
/// ways; Eckart-Young says the spectral error is sigma_{r+1} and the squared
/// Frobenius error the tail sum of squares.
inline LoraApprox lora_approximation_of_shira(const SparseAdapter &a, std::size_t r) {
    DenseMatrix s = to_dense(a);
    const std::size_t k = std::min(s.rows, s.cols);
    if (r < 1 || r > k) {
        throw ParameterError("lora_approximation_of_shira: r out of range");
    }
    LoraApprox res;
    res.spectrum = svd(s).s;
    res.approx = truncate_rank(s, r);
    DenseMatrix diff = sub(s, res.approx);
    res.spectral_error = spectral_norm(diff);
    res.frobenius_error = frobenius_norm(diff);
    return res;
}

// ============================================================================
// Rank reports
// ============================================================================

struct RankReport {
    std::size_t rank = 0;
    double density = 0.0;
    std::size_t rows = 0, cols = 0;
};

inline RankReport adapter_rank_report(const SparseAdapter &a) {
    RankReport rep;
    rep.rows = a.rows;
    rep.cols = a.cols;
    rep.density = a.density();
    rep.rank = numeric_rank(to_dense(a));
    return rep;
}

/// Generic rank of a mask's sparsity pattern: seeded random values are placed
/// on the support before taking the numeric rank, so e.g. two stride rows
/// count as rank 2 rather than collapsing to a single repeated row.
inline RankReport mask_rank_report(const Mask &m, std::uint64_t seed) {
    RankReport rep;
    rep.rows = m.rows;
    rep.cols = m.cols;
    rep.density = m.density();
    DenseMatrix vals(m.rows, m.cols);
    Rng rng(seed);
    for (std::size_t i = 0; i < m.bits.size(); ++i) {
        if (m.bits[i]) {
            vals.data[i] = rng.gaussian();
        }
    }
    rep.rank = numeric_rank(vals);
    return rep;
}

// ============================================================================
// Scale independence
// ============================================================================

struct LoraScaleRow {
    std::size_t r;
    double alpha_over_r;
    double alpha_over_sqrt_r;
    double unit;
};

struct ScaleIndependenceReport {
    bool apply_exact = true;      // every alpha: touched entries equal base + alpha*value
    std::size_t adapter_rank = 0; // plays no role in the scale, which is the point
    std::vector<LoraScaleRow> lora_scales;
};

/// SHiRA's inference scale is the constant 1 whatever the adapter's rank:
/// apply(W, S, alpha) touches entries by exactly base + alpha*value. The
/// report contrasts this with LoRA's rank-dependent effective scales.
inline ScaleIndependenceReport verify_scale_independence(const SparseAdapter &a,
                                                         const DenseMatrix &w_base,
                                                         std::span<const double> alphas,
                                                         double lora_alpha = 64.0) {
    ScaleIndependenceReport rep;
    rep.adapter_rank = adapter_rank_report(a).rank;
    for (double alpha : alphas) {
        DenseMatrix out = apply(w_base, a, alpha);
        for (std::size_t k = 0; k < a.indices.size(); ++k) {
            const std::uint64_t i = a.indices[k];
            const double expected = w_base.data[i] + alpha * a.values[k];
            if (out.data[i] != expected) {
                rep.apply_exact = false;
            }
        }
    }
    for (std::size_t r : {std::size_t{1}, std::size_t{4}, std::size_t{16}, std::size_t{64}}) {
        LoraAdapter probe;
        probe.r = r;
        probe.alpha = lora_alpha;
        probe.rule = ScalingRule::alpha_over_r;
        LoraScaleRow row;
        row.r = r;
        row.alpha_over_r = effective_scale(probe);
        probe.rule = ScalingRule::alpha_over_sqrt_r;
        row.alpha_over_sqrt_r = effective_scale(probe);
        probe.rule = ScalingRule::unit;
        row.unit = effective_scale(probe);
        rep.lora_scales.push_back(row);
    }
    return rep;
}

} // namespace shira
