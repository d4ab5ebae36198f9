#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "shira/error.hpp"
#include "shira/matrix.hpp"
#include "shira/model.hpp"
#include "shira/random.hpp"

namespace shira {

// ============================================================================
// Mask
// ============================================================================

/// Binary trainable-position mask over a weight matrix.
struct Mask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> bits; // row-major 0/1
    std::size_t set_count = 0;
    bool stride_warning = false; // struct builder: frequency exceeded the axis

    Mask() = default;
    Mask(std::size_t r, std::size_t c) : rows(r), cols(c), bits(r * c, 0) {
        if (r == 0 || c == 0) {
            throw ParameterError("Mask: dimensions must be positive");
        }
    }

    bool test(std::size_t i, std::size_t j) const { return bits[i * cols + j] != 0; }

    void set(std::size_t i, std::size_t j) {
        std::uint8_t &b = bits[i * cols + j];
        if (!b) {
            b = 1;
            ++set_count;
        }
    }

    double density() const { return static_cast<double>(set_count) / static_cast<double>(bits.size()); }

    std::vector<std::uint64_t> to_indices() const {
        std::vector<std::uint64_t> idx;
        idx.reserve(set_count);
        for (std::size_t i = 0; i < bits.size(); ++i) {
            if (bits[i]) {
                idx.push_back(i);
            }
        }
        return idx;
    }

    static Mask from_indices(std::size_t rows, std::size_t cols,
                             const std::vector<std::uint64_t> &indices) {
        Mask m(rows, cols);
        for (std::uint64_t f : indices) {
            if (f >= m.bits.size()) {
                throw ParameterError("Mask::from_indices: index out of range");
            }
            if (!m.bits[f]) {
                m.bits[f] = 1;
                ++m.set_count;
            }
        }
        return m;
    }
};

enum class MaskStrategy { strct, rand, wm, grad, snip };

enum class Axis { rows, cols };

inline const char *strategy_name(MaskStrategy s) {
    switch (s) {
    case MaskStrategy::strct:
        return "struct";
    case MaskStrategy::rand:
        return "rand";
    case MaskStrategy::wm:
        return "wm";
    case MaskStrategy::grad:
        return "grad";
    default:
        return "snip";
    }
}

inline MaskStrategy parse_strategy(const std::string &s) {
    if (s == "struct") {
        return MaskStrategy::strct;
    }
    if (s == "rand") {
        return MaskStrategy::rand;
    }
    if (s == "wm") {
        return MaskStrategy::wm;
    }
    if (s == "grad") {
        return MaskStrategy::grad;
    }
    if (s == "snip") {
        return MaskStrategy::snip;
    }
    throw ParameterError("unknown mask strategy: " + s);
}

/// Flat key-value description of a mask build; only the fields relevant to
/// the chosen strategy are consumed.
struct MaskRecipe {
    MaskStrategy strategy = MaskStrategy::rand;
    double density = 0.02;          // target trainable fraction (wm/grad/snip)
    std::size_t frequency = 100;    // struct
    Axis axis = Axis::rows;         // struct
    bool include_diagonal = true;   // struct
    double bernoulli_p = 0.02;      // rand
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> exclude; // non-overlap support
};

// ============================================================================
// Builders
// ============================================================================

/// Every frequency-th row (or column), phase 0, plus the main diagonal when
/// requested. A frequency larger than the axis yields an empty stride: the
/// mask degrades to diagonal-only and carries a warning flag.
inline Mask build_struct_mask(std::size_t rows, std::size_t cols, std::size_t frequency,
                              Axis axis, bool include_diagonal) {
    if (frequency < 1) {
        throw ParameterError("build_struct_mask: frequency must be >= 1");
    }
    Mask m(rows, cols);
    const std::size_t axis_len = axis == Axis::rows ? rows : cols;
    if (frequency > axis_len) {
        m.stride_warning = true;
    } else if (axis == Axis::rows) {
        for (std::size_t i = 0; i < rows; i += frequency) {
            for (std::size_t j = 0; j < cols; ++j) {
                m.set(i, j);
            }
        }
    } else {
        for (std::size_t j = 0; j < cols; j += frequency) {
            for (std::size_t i = 0; i < rows; ++i) {
                m.set(i, j);
            }
        }
    }
    if (include_diagonal) {
        for (std::size_t i = 0; i < std::min(rows, cols); ++i) {
            m.set(i, i);
        }
    }
    return m;
}

/// Independent Bernoulli(p) per position, deterministic per seed.
inline Mask build_random_mask(std::size_t rows, std::size_t cols, double p, std::uint64_t seed) {
    if (p < 0.0 || p > 1.0) {
        throw ParameterError("build_random_mask: p must be in [0, 1]");
    }
    Mask m(rows, cols);
    Rng rng(seed);
    for (std::size_t i = 0; i < m.bits.size(); ++i) {
        if (rng.uniform() < p) {
            m.bits[i] = 1;
            ++m.set_count;
        }
    }
    return m;
}

namespace detail {

// Top-k flat indices by score, excluding `exclude`; ties go to the lower
// flat index so selections reproduce across implementations.
template <typename ScoreFn>
inline std::vector<std::uint64_t> select_top_k(std::size_t total, std::size_t k,
                                               const std::unordered_set<std::uint64_t> &exclude,
                                               ScoreFn score) {
    std::vector<std::uint64_t> cand;
    cand.reserve(total - exclude.size());
    for (std::uint64_t i = 0; i < total; ++i) {
        if (exclude.empty() || !exclude.count(i)) {
            cand.push_back(i);
        }
    }
    if (k > cand.size()) {
        throw ParameterError("top-k selection: k exceeds available positions (" +
                             std::to_string(k) + " > " + std::to_string(cand.size()) + ")");
    }
    auto better = [&](std::uint64_t a, std::uint64_t b) {
        const double sa = score(a), sb = score(b);
        return sa > sb || (sa == sb && a < b);
    };
    std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(),
                     better);
    cand.resize(k);
    std::sort(cand.begin(), cand.end());
    return cand;
}

} // namespace detail

/// Top-k positions by |weight|.
inline Mask build_wm_mask(const DenseMatrix &weights, std::size_t k,
                          const std::unordered_set<std::uint64_t> &exclude = {}) {
    auto idx = detail::select_top_k(weights.size(), k, exclude, [&](std::uint64_t i) {
        return std::fabs(weights.data[i]);
    });
    return Mask::from_indices(weights.rows, weights.cols, idx);
}

// ============================================================================
// Gradient snapshots
// ============================================================================

/// Sum of per-batch absolute gradients for one weight tensor.
struct GradSnapshot {
    DenseMatrix accum;
    std::size_t sample_count = 0;
};

struct ModelGradSnapshots {
    GradSnapshot w1, w2;
};

/// Accumulates |dL/dW| per weight tensor over a calibration set. The model is
/// untouched; snapshot = sum over batches of elementwise absolute gradients.
inline ModelGradSnapshots collect_gradients(const ToyModel &model,
                                            const std::vector<std::pair<DenseMatrix, DenseMatrix>> &batches) {
    if (batches.empty()) {
        throw ParameterError("collect_gradients: need at least one batch");
    }
    ModelGradSnapshots snap;
    snap.w1.accum = DenseMatrix(model.w1.rows, model.w1.cols);
    snap.w2.accum = DenseMatrix(model.w2.rows, model.w2.cols);
    for (const auto &[x, target] : batches) {
        ModelGrads g = backward(model, x, target);
        for (std::size_t i = 0; i < g.w1.data.size(); ++i) {
            snap.w1.accum.data[i] += std::fabs(g.w1.data[i]);
        }
        for (std::size_t i = 0; i < g.w2.data.size(); ++i) {
            snap.w2.accum.data[i] += std::fabs(g.w2.data[i]);
        }
    }
    snap.w1.sample_count = batches.size();
    snap.w2.sample_count = batches.size();
    return snap;
}

/// Top-k positions by accumulated |gradient|.
inline Mask build_grad_mask(const GradSnapshot &grads, std::size_t k,
                            const std::unordered_set<std::uint64_t> &exclude = {}) {
    if (grads.sample_count == 0) {
        throw ParameterError("build_grad_mask: empty gradient snapshot");
    }
    auto idx = detail::select_top_k(grads.accum.size(), k, exclude, [&](std::uint64_t i) {
        return grads.accum.data[i];
    });
    return Mask::from_indices(grads.accum.rows, grads.accum.cols, idx);
}

/// Top-k positions by |w_i| * accumulated |g_i| (the SNIP saliency).
inline Mask build_snip_mask(const DenseMatrix &weights, const GradSnapshot &grads, std::size_t k,
                            const std::unordered_set<std::uint64_t> &exclude = {}) {
    require_same_shape(weights, grads.accum, "build_snip_mask");
    if (grads.sample_count == 0) {
        throw ParameterError("build_snip_mask: empty gradient snapshot");
    }
    auto idx = detail::select_top_k(weights.size(), k, exclude, [&](std::uint64_t i) {
        return std::fabs(weights.data[i]) * grads.accum.data[i];
    });
    return Mask::from_indices(weights.rows, weights.cols, idx);
}

} // namespace shira
