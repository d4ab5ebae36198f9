#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "shira/error.hpp"
#include "shira/linalg.hpp"
#include "shira/matrix.hpp"
#include "shira/model.hpp"

namespace shira {

// ============================================================================
// SparseAdapter
// ============================================================================

/// Sparse delta S = W_new - W over one weight tensor, stored as strictly
/// increasing flat row-major indices plus values. Values extracted from
/// training are rounded through f32, the on-disk precision, so adapters
/// round-trip the file format bit-exactly.
struct SparseAdapter {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint64_t> indices;
    std::vector<double> values;

    double density() const {
        return static_cast<double>(indices.size()) / (static_cast<double>(rows) * static_cast<double>(cols));
    }

    void validate() const {
        if (rows == 0 || cols == 0) {
            throw ParameterError("SparseAdapter: dimensions must be positive");
        }
        if (indices.size() != values.size()) {
            throw ParameterError("SparseAdapter: indices/values length mismatch");
        }
        const std::uint64_t total = static_cast<std::uint64_t>(rows) * cols;
        for (std::size_t i = 0; i < indices.size(); ++i) {
            if (indices[i] >= total) {
                throw ParameterError("SparseAdapter: index out of range");
            }
            if (i > 0 && indices[i] <= indices[i - 1]) {
                throw ParameterError("SparseAdapter: indices not strictly increasing");
            }
            if (!std::isfinite(values[i])) {
                throw ParameterError("SparseAdapter: non-finite value");
            }
        }
    }
};

/// Positions where the tensors differ, with deltas w_new - w_base narrowed to
/// f32. A weight that trained back to its exact initial value is dropped.
inline SparseAdapter extract(const DenseMatrix &w_new, const DenseMatrix &w_base,
                             const std::string &name) {
    require_same_shape(w_new, w_base, "extract");
    SparseAdapter a;
    a.name = name;
    a.rows = w_new.rows;
    a.cols = w_new.cols;
    for (std::size_t i = 0; i < w_new.data.size(); ++i) {
        if (w_new.data[i] != w_base.data[i]) {
            const double delta =
                static_cast<double>(static_cast<float>(w_new.data[i] - w_base.data[i]));
            if (delta != 0.0) {
                a.indices.push_back(i);
                a.values.push_back(delta);
            }
        }
    }
    return a;
}

/// W + alpha*S by indexed overwrite: only listed positions are written, all
/// other entries stay bit-identical to the base. alpha = 0 writes nothing.
inline DenseMatrix apply(const DenseMatrix &w_base, const SparseAdapter &a, double alpha) {
    if (w_base.rows != a.rows || w_base.cols != a.cols) {
        throw ShapeError("apply: adapter shape " + std::to_string(a.rows) + "x" +
                         std::to_string(a.cols) + " does not match weights");
    }
    DenseMatrix out = w_base;
    if (alpha == 0.0) {
        return out;
    }
    const std::uint64_t total = out.data.size();
    for (std::size_t k = 0; k < a.indices.size(); ++k) {
        const std::uint64_t idx = a.indices[k];
        if (idx >= total) {
            throw FormatError("apply: corrupt adapter, index " + std::to_string(idx) +
                              " out of range");
        }
        out.data[idx] = w_base.data[idx] + alpha * a.values[k];
    }
    return out;
}

inline DenseMatrix to_dense(const SparseAdapter &a) {
    DenseMatrix m(a.rows, a.cols);
    for (std::size_t k = 0; k < a.indices.size(); ++k) {
        m.data[a.indices[k]] = a.values[k];
    }
    return m;
}

// ============================================================================
// LoRA fuse / unfuse
// ============================================================================

/// W + effective_scale * (A * B), a dense update of every entry.
inline DenseMatrix fuse_lora(const DenseMatrix &w_base, const LoraAdapter &ad) {
    if (ad.a.rows != w_base.rows || ad.b.cols != w_base.cols || ad.a.cols != ad.b.rows) {
        throw ShapeError("fuse_lora: factor shapes do not match base weights");
    }
    DenseMatrix p = matmul(ad.a, ad.b);
    const double s = effective_scale(ad);
    DenseMatrix out = w_base;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] += s * p.data[i];
    }
    return out;
}

inline DenseMatrix unfuse_lora(const DenseMatrix &w_fused, const LoraAdapter &ad) {
    if (ad.a.rows != w_fused.rows || ad.b.cols != w_fused.cols || ad.a.cols != ad.b.rows) {
        throw ShapeError("unfuse_lora: factor shapes do not match weights");
    }
    DenseMatrix p = matmul(ad.a, ad.b);
    const double s = effective_scale(ad);
    DenseMatrix out = w_fused;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] -= s * p.data[i];
    }
    return out;
}

// ============================================================================
// Multi-adapter fusion
// ============================================================================

struct AlphaAdapter {
    const SparseAdapter *adapter;
    double alpha;
};

struct OverlapReport {
    // (adapter i, adapter j, common index count) for every i < j
    std::vector<std::array<std::size_t, 3>> pair_overlaps;
    std::size_t touched = 0; // distinct positions written
};

struct FuseResult {
    DenseMatrix weights;
    OverlapReport overlap;
};

namespace detail {

inline std::size_t sorted_intersection_count(const std::vector<std::uint64_t> &a,
                                             const std::vector<std::uint64_t> &b) {
    std::size_t i = 0, j = 0, n = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] < b[j]) {
            ++i;
        } else if (b[j] < a[i]) {
            ++j;
        } else {
            ++n;
            ++i;
            ++j;
        }
    }
    return n;
}

} // namespace detail

/// W + sum_i alpha_i * S_i; deltas at common indices are summed in list
/// order. With a single adapter this is exactly `apply`.
inline FuseResult fuse_multi(const DenseMatrix &w_base, const std::vector<AlphaAdapter> &parts) {
    FuseResult res;
    res.weights = w_base;
    for (const AlphaAdapter &p : parts) {
        if (p.adapter->rows != w_base.rows || p.adapter->cols != w_base.cols) {
            throw ShapeError("fuse_multi: adapter '" + p.adapter->name +
                             "' shape does not match base weights");
        }
    }
    // Accumulated delta per touched index, preserving list order at overlaps.
    std::vector<std::uint64_t> touched;
    std::vector<double> delta;
    {
        std::vector<std::uint64_t> all;
        for (const AlphaAdapter &p : parts) {
            all.insert(all.end(), p.adapter->indices.begin(), p.adapter->indices.end());
        }
        std::sort(all.begin(), all.end());
        all.erase(std::unique(all.begin(), all.end()), all.end());
        touched = std::move(all);
    }
    delta.assign(touched.size(), 0.0);
    for (const AlphaAdapter &p : parts) {
        for (std::size_t k = 0; k < p.adapter->indices.size(); ++k) {
            const auto it = std::lower_bound(touched.begin(), touched.end(), p.adapter->indices[k]);
            delta[static_cast<std::size_t>(it - touched.begin())] +=
                p.alpha * p.adapter->values[k];
        }
    }
    for (std::size_t k = 0; k < touched.size(); ++k) {
        res.weights.data[touched[k]] = w_base.data[touched[k]] + delta[k];
    }
    res.overlap.touched = touched.size();
    for (std::size_t i = 0; i < parts.size(); ++i) {
        for (std::size_t j = i + 1; j < parts.size(); ++j) {
            res.overlap.pair_overlaps.push_back(
                {i, j,
                 detail::sorted_intersection_count(parts[i].adapter->indices,
                                                   parts[j].adapter->indices)});
        }
    }
    return res;
}

} // namespace shira
