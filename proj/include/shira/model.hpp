#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "shira/error.hpp"
#include "shira/linalg.hpp"
#include "shira/matrix.hpp"
#include "shira/random.hpp"

namespace shira {

enum class TensorId { w1, w2 };

inline const char *tensor_name(TensorId id) { return id == TensorId::w1 ? "W1" : "W2"; }

inline TensorId parse_tensor(const std::string &s) {
    if (s == "W1" || s == "w1") {
        return TensorId::w1;
    }
    if (s == "W2" || s == "w2") {
        return TensorId::w2;
    }
    throw ParameterError("unknown tensor id: " + s);
}

/// Two-layer perceptron with tanh hidden activation. Inputs and activations
/// are column-major batches: X is in x batch, Y is out x batch.
struct ToyModel {
    DenseMatrix w1;         // hidden x in
    std::vector<double> b1; // hidden
    DenseMatrix w2;         // out x hidden
    std::vector<double> b2; // out

    std::size_t in_dim() const { return w1.cols; }
    std::size_t hidden_dim() const { return w1.rows; }
    std::size_t out_dim() const { return w2.rows; }

    const DenseMatrix &tensor(TensorId id) const { return id == TensorId::w1 ? w1 : w2; }
    DenseMatrix &tensor(TensorId id) { return id == TensorId::w1 ? w1 : w2; }
};

inline void require_consistent(const ToyModel &m) {
    if (m.w2.cols != m.w1.rows || m.b1.size() != m.w1.rows || m.b2.size() != m.w2.rows) {
        throw ShapeError("ToyModel: inconsistent layer shapes");
    }
}

/// Gaussian init scaled by 1/sqrt(fan_in); zero biases.
inline ToyModel make_model(std::size_t in, std::size_t hidden, std::size_t out,
                           std::uint64_t seed) {
    ToyModel m;
    m.w1 = seeded_gaussian(hidden, in, mix_seed(seed, 0));
    m.w2 = seeded_gaussian(out, hidden, mix_seed(seed, 1));
    const double s1 = 1.0 / std::sqrt(static_cast<double>(in));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (double &x : m.w1.data) {
        x *= s1;
    }
    for (double &x : m.w2.data) {
        x *= s2;
    }
    m.b1.assign(hidden, 0.0);
    m.b2.assign(out, 0.0);
    return m;
}

namespace detail {

// Z = W * X + b broadcast over batch columns.
inline DenseMatrix affine(const DenseMatrix &w, const std::vector<double> &b,
                          const DenseMatrix &x) {
    DenseMatrix z = matmul(w, x);
    for (std::size_t i = 0; i < z.rows; ++i) {
        for (std::size_t j = 0; j < z.cols; ++j) {
            z(i, j) += b[i];
        }
    }
    return z;
}

} // namespace detail

inline DenseMatrix forward(const ToyModel &m, const DenseMatrix &x) {
    require_consistent(m);
    if (x.rows != m.in_dim()) {
        throw ShapeError("forward: input rows " + std::to_string(x.rows) + " != in dim " +
                         std::to_string(m.in_dim()));
    }
    DenseMatrix h = detail::affine(m.w1, m.b1, x);
    for (double &v : h.data) {
        v = std::tanh(v);
    }
    return detail::affine(m.w2, m.b2, h);
}

struct ModelGrads {
    DenseMatrix w1, w2;
    std::vector<double> b1, b2;
    double loss = 0.0;
};

/// Mean squared error over an output row range [row_begin, row_end).
inline double mse(const DenseMatrix &y, const DenseMatrix &target, std::size_t row_begin,
                  std::size_t row_end) {
    require_same_shape(y, target, "mse");
    if (row_begin >= row_end || row_end > y.rows) {
        throw ParameterError("mse: bad row range");
    }
    double acc = 0.0;
    for (std::size_t i = row_begin; i < row_end; ++i) {
        for (std::size_t j = 0; j < y.cols; ++j) {
            const double d = y(i, j) - target(i, j);
            acc += d * d;
        }
    }
    return acc / (static_cast<double>(row_end - row_begin) * static_cast<double>(y.cols));
}

inline double mse(const DenseMatrix &y, const DenseMatrix &target) {
    return mse(y, target, 0, y.rows);
}

/// Backpropagation for MSE restricted to the given output rows; rows outside
/// the range contribute no gradient. Matches central finite differences to
/// 1e-5 elementwise (see tests).
inline ModelGrads backward(const ToyModel &m, const DenseMatrix &x, const DenseMatrix &target,
                           std::size_t row_begin, std::size_t row_end) {
    require_consistent(m);
    if (x.rows != m.in_dim()) {
        throw ShapeError("backward: input rows mismatch");
    }
    if (target.rows != m.out_dim() || target.cols != x.cols) {
        throw ShapeError("backward: target shape mismatch");
    }
    if (row_begin >= row_end || row_end > m.out_dim()) {
        throw ParameterError("backward: bad row range");
    }

    DenseMatrix z = detail::affine(m.w1, m.b1, x);
    DenseMatrix h = z;
    for (double &v : h.data) {
        v = std::tanh(v);
    }
    DenseMatrix y = detail::affine(m.w2, m.b2, h);

    ModelGrads g;
    g.loss = mse(y, target, row_begin, row_end);

    const double scale =
        2.0 / (static_cast<double>(row_end - row_begin) * static_cast<double>(y.cols));
    DenseMatrix dy(y.rows, y.cols);
    for (std::size_t i = row_begin; i < row_end; ++i) {
        for (std::size_t j = 0; j < y.cols; ++j) {
            dy(i, j) = scale * (y(i, j) - target(i, j));
        }
    }

    g.w2 = matmul(dy, transpose(h));
    g.b2.assign(m.out_dim(), 0.0);
    for (std::size_t i = 0; i < dy.rows; ++i) {
        for (std::size_t j = 0; j < dy.cols; ++j) {
            g.b2[i] += dy(i, j);
        }
    }

    DenseMatrix dh = matmul(transpose(m.w2), dy);
    for (std::size_t i = 0; i < dh.data.size(); ++i) {
        dh.data[i] *= 1.0 - h.data[i] * h.data[i];
    }
    g.w1 = matmul(dh, transpose(x));
    g.b1.assign(m.hidden_dim(), 0.0);
    for (std::size_t i = 0; i < dh.rows; ++i) {
        for (std::size_t j = 0; j < dh.cols; ++j) {
            g.b1[i] += dh(i, j);
        }
    }
    return g;
}

inline ModelGrads backward(const ToyModel &m, const DenseMatrix &x, const DenseMatrix &target) {
    return backward(m, x, target, 0, m.out_dim());
}

// ============================================================================
// LoRA adapters
// ============================================================================

enum class ScalingRule { alpha_over_r, alpha_over_sqrt_r, unit };

inline const char *scaling_rule_name(ScalingRule r) {
    switch (r) {
    case ScalingRule::alpha_over_r:
        return "alpha_over_r";
    case ScalingRule::alpha_over_sqrt_r:
        return "alpha_over_sqrt_r";
    default:
        return "unit";
    }
}

inline ScalingRule parse_scaling_rule(const std::string &s) {
    if (s == "alpha_over_r") {
        return ScalingRule::alpha_over_r;
    }
    if (s == "alpha_over_sqrt_r") {
        return ScalingRule::alpha_over_sqrt_r;
    }
    if (s == "unit") {
        return ScalingRule::unit;
    }
    throw ParameterError("unknown scaling rule: " + s);
}

/// Low-rank factor pair; the fused contribution to the target tensor is
/// effective_scale * (A * B) with A of shape n x r and B of shape r x m.
struct LoraAdapter {
    std::string target;
    DenseMatrix a; // n x r
    DenseMatrix b; // r x m
    std::size_t r = 0;
    double alpha = 1.0;
    ScalingRule rule = ScalingRule::alpha_over_r;
};

inline double effective_scale(const LoraAdapter &ad) {
    switch (ad.rule) {
    case ScalingRule::alpha_over_r:
        return ad.alpha / static_cast<double>(ad.r);
    case ScalingRule::alpha_over_sqrt_r:
        return ad.alpha / std::sqrt(static_cast<double>(ad.r));
    default:
        return 1.0;
    }
}

/// A is Gaussian, B starts at zero so the initial contribution vanishes.
inline LoraAdapter init_lora(const std::string &target, std::size_t n, std::size_t m,
                             std::size_t r, double alpha, ScalingRule rule, std::uint64_t seed) {
    if (r < 1 || r > std::min(n, m)) {
        throw ParameterError("init_lora: rank out of range");
    }
    LoraAdapter ad;
    ad.target = target;
    ad.a = seeded_gaussian(n, r, seed);
    ad.b = DenseMatrix(r, m, 0.0);
    ad.r = r;
    ad.alpha = alpha;
    ad.rule = rule;
    return ad;
}

} // namespace shira
