#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "shira/adapter.hpp"
#include "shira/error.hpp"
#include "shira/mask.hpp"
#include "shira/matrix.hpp"
#include "shira/model.hpp"
#include "shira/random.hpp"

namespace shira {

// ============================================================================
// Teacher-student tasks
// ============================================================================

/// Synthetic finetuning target: a pretrained teacher whose weights get a
/// sparse perturbation; the student starts from the unperturbed teacher and
/// has to recover the perturbed function. Loss and evaluation can be
/// restricted to a block of output rows so several tasks can share one model.
struct TeacherTask {
    ToyModel teacher; // pretrained (unperturbed) weights
    SparseAdapter perturbation;
    TensorId pert_tensor = TensorId::w2;
    std::uint64_t input_seed = 0;
    std::size_t eval_rows_begin = 0;
    std::size_t eval_rows_end = 0;
};

inline constexpr std::uint64_t kHeldOutStream = 0x48454C44; // disjoint from step streams

inline DenseMatrix task_inputs(const TeacherTask &task, std::size_t batch, std::uint64_t stream) {
    return seeded_gaussian(task.teacher.in_dim(), batch, mix_seed(task.input_seed, stream));
}

inline ToyModel perturbed_teacher(const TeacherTask &task) {
    ToyModel t = task.teacher;
    t.tensor(task.pert_tensor) = apply(t.tensor(task.pert_tensor), task.perturbation, 1.0);
    return t;
}

namespace detail {

inline SparseAdapter random_perturbation(const DenseMatrix &shape_like, std::size_t count,
                                         double value_scale, Rng &rng, const std::string &name,
                                         std::size_t row_begin, std::size_t row_end) {
    std::vector<std::uint64_t> pool;
    pool.reserve((row_end - row_begin) * shape_like.cols);
    for (std::size_t i = row_begin; i < row_end; ++i) {
        for (std::size_t j = 0; j < shape_like.cols; ++j) {
            pool.push_back(i * shape_like.cols + j);
        }
    }
    if (count > pool.size()) {
        throw ParameterError("random_perturbation: count exceeds block size");
    }
    // draw `count` distinct pool slots
    std::vector<std::uint64_t> slots = sample_indices(pool.size(), count, rng);
    SparseAdapter pert;
    pert.name = name;
    pert.rows = shape_like.rows;
    pert.cols = shape_like.cols;
    pert.indices.reserve(count);
    for (std::uint64_t s : slots) {
        pert.indices.push_back(pool[s]);
    }
    std::sort(pert.indices.begin(), pert.indices.end());
    pert.values.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        pert.values.push_back(value_scale * rng.gaussian());
    }
    return pert;
}

} // namespace detail

/// Full-range task with a density-bounded perturbation on W2.
inline TeacherTask make_teacher_task(std::size_t in, std::size_t hidden, std::size_t out,
                                     double pert_density, std::uint64_t seed) {
    if (pert_density <= 0.0 || pert_density > 0.02) {
        throw ParameterError("make_teacher_task: perturbation density must be in (0, 0.02]");
    }
    TeacherTask task;
    task.teacher = make_model(in, hidden, out, mix_seed(seed, 100));
    Rng rng(mix_seed(seed, 101));
    const std::size_t total = out * hidden;
    const std::size_t count =
        std::max<std::size_t>(1, static_cast<std::size_t>(pert_density * static_cast<double>(total)));
    task.perturbation =
        detail::random_perturbation(task.teacher.w2, count, 0.5, rng, "W2", 0, out);
    task.pert_tensor = TensorId::w2;
    task.input_seed = mix_seed(seed, 102);
    task.eval_rows_begin = 0;
    task.eval_rows_end = out;
    return task;
}

/// Two tasks over one shared teacher, with perturbations on disjoint output
/// row blocks of W2 and per-task loss restricted to the owning block. Their
/// oracle masks never overlap by construction.
inline std::pair<TeacherTask, TeacherTask> make_disjoint_tasks(std::size_t in, std::size_t hidden,
                                                               std::size_t out,
                                                               double per_task_density,
                                                               std::uint64_t seed) {
    if (per_task_density <= 0.0 || per_task_density > 0.01) {
        throw ParameterError("make_disjoint_tasks: per-task density must be in (0, 0.01]");
    }
    if (out < 2) {
        throw ParameterError("make_disjoint_tasks: need at least 2 output rows");
    }
    ToyModel teacher = make_model(in, hidden, out, mix_seed(seed, 200));
    Rng rng(mix_seed(seed, 201));
    const std::size_t total = out * hidden;
    const std::size_t count = std::max<std::size_t>(
        1, static_cast<std::size_t>(per_task_density * static_cast<double>(total)));
    const std::size_t split = out / 2;

    TeacherTask a, b;
    a.teacher = teacher;
    b.teacher = teacher;
    a.perturbation = detail::random_perturbation(teacher.w2, count, 0.5, rng, "W2", 0, split);
    b.perturbation = detail::random_perturbation(teacher.w2, count, 0.5, rng, "W2", split, out);
    a.pert_tensor = b.pert_tensor = TensorId::w2;
    a.input_seed = mix_seed(seed, 202);
    b.input_seed = mix_seed(seed, 203);
    a.eval_rows_begin = 0;
    a.eval_rows_end = split;
    b.eval_rows_begin = split;
    b.eval_rows_end = out;
    return {std::move(a), std::move(b)};
}

// ============================================================================
// Training
// ============================================================================

enum class Optimizer { sgd, adam };

struct TrainConfig {
    double learning_rate = 0.5;
    std::size_t steps = 2000;
    std::size_t batch_size = 32;
    Optimizer optimizer = Optimizer::sgd;
    std::uint64_t seed = 0;
    // loss is MSE
};

struct LogRow {
    std::size_t step;
    double loss;
    double grad_norm_masked;
    double grad_norm_total;
};

/// Per-tensor trainable masks; a tensor without a mask stays frozen. Biases
/// are frozen unless train_biases is set.
struct MaskSet {
    std::optional<Mask> w1;
    std::optional<Mask> w2;
    bool train_biases = false;
};

struct ShiraTrainResult {
    ToyModel model;
    std::vector<LogRow> log;
};

namespace detail {

struct AdamState {
    std::vector<double> m, v;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

inline double grad_norm_sq(const DenseMatrix &g) {
    double s = 0.0;
    for (double x : g.data) {
        s += x * x;
    }
    return s;
}

inline double grad_norm_sq_masked(const DenseMatrix &g, const std::vector<std::uint64_t> &idx) {
    double s = 0.0;
    for (std::uint64_t i : idx) {
        s += g.data[i] * g.data[i];
    }
    return s;
}

// Optimizer step over the masked positions only; untouched entries keep their
// exact bit pattern.
inline void masked_update(DenseMatrix &w, const DenseMatrix &g,
                          const std::vector<std::uint64_t> &idx, const TrainConfig &cfg,
                          AdamState *adam, std::size_t t) {
    if (cfg.optimizer == Optimizer::sgd) {
        for (std::uint64_t i : idx) {
            w.data[i] -= cfg.learning_rate * g.data[i];
        }
        return;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::uint64_t i : idx) {
        adam->m[i] = b1 * adam->m[i] + (1.0 - b1) * g.data[i];
        adam->v[i] = b2 * adam->v[i] + (1.0 - b2) * g.data[i] * g.data[i];
        const double mh = adam->m[i] / c1;
        const double vh = adam->v[i] / c2;
        w.data[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + eps);
    }
}

} // namespace detail

/// Gradient-masked finetuning: gradients are computed in full, multiplied by
/// the mask right before the optimizer step, so every weight outside the mask
/// support stays bit-identical to its initial value.
inline ShiraTrainResult train_shira(const ToyModel &init, const MaskSet &masks,
                                    const TeacherTask &task, const TrainConfig &cfg) {
    require_consistent(init);
    if (masks.w1 && (masks.w1->rows != init.w1.rows || masks.w1->cols != init.w1.cols)) {
        throw ShapeError("train_shira: W1 mask shape mismatch");
    }
    if (masks.w2 && (masks.w2->rows != init.w2.rows || masks.w2->cols != init.w2.cols)) {
        throw ShapeError("train_shira: W2 mask shape mismatch");
    }
    if (cfg.batch_size < 1) {
        throw ParameterError("train_shira: batch_size must be >= 1");
    }

    ShiraTrainResult res;
    res.model = init;
    const std::vector<std::uint64_t> idx1 = masks.w1 ? masks.w1->to_indices()
                                                     : std::vector<std::uint64_t>{};
    const std::vector<std::uint64_t> idx2 = masks.w2 ? masks.w2->to_indices()
                                                     : std::vector<std::uint64_t>{};
    std::optional<detail::AdamState> adam1, adam2, adam_b1, adam_b2;
    if (cfg.optimizer == Optimizer::adam) {
        adam1.emplace(init.w1.size());
        adam2.emplace(init.w2.size());
        adam_b1.emplace(init.b1.size());
        adam_b2.emplace(init.b2.size());
    }

    const ToyModel target_model = perturbed_teacher(task);
    res.log.reserve(cfg.steps);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        DenseMatrix x = task_inputs(task, cfg.batch_size, step);
        DenseMatrix t = forward(target_model, x);
        ModelGrads g = backward(res.model, x, t, task.eval_rows_begin, task.eval_rows_end);
        if (!std::isfinite(g.loss)) {
            throw TrainingError("train_shira: loss diverged", step);
        }
        const double total =
            std::sqrt(detail::grad_norm_sq(g.w1) + detail::grad_norm_sq(g.w2));
        const double masked = std::sqrt(detail::grad_norm_sq_masked(g.w1, idx1) +
                                        detail::grad_norm_sq_masked(g.w2, idx2));
        detail::masked_update(res.model.w1, g.w1, idx1, cfg, adam1 ? &*adam1 : nullptr, step + 1);
        detail::masked_update(res.model.w2, g.w2, idx2, cfg, adam2 ? &*adam2 : nullptr, step + 1);
        if (masks.train_biases) {
            for (std::size_t i = 0; i < res.model.b1.size(); ++i) {
                res.model.b1[i] -= cfg.learning_rate * g.b1[i];
            }
            for (std::size_t i = 0; i < res.model.b2.size(); ++i) {
                res.model.b2[i] -= cfg.learning_rate * g.b2[i];
            }
        }
        res.log.push_back({step, g.loss, masked, total});
    }
    return res;
}

// ============================================================================
// LoRA baseline training
// ============================================================================

struct LoraTrainResult {
    std::vector<LoraAdapter> adapters;
    std::vector<LogRow> log;
};

/// Trains LoRA factors on the target tensors; base weights never change. The
/// forward pass sees W + effective_scale * (A * B). Pass `initial` to start
/// from specific factors instead of the default init.
inline LoraTrainResult train_lora(const ToyModel &init, const std::vector<TensorId> &targets,
                                  std::size_t r, double alpha, ScalingRule rule,
                                  const TeacherTask &task, const TrainConfig &cfg,
                                  std::vector<LoraAdapter> initial = {}) {
    require_consistent(init);
    if (targets.empty()) {
        throw ParameterError("train_lora: need at least one target tensor");
    }
    LoraTrainResult res;
    if (!initial.empty()) {
        if (initial.size() != targets.size()) {
            throw ParameterError("train_lora: initial adapters do not match targets");
        }
        res.adapters = std::move(initial);
    } else {
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const DenseMatrix &w = init.tensor(targets[i]);
            res.adapters.push_back(init_lora(tensor_name(targets[i]), w.rows, w.cols, r, alpha,
                                             rule, mix_seed(cfg.seed, 300 + i)));
        }
    }

    std::vector<detail::AdamState> adam_a, adam_b;
    if (cfg.optimizer == Optimizer::adam) {
        for (const LoraAdapter &ad : res.adapters) {
            adam_a.emplace_back(ad.a.size());
            adam_b.emplace_back(ad.b.size());
        }
    }

    const ToyModel target_model = perturbed_teacher(task);
    res.log.reserve(cfg.steps);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        ToyModel eff = init;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            eff.tensor(targets[i]) = fuse_lora(init.tensor(targets[i]), res.adapters[i]);
        }
        DenseMatrix x = task_inputs(task, cfg.batch_size, step);
        DenseMatrix t = forward(target_model, x);
        ModelGrads g = backward(eff, x, t, task.eval_rows_begin, task.eval_rows_end);
        if (!std::isfinite(g.loss)) {
            throw TrainingError("train_lora: loss diverged", step);
        }
        const double total = std::sqrt(detail::grad_norm_sq(g.w1) + detail::grad_norm_sq(g.w2));
        double factor_sq = 0.0;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            LoraAdapter &ad = res.adapters[i];
            const DenseMatrix &dw = targets[i] == TensorId::w1 ? g.w1 : g.w2;
            const double s = effective_scale(ad);
            DenseMatrix da = scaled(matmul(dw, transpose(ad.b)), s);
            DenseMatrix db = scaled(matmul(transpose(ad.a), dw), s);
            factor_sq += detail::grad_norm_sq(da) + detail::grad_norm_sq(db);
            if (cfg.optimizer == Optimizer::sgd) {
                for (std::size_t k = 0; k < ad.a.data.size(); ++k) {
                    ad.a.data[k] -= cfg.learning_rate * da.data[k];
                }
                for (std::size_t k = 0; k < ad.b.data.size(); ++k) {
                    ad.b.data[k] -= cfg.learning_rate * db.data[k];
                }
            } else {
                constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
                const double c1 = 1.0 - std::pow(b1, static_cast<double>(step + 1));
                const double c2 = 1.0 - std::pow(b2, static_cast<double>(step + 1));
                auto adam_step = [&](DenseMatrix &w, const DenseMatrix &gw, detail::AdamState &st) {
                    for (std::size_t k = 0; k < w.data.size(); ++k) {
                        st.m[k] = b1 * st.m[k] + (1.0 - b1) * gw.data[k];
                        st.v[k] = b2 * st.v[k] + (1.0 - b2) * gw.data[k] * gw.data[k];
                        w.data[k] -= cfg.learning_rate * (st.m[k] / c1) / (std::sqrt(st.v[k] / c2) + eps);
                    }
                };
                adam_step(ad.a, da, adam_a[i]);
                adam_step(ad.b, db, adam_b[i]);
            }
        }
        res.log.push_back({step, g.loss, std::sqrt(factor_sq), total});
    }
    return res;
}

// ============================================================================
// Evaluation and logging
// ============================================================================

inline double held_out_mse(const ToyModel &model, const TeacherTask &task,
                           std::size_t batch = 256) {
    DenseMatrix x = task_inputs(task, batch, kHeldOutStream);
    DenseMatrix t = forward(perturbed_teacher(task), x);
    DenseMatrix y = forward(model, x);
    return mse(y, t, task.eval_rows_begin, task.eval_rows_end);
}

inline void write_log_csv(const std::string &path, const std::vector<LogRow> &log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    out << "step,loss,grad_norm_masked,grad_norm_total\n";
    char buf[160];
    for (const LogRow &r : log) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", r.step, r.loss,
                      r.grad_norm_masked, r.grad_norm_total);
        out << buf;
    }
}

} // namespace shira
