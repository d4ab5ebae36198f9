// Command-line front end for the SHiRA toolkit: mask building, gradient-masked
// training, adapter extraction/application/fusion, orthogonality simulation,
// lemma verification and the switching benchmark.
//
// Exit codes: 0 success, 1 usage or file-format error, 2 numerical failure
// (training divergence or a failed lemma check).

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "shira/shira.hpp"

namespace fs = std::filesystem;
using namespace shira;

namespace {

// ----------------------------------------------------------------------------
// shared option bundles
// ----------------------------------------------------------------------------

struct TaskOptions {
    std::uint64_t task_seed = 1;
    std::size_t in = 64, hidden = 128, out = 32;
    double pert_density = 0.02;
};

void add_task_options(CLI::App *cmd, TaskOptions &t) {
    cmd->add_option("--task-seed", t.task_seed, "Teacher task seed");
    cmd->add_option("--in", t.in, "Model input width");
    cmd->add_option("--hidden", t.hidden, "Model hidden width");
    cmd->add_option("--out-dim", t.out, "Model output width");
    cmd->add_option("--pert-density", t.pert_density, "Teacher perturbation density (<= 0.02)");
}

TeacherTask build_task(const TaskOptions &t) {
    return make_teacher_task(t.in, t.hidden, t.out, t.pert_density, t.task_seed);
}

std::string join_out(const std::string &dir, const std::string &name) {
    return (fs::path(dir) / name).string();
}

std::vector<std::string> split_list(const std::string &csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

std::vector<std::size_t> parse_dims(const std::string &csv) {
    std::vector<std::size_t> dims;
    for (const std::string &s : split_list(csv)) {
        dims.push_back(static_cast<std::size_t>(std::stoull(s)));
    }
    return dims;
}

// ----------------------------------------------------------------------------
// build-mask
// ----------------------------------------------------------------------------

struct BuildMaskOptions {
    std::string strategy;
    std::size_t rows = 0, cols = 0, dim = 0;
    std::size_t frequency = 0;
    std::string axis = "rows";
    bool diagonal = false;
    double p = -1.0;
    double density = 0.02;
    std::size_t k = 0;
    std::string model_path, exclude_path, out_file;
    std::string tensor = "W2";
    std::size_t calib = 4;
    std::uint64_t seed = 0;
    TaskOptions task;
    std::string out_dir = ".";
};

int run_build_mask(const BuildMaskOptions &o) {
    std::size_t rows = o.rows, cols = o.cols;
    if (o.dim > 0) {
        rows = cols = o.dim;
    }
    const MaskStrategy strategy = parse_strategy(o.strategy);

    std::unordered_set<std::uint64_t> exclude;
    if (!o.exclude_path.empty()) {
        NamedMask prev = load_mask(o.exclude_path);
        for (std::uint64_t i : prev.mask.to_indices()) {
            exclude.insert(i);
        }
    }

    Mask mask;
    switch (strategy) {
    case MaskStrategy::strct: {
        if (rows == 0 || cols == 0) {
            throw ParameterError("build-mask: struct needs --rows/--cols or --dim");
        }
        std::size_t f = o.frequency;
        if (f == 0) {
            // derive the stride from the requested density
            const std::size_t axis_len = o.axis == "cols" ? cols : rows;
            f = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(1.0 / o.density)));
            f = std::min(f, axis_len);
        }
        mask = build_struct_mask(rows, cols, f, o.axis == "cols" ? Axis::cols : Axis::rows,
                                 o.diagonal);
        if (mask.stride_warning) {
            std::cerr << "warning: frequency exceeds the " << o.axis
                      << " axis; mask degraded to diagonal only\n";
        }
        break;
    }
    case MaskStrategy::rand: {
        if (rows == 0 || cols == 0) {
            throw ParameterError("build-mask: rand needs --rows/--cols or --dim");
        }
        const double p = o.p >= 0.0 ? o.p : o.density;
        mask = build_random_mask(rows, cols, p, o.seed);
        if (mask.set_count == 0) {
            std::cerr << "warning: empty mask (p = " << p << ")\n";
        }
        break;
    }
    case MaskStrategy::wm: {
        if (o.model_path.empty()) {
            throw CLI::ValidationError("build-mask", "--strategy wm requires --model");
        }
        ToyModel m = load_model(o.model_path);
        const DenseMatrix &w = m.tensor(parse_tensor(o.tensor));
        const std::size_t k =
            o.k > 0 ? o.k
                    : std::max<std::size_t>(1, static_cast<std::size_t>(
                                                   o.density * static_cast<double>(w.size())));
        mask = build_wm_mask(w, k, exclude);
        rows = w.rows;
        cols = w.cols;
        break;
    }
    case MaskStrategy::grad:
    case MaskStrategy::snip: {
        TeacherTask task = build_task(o.task);
        ToyModel model = o.model_path.empty() ? task.teacher : load_model(o.model_path);
        ToyModel target = perturbed_teacher(task);
        std::vector<std::pair<DenseMatrix, DenseMatrix>> batches;
        for (std::size_t b = 0; b < o.calib; ++b) {
            DenseMatrix x = task_inputs(task, 32, 0x43414C49u + b);
            batches.emplace_back(x, forward(target, x));
        }
        ModelGradSnapshots snaps = collect_gradients(model, batches);
        const TensorId tid = parse_tensor(o.tensor);
        const GradSnapshot &snap = tid == TensorId::w1 ? snaps.w1 : snaps.w2;
        const DenseMatrix &w = model.tensor(tid);
        const std::size_t k =
            o.k > 0 ? o.k
                    : std::max<std::size_t>(1, static_cast<std::size_t>(
                                                   o.density * static_cast<double>(w.size())));
        mask = strategy == MaskStrategy::grad ? build_grad_mask(snap, k, exclude)
                                              : build_snip_mask(w, snap, k, exclude);
        rows = w.rows;
        cols = w.cols;
        break;
    }
    }

    const std::string out_file =
        o.out_file.empty() ? join_out(o.out_dir, "mask.shra") : o.out_file;
    save_mask(out_file, mask, o.tensor);

    std::printf("strategy: %s\n", strategy_name(strategy));
    std::printf("shape: %zux%zu, bits set: %zu, density: %.6f\n", mask.rows, mask.cols,
                mask.set_count, mask.density());
    if (std::min(mask.rows, mask.cols) <= 512) {
        RankReport rep = mask_rank_report(mask, o.seed);
        std::printf("pattern rank: %zu of %zu\n", rep.rank, std::min(mask.rows, mask.cols));
    } else {
        std::printf("pattern rank: skipped (dims above 512)\n");
    }
    std::printf("wrote %s\n", out_file.c_str());
    return 0;
}

// ----------------------------------------------------------------------------
// train
// ----------------------------------------------------------------------------

struct TrainOptions {
    std::string adapter = "shira";
    std::string mask_path = "oracle";
    std::size_t rank = 4;
    double alpha = 8.0;
    std::string scaling = "alpha_over_r";
    std::string targets = "W2";
    double lr = 0.5;
    std::size_t steps = 2000;
    std::size_t batch = 32;
    std::string optimizer = "sgd";
    std::uint64_t seed = 0;
    TaskOptions task;
    std::string out_dir = ".";
};

int run_train(const TrainOptions &o) {
    TeacherTask task = build_task(o.task);
    TrainConfig cfg;
    cfg.learning_rate = o.lr;
    cfg.steps = o.steps;
    cfg.batch_size = o.batch;
    cfg.optimizer = o.optimizer == "adam" ? Optimizer::adam : Optimizer::sgd;
    cfg.seed = o.seed;

    Mask oracle = Mask::from_indices(task.perturbation.rows, task.perturbation.cols,
                                     task.perturbation.indices);
    save_mask(join_out(o.out_dir, "oracle_mask.shra"), oracle, "W2");

    if (o.adapter == "shira") {
        MaskSet masks;
        TensorId tid = TensorId::w2;
        if (o.mask_path == "oracle") {
            masks.w2 = oracle;
        } else {
            NamedMask nm = load_mask(o.mask_path);
            tid = parse_tensor(nm.name);
            if (tid == TensorId::w1) {
                masks.w1 = nm.mask;
            } else {
                masks.w2 = nm.mask;
            }
        }
        ShiraTrainResult res = train_shira(task.teacher, masks, task, cfg);
        save_model(join_out(o.out_dir, "model.shmd"), res.model);
        SparseAdapter adapter =
            extract(res.model.tensor(tid), task.teacher.tensor(tid), tensor_name(tid));
        save_adapter(join_out(o.out_dir, "adapter.shra"), adapter);
        write_log_csv(join_out(o.out_dir, "train_log.csv"), res.log);
        std::printf("final train loss: %.6e\n", res.log.empty() ? 0.0 : res.log.back().loss);
        std::printf("held-out mse: %.6e\n", held_out_mse(res.model, task));
        std::printf("adapter nnz: %zu (density %.5f)\n", adapter.indices.size(), adapter.density());
        return 0;
    }
    if (o.adapter == "lora") {
        std::vector<TensorId> targets;
        for (const std::string &t : split_list(o.targets)) {
            targets.push_back(parse_tensor(t));
        }
        LoraTrainResult res = train_lora(task.teacher, targets, o.rank, o.alpha,
                                         parse_scaling_rule(o.scaling), task, cfg);
        ToyModel fused = task.teacher;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            fused.tensor(targets[i]) = fuse_lora(task.teacher.tensor(targets[i]), res.adapters[i]);
            save_lora(join_out(o.out_dir, std::string("lora_") + tensor_name(targets[i]) + ".shlf"),
                      res.adapters[i]);
        }
        save_model(join_out(o.out_dir, "model.shmd"), fused);
        write_log_csv(join_out(o.out_dir, "train_log.csv"), res.log);
        std::printf("final train loss: %.6e\n", res.log.empty() ? 0.0 : res.log.back().loss);
        std::printf("held-out mse: %.6e\n", held_out_mse(fused, task));
        return 0;
    }
    throw CLI::ValidationError("train", "--adapter must be shira or lora");
}

// ----------------------------------------------------------------------------
// extract / apply / fuse
// ----------------------------------------------------------------------------

struct ExtractOptions {
    std::string base_path, tuned_path, tensor = "W2", out_file;
    std::string out_dir = ".";
};

int run_extract(const ExtractOptions &o) {
    ToyModel base = load_model(o.base_path);
    ToyModel tuned = load_model(o.tuned_path);
    TensorId tid = parse_tensor(o.tensor);
    SparseAdapter a = extract(tuned.tensor(tid), base.tensor(tid), tensor_name(tid));
    const std::string out = o.out_file.empty() ? join_out(o.out_dir, "adapter.shra") : o.out_file;
    save_adapter(out, a);
    std::printf("extracted %zu deltas (density %.5f) -> %s\n", a.indices.size(), a.density(),
                out.c_str());
    return 0;
}

struct ApplyOptions {
    std::string model_path, adapter_path, out_file;
    double alpha = 1.0;
    std::string out_dir = ".";
};

int run_apply(const ApplyOptions &o) {
    ToyModel model = load_model(o.model_path);
    SparseAdapter a = load_adapter(o.adapter_path);
    TensorId tid = parse_tensor(a.name);
    model.tensor(tid) = apply(model.tensor(tid), a, o.alpha);
    const std::string out = o.out_file.empty() ? join_out(o.out_dir, "model_out.shmd") : o.out_file;
    save_model(out, model);
    std::printf("applied '%s' with alpha %g -> %s\n", a.name.c_str(), o.alpha, out.c_str());
    return 0;
}

struct FuseOptions {
    std::string model_path, adapters_csv, alphas_csv, out_file;
    std::string out_dir = ".";
};

int run_fuse(const FuseOptions &o) {
    ToyModel model = load_model(o.model_path);
    std::vector<SparseAdapter> adapters;
    for (const std::string &p : split_list(o.adapters_csv)) {
        adapters.push_back(load_adapter(p));
    }
    if (adapters.empty()) {
        throw CLI::ValidationError("fuse", "--adapters needs at least one file");
    }
    std::vector<double> alphas(adapters.size(), 1.0);
    if (!o.alphas_csv.empty()) {
        std::vector<std::string> parts = split_list(o.alphas_csv);
        if (parts.size() != adapters.size()) {
            throw CLI::ValidationError("fuse", "--alphas count must match --adapters");
        }
        for (std::size_t i = 0; i < parts.size(); ++i) {
            alphas[i] = std::stod(parts[i]);
        }
    }
    const std::string tensor = adapters.front().name;
    for (const SparseAdapter &a : adapters) {
        if (a.name != tensor) {
            throw ParameterError("fuse: adapters target different tensors ('" + tensor + "' vs '" +
                                 a.name + "')");
        }
    }
    TensorId tid = parse_tensor(tensor);
    std::vector<AlphaAdapter> parts;
    for (std::size_t i = 0; i < adapters.size(); ++i) {
        parts.push_back({&adapters[i], alphas[i]});
    }
    FuseResult res = fuse_multi(model.tensor(tid), parts);
    model.tensor(tid) = res.weights;
    const std::string out =
        o.out_file.empty() ? join_out(o.out_dir, "model_fused.shmd") : o.out_file;
    save_model(out, model);
    std::printf("fused %zu adapters onto %s; %zu positions touched\n", adapters.size(),
                tensor.c_str(), res.overlap.touched);
    for (const auto &po : res.overlap.pair_overlaps) {
        std::printf("overlap(%zu, %zu) = %zu indices\n", po[0], po[1], po[2]);
    }
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

// ----------------------------------------------------------------------------
// ortho / verify-lemmas / bench-switch
// ----------------------------------------------------------------------------

struct OrthoOptions {
    std::string dims_csv = "256,1024,4096";
    std::size_t trials = 50;
    std::string styles_csv = "dense,sparse_lora,shira_wm,shira_struct";
    double sparsity = 0.99;
    std::size_t lora_rank = 256;
    std::size_t struct_frequency = 100;
    double eps = 1e-12;
    std::uint64_t seed = 0;
    bool no_overlap_study = false;
    std::string out_file;
    std::string out_dir = ".";
};

int run_ortho(const OrthoOptions &o) {
    std::vector<AdapterStyle> styles;
    for (const std::string &name : split_list(o.styles_csv)) {
        AdapterStyle st;
        st.sparsity = o.sparsity;
        st.rank = o.lora_rank;
        st.frequency = o.struct_frequency;
        if (name == "dense") {
            st.kind = StyleKind::dense;
        } else if (name == "sparse_lora") {
            st.kind = StyleKind::sparse_lora;
        } else if (name == "shira_wm") {
            st.kind = StyleKind::shira_wm;
        } else if (name == "shira_struct") {
            st.kind = StyleKind::shira_struct;
        } else {
            throw CLI::ValidationError("ortho", "unknown style: " + name);
        }
        styles.push_back(st);
    }
    OrthoReport rep = simulate_fig4(parse_dims(o.dims_csv), styles, o.trials, o.seed, o.eps,
                                    !o.no_overlap_study);
    const std::string out =
        o.out_file.empty() ? join_out(o.out_dir, "ortho_report.csv") : o.out_file;
    write_ortho_csv(out, rep);
    for (const OrthoRow &r : rep.rows) {
        std::printf("dim %5zu %-12s %-10s awom %10.4g +- %-9.3g awor %.6f +- %.6f\n", r.dim,
                    r.style.c_str(), r.overlap_mode.c_str(), r.awom_mean, r.awom_std, r.awor_mean,
                    r.awor_std);
    }
    std::printf("wrote %s\n", out.c_str());
    return 0;
}

int run_verify_lemmas(std::uint64_t seed) {
    std::vector<LemmaResult> results = run_all_lemmas(seed);
    bool all = true;
    for (const LemmaResult &r : results) {
        std::printf("%-55s %s  residual %.3e  (%s)\n", r.name.c_str(), r.pass ? "PASS" : "FAIL",
                    r.residual, r.detail.c_str());
        all = all && r.pass;
    }
    return all ? 0 : 2;
}

struct BenchOptions {
    std::string dims_csv = "256,512,1024,2048,4096";
    double density = 0.01;
    std::size_t rank = 64;
    std::size_t repeats = 50;
    std::uint64_t seed = 0;
    bool e2e = false;
    std::size_t e2e_tensors = 32;
    std::string out_file;
    std::string out_dir = ".";
};

int run_bench(const BenchOptions &o) {
    BenchReport rep = bench(parse_dims(o.dims_csv), o.density, o.rank, o.repeats, o.seed);
    const std::string out =
        o.out_file.empty() ? join_out(o.out_dir, "bench_switch.csv") : o.out_file;
    write_bench_csv(out, rep);
    std::printf("pinned to one cpu: %s\n", rep.pinned ? "yes" : "no");
    for (const BenchDimResult &r : rep.dims) {
        std::printf("dim %5zu fuse %.6f s (mom %.6f) scatter %.8f s (mom %.8f) speedup %.3gx%s\n",
                    r.dim, r.t_fuse_mean, r.t_fuse_mom, r.t_scatter_mean, r.t_scatter_mom,
                    r.speedup, r.timer_warning ? " [timer resolution warning]" : "");
    }
    std::printf("wrote %s\n", out.c_str());
    if (o.e2e) {
        std::vector<std::pair<std::size_t, std::size_t>> shapes;
        const std::size_t ladder[4] = {1024, 2048, 3072, 4096};
        for (std::size_t i = 0; i < o.e2e_tensors; ++i) {
            shapes.emplace_back(ladder[i % 4], ladder[(i + 1) % 4]);
        }
        EndToEndResult e = bench_end_to_end(shapes, o.density, o.rank,
                                            std::max<std::size_t>(10, o.repeats / 5), o.seed);
        std::printf("end-to-end over %zu tensors: lora fuse %.4f s, shira scatter %.4f s, "
                    "speedup %.3gx\n",
                    e.tensors, e.t_lora_total, e.t_shira_total, e.speedup);
    }
    return 0;
}

// ----------------------------------------------------------------------------
// config file: flat key=value lines, inserted before the explicit flags so
// that flags win
// ----------------------------------------------------------------------------

std::vector<std::string> config_tokens(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config file: " + path);
    }
    std::vector<std::string> tokens;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError("config line " + std::to_string(lineno) + " is not key=value");
        }
        tokens.push_back("--" + line.substr(0, eq) + "=" + line.substr(eq + 1));
    }
    return tokens;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"SHiRA toolkit: sparse high rank adapters on a desk-scale model"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "Flat key=value config file (flags override it)");

    BuildMaskOptions bm;
    CLI::App *cmd_mask = app.add_subcommand("build-mask", "Construct a trainable-position mask");
    cmd_mask->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd_mask->add_option("--strategy", bm.strategy, "struct|rand|wm|grad|snip")->required();
    cmd_mask->add_option("--rows", bm.rows, "Mask rows");
    cmd_mask->add_option("--cols", bm.cols, "Mask cols");
    cmd_mask->add_option("--dim", bm.dim, "Square shortcut for --rows/--cols");
    cmd_mask->add_option("--frequency", bm.frequency, "Struct stride (0 = derive from density)");
    cmd_mask->add_option("--axis", bm.axis, "Struct axis: rows|cols");
    cmd_mask->add_flag("--diagonal,!--no-diagonal", bm.diagonal, "Include the main diagonal");
    cmd_mask->add_option("--p", bm.p, "Bernoulli probability (rand)");
    cmd_mask->add_option("--density", bm.density, "Target trainable fraction");
    cmd_mask->add_option("--k", bm.k, "Exact top-k count (overrides --density)");
    cmd_mask->add_option("--model", bm.model_path, "Model checkpoint (wm/grad/snip)")
        ->check(CLI::ExistingFile);
    cmd_mask->add_option("--tensor", bm.tensor, "Target tensor: W1|W2");
    cmd_mask->add_option("--exclude", bm.exclude_path, "Mask file whose support to exclude")
        ->check(CLI::ExistingFile);
    cmd_mask->add_option("--calib", bm.calib, "Calibration batches (grad/snip)");
    cmd_mask->add_option("--seed", bm.seed, "Seed for rand strategy and rank report");
    cmd_mask->add_option("--out-file", bm.out_file, "Output mask path");
    cmd_mask->add_option("--out", bm.out_dir, "Output directory");
    add_task_options(cmd_mask, bm.task);

    TrainOptions tr;
    CLI::App *cmd_train = app.add_subcommand("train", "Finetune on the synthetic teacher task");
    cmd_train->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd_train->add_option("--adapter", tr.adapter, "shira|lora");
    cmd_train->add_option("--mask", tr.mask_path, "Mask file for shira, or 'oracle'");
    cmd_train->add_option("--rank", tr.rank, "LoRA rank");
    cmd_train->add_option("--alpha", tr.alpha, "LoRA alpha hyperparameter");
    cmd_train->add_option("--scaling", tr.scaling, "alpha_over_r|alpha_over_sqrt_r|unit");
    cmd_train->add_option("--targets", tr.targets, "LoRA target tensors, e.g. W2 or W1,W2");
    cmd_train->add_option("--lr", tr.lr, "Learning rate");
    cmd_train->add_option("--steps", tr.steps, "Training steps");
    cmd_train->add_option("--batch", tr.batch, "Batch size");
    cmd_train->add_option("--optimizer", tr.optimizer, "sgd|adam");
    cmd_train->add_option("--seed", tr.seed, "Training seed");
    cmd_train->add_option("--out", tr.out_dir, "Output directory");
    add_task_options(cmd_train, tr.task);

    ExtractOptions ex;
    CLI::App *cmd_extract =
        app.add_subcommand("extract", "Extract a sparse adapter from two checkpoints");
    cmd_extract->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd_extract->add_option("--base", ex.base_path, "Base checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_extract->add_option("--tuned", ex.tuned_path, "Finetuned checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_extract->add_option("--tensor", ex.tensor, "Tensor to diff: W1|W2");
    cmd_extract->add_option("--out-file", ex.out_file, "Output adapter path");
    cmd_extract->add_option("--out", ex.out_dir, "Output directory");

    ApplyOptions ap;
    CLI::App *cmd_apply = app.add_subcommand("apply", "Apply a sparse adapter at a given alpha");
    cmd_apply->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd_apply->add_option("--model", ap.model_path, "Model checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_apply->add_option("--adapter", ap.adapter_path, "Adapter file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_apply->add_option("--alpha", ap.alpha, "Adapter strength (0 disables)");
    cmd_apply->add_option("--out-file", ap.out_file, "Output checkpoint path");
    cmd_apply->add_option("--out", ap.out_dir, "Output directory");

    FuseOptions fu;
    CLI::App *cmd_fuse = app.add_subcommand("fuse", "Fuse several sparse adapters additively");
    cmd_fuse->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd_fuse->add_option("--model", fu.model_path, "Model checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    cmd_fuse->add_option("--adapters", fu.adapters_csv, "Comma-separated adapter files")
        ->required();
    cmd_fuse->add_option("--alphas", fu.alphas_csv, "Comma-separated strengths (default 1)");
    cmd_fuse->add_option("--out-file", fu.out_file, "Output checkpoint path");
    cmd_fuse->add_option("--out", fu.out_dir, "Output directory");

    OrthoOptions ort;
    CLI::App *cmd_ortho = app.add_subcommand("ortho", "AWOM/AWOR random-adapter simulation");
    cmd_ortho->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd_ortho->add_option("--dims", ort.dims_csv, "Comma-separated matrix dimensions");
    cmd_ortho->add_option("--trials", ort.trials, "Random pairs per cell");
    cmd_ortho->add_option("--styles", ort.styles_csv, "dense,sparse_lora,shira_wm,shira_struct");
    cmd_ortho->add_option("--sparsity", ort.sparsity, "Zero fraction for sparse styles");
    cmd_ortho->add_option("--lora-rank", ort.lora_rank, "Rank of the sparse_lora style");
    cmd_ortho->add_option("--struct-frequency", ort.struct_frequency, "Row stride of shira_struct");
    cmd_ortho->add_option("--eps", ort.eps, "Zero threshold for AWOR");
    cmd_ortho->add_option("--seed", ort.seed, "Simulation seed");
    cmd_ortho->add_flag("--no-overlap-study", ort.no_overlap_study,
                        "Skip the WM overlap/non-overlap rows");
    cmd_ortho->add_option("--out-file", ort.out_file, "Output CSV path");
    cmd_ortho->add_option("--out", ort.out_dir, "Output directory");

    std::uint64_t lemma_seed = 0;
    CLI::App *cmd_lemmas = app.add_subcommand("verify-lemmas", "Run the five lemma checks");
    cmd_lemmas->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd_lemmas->add_option("--seed", lemma_seed, "Verification seed");

    BenchOptions be;
    CLI::App *cmd_bench = app.add_subcommand("bench-switch", "Fuse vs scatter switching benchmark");
    cmd_bench->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd_bench->add_option("--dims", be.dims_csv, "Comma-separated dimensions");
    cmd_bench->add_option("--density", be.density, "Adapter density");
    cmd_bench->add_option("--rank", be.rank, "LoRA rank for the fuse side");
    cmd_bench->add_option("--repeats", be.repeats, "Timed repeats per dimension");
    cmd_bench->add_option("--seed", be.seed, "Benchmark seed");
    cmd_bench->add_flag("--e2e", be.e2e, "Also run the synthetic end-to-end model switch");
    cmd_bench->add_option("--e2e-tensors", be.e2e_tensors, "Tensor count for --e2e");
    cmd_bench->add_option("--out-file", be.out_file, "Output CSV path");
    cmd_bench->add_option("--out", be.out_dir, "Output directory");

    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    try {
        // locate --config and splice its tokens in right after the subcommand
        std::string cfg;
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == "--config" && i + 1 < args.size()) {
                cfg = args[i + 1];
            } else if (args[i].rfind("--config=", 0) == 0) {
                cfg = args[i].substr(9);
            }
        }
        if (!cfg.empty()) {
            std::vector<std::string> cfg_tokens = config_tokens(cfg);
            std::size_t sub_pos = 0;
            while (sub_pos < args.size() && args[sub_pos].rfind("-", 0) == 0) {
                if (args[sub_pos] == "--config") {
                    ++sub_pos;
                }
                ++sub_pos;
            }
            if (sub_pos < args.size()) {
                args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1,
                            cfg_tokens.begin(), cfg_tokens.end());
            }
        }

        std::vector<const char *> cargv;
        cargv.push_back(argv[0]);
        for (const std::string &a : args) {
            cargv.push_back(a.c_str());
        }
        app.parse(static_cast<int>(cargv.size()), cargv.data());

        for (const std::string &dir : {bm.out_dir, tr.out_dir, ex.out_dir, ap.out_dir, fu.out_dir,
                                       ort.out_dir, be.out_dir}) {
            if (!dir.empty() && dir != ".") {
                fs::create_directories(dir);
            }
        }

        if (cmd_mask->parsed()) {
            return run_build_mask(bm);
        }
        if (cmd_train->parsed()) {
            return run_train(tr);
        }
        if (cmd_extract->parsed()) {
            return run_extract(ex);
        }
        if (cmd_apply->parsed()) {
            return run_apply(ap);
        }
        if (cmd_fuse->parsed()) {
            return run_fuse(fu);
        }
        if (cmd_ortho->parsed()) {
            return run_ortho(ort);
        }
        if (cmd_lemmas->parsed()) {
            return run_verify_lemmas(lemma_seed);
        }
        if (cmd_bench->parsed()) {
            return run_bench(be);
        }
        return 1;
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return 1;
    } catch (const TrainingError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
