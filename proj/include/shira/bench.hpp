#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#ifdef __linux__
#include <sched.h>
#endif

#include "shira/adapter.hpp"
#include "shira/error.hpp"
#include "shira/linalg.hpp"
#include "shira/matrix.hpp"
#include "shira/random.hpp"

namespace shira {

// ============================================================================
// Switching benchmark: dense LoRA fuse vs sparse indexed overwrite
// ============================================================================

struct BenchDimResult {
    std::size_t dim = 0;
    std::size_t repeats = 0;
    double t_fuse_mean = 0.0, t_fuse_std = 0.0;
    double t_scatter_mean = 0.0, t_scatter_std = 0.0;
    double t_fuse_mom = 0.0, t_scatter_mom = 0.0; // median of means
    double speedup = 0.0;                          // t_fuse_mean / t_scatter_mean, 3 sig figs
    bool timer_warning = false;
};

struct BenchReport {
    std::vector<BenchDimResult> dims;
    double density = 0.01;
    std::size_t rank = 64;
    std::size_t repeats = 0;
    bool pinned = false;
};

namespace detail {

using bench_clock = std::chrono::steady_clock;

inline double elapsed(bench_clock::time_point a, bench_clock::time_point b) {
    return std::chrono::duration<double>(b - a).count();
}

inline bool pin_to_one_cpu() {
#ifdef __linux__
    cpu_set_t set;
    CPU_ZERO(&set);
    CPU_SET(0, &set);
    return sched_setaffinity(0, sizeof(set), &set) == 0;
#else
    return false;
#endif
}

inline double timer_resolution() {
    double best = 1.0;
    for (int i = 0; i < 64; ++i) {
        auto t0 = bench_clock::now();
        auto t1 = bench_clock::now();
        while (t1 == t0) {
            t1 = bench_clock::now();
        }
        best = std::min(best, elapsed(t0, t1));
    }
    return best;
}

struct Stats {
    double mean, std, mom;
};

inline Stats stats(const std::vector<double> &xs) {
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
    // median of 5 group means
    const std::size_t groups = std::min<std::size_t>(5, xs.size());
    std::vector<double> means;
    const std::size_t per = xs.size() / groups;
    for (std::size_t g = 0; g < groups; ++g) {
        double s = 0.0;
        for (std::size_t i = g * per; i < (g + 1) * per; ++i) {
            s += xs[i];
        }
        means.push_back(s / static_cast<double>(per));
    }
    std::sort(means.begin(), means.end());
    return {mean, std::sqrt(var), means[means.size() / 2]};
}

inline double round_3sig(double x) {
    if (x == 0.0) {
        return 0.0;
    }
    const double mag = std::pow(10.0, std::floor(std::log10(std::fabs(x))) - 2.0);
    return std::round(x / mag) * mag;
}

// Fuse kernel under test: dest <- W, then dest += scale * A*B through the
// toolkit's matmul. The destination is preallocated; timing covers compute
// and the dense write, not allocation or disk I/O.
inline void fuse_kernel(const DenseMatrix &w, const DenseMatrix &a, const DenseMatrix &b,
                        double scale, DenseMatrix &product_scratch, DenseMatrix &dest) {
    product_scratch = matmul(a, b);
    for (std::size_t i = 0; i < dest.data.size(); ++i) {
        dest.data[i] = w.data[i] + scale * product_scratch.data[i];
    }
}

// Scatter kernel under test: indexed overwrite of the touched entries only.
inline void scatter_kernel(const DenseMatrix &w, const SparseAdapter &ad, double alpha,
                           DenseMatrix &dest) {
    const double *wd = w.data.data();
    double *dd = dest.data.data();
    const std::size_t n = ad.indices.size();
    for (std::size_t k = 0; k < n; ++k) {
        const std::uint64_t i = ad.indices[k];
        dd[i] = wd[i] + alpha * ad.values[k];
    }
}

struct DimTimings {
    std::vector<double> fuse, scatter;
};

// One benchmarked dimension. Base weights and result buffers rotate through
// pools sized past the LLC so repeats do not reuse cached lines; fuse and
// scatter interleave so both see the same machine conditions.
inline DimTimings run_dim(std::size_t d, double density, std::size_t rank, std::size_t repeats,
                          std::uint64_t seed) {
    const std::size_t total = d * d;
    const std::size_t bytes = total * sizeof(double);
    const std::size_t pool_n =
        std::min<std::size_t>(repeats, std::max<std::size_t>(4, (192u << 20) / bytes));

    std::vector<DenseMatrix> bases, dests;
    bases.reserve(pool_n);
    dests.reserve(pool_n);
    for (std::size_t p = 0; p < pool_n; ++p) {
        bases.push_back(seeded_gaussian(d, d, mix_seed(seed, 500 + p)));
        dests.emplace_back(d, d, 0.0);
    }
    DenseMatrix a = seeded_gaussian(d, rank, mix_seed(seed, 1));
    DenseMatrix b = seeded_gaussian(rank, d, mix_seed(seed, 2));
    DenseMatrix product_scratch(d, d, 0.0);

    SparseAdapter ad;
    ad.name = "bench";
    ad.rows = d;
    ad.cols = d;
    {
        Rng rng(mix_seed(seed, 3));
        const std::size_t count = static_cast<std::size_t>(
            std::llround(density * static_cast<double>(total)));
        ad.indices = sample_indices(total, count, rng);
        ad.values.resize(ad.indices.size());
        for (double &v : ad.values) {
            v = static_cast<double>(static_cast<float>(rng.gaussian()));
        }
    }

    // warm-up, excluded from the timings
    for (int w = 0; w < 2; ++w) {
        fuse_kernel(bases[0], a, b, 1.0, product_scratch, dests[0]);
        scatter_kernel(bases[0], ad, 1.0, dests[0]);
    }

    DimTimings t;
    t.fuse.reserve(repeats);
    t.scatter.reserve(repeats);
    for (std::size_t r = 0; r < repeats; ++r) {
        {
            DenseMatrix &w = bases[r % pool_n];
            DenseMatrix &dst = dests[r % pool_n];
            auto t0 = bench_clock::now();
            fuse_kernel(w, a, b, 1.0, product_scratch, dst);
            auto t1 = bench_clock::now();
            t.fuse.push_back(elapsed(t0, t1));
        }
        {
            DenseMatrix &w = bases[(r + 1) % pool_n];
            DenseMatrix &dst = dests[(r + 1) % pool_n];
            auto t0 = bench_clock::now();
            scatter_kernel(w, ad, 1.0, dst);
            auto t1 = bench_clock::now();
            t.scatter.push_back(elapsed(t0, t1));
        }
    }

    // functional validation of both kernels, outside the timed region
    {
        DenseMatrix &w = bases[0];
        DenseMatrix &dst = dests[0];
        fuse_kernel(w, a, b, 1.0, product_scratch, dst);
        if (d <= 512) {
            DenseMatrix ref = add(w, matmul(a, b));
            if (max_abs_diff(ref, dst) > 1e-12) {
                throw NumericError("bench: fuse kernel disagrees with reference matmul-add");
            }
        } else {
            Rng rng(mix_seed(seed, 4));
            for (int probe = 0; probe < 4096; ++probe) {
                const std::size_t i = rng.index(d);
                const std::size_t j = rng.index(d);
                double dot = 0.0;
                for (std::size_t k = 0; k < rank; ++k) {
                    dot += a(i, k) * b(k, j);
                }
                if (std::fabs(dst(i, j) - (w(i, j) + dot)) > 1e-9) {
                    throw NumericError("bench: fuse kernel disagrees with sampled reference");
                }
            }
        }
        DenseMatrix expected = apply(w, ad, 1.0);
        scatter_kernel(w, ad, 1.0, dst);
        std::size_t k = 0;
        for (std::size_t i = 0; i < total; ++i) {
            const bool touched = k < ad.indices.size() && ad.indices[k] == i;
            if (touched) {
                if (dst.data[i] != expected.data[i]) {
                    throw NumericError("bench: scatter kernel wrote a wrong value");
                }
                ++k;
            }
        }
    }
    return t;
}

} // namespace detail

/// Times dense fuse (W + A*B) against sparse indexed overwrite per dimension.
/// Single-threaded by contract; the harness pins itself to one CPU where the
/// platform allows and records whether that worked.
inline BenchReport bench(const std::vector<std::size_t> &dims, double density, std::size_t rank,
                         std::size_t repeats, std::uint64_t seed) {
    if (repeats < 10) {
        throw ParameterError("bench: repeats must be >= 10");
    }
    for (std::size_t d : dims) {
        if (d < 64) {
            throw ParameterError("bench: dims must be >= 64");
        }
    }
    if (density <= 0.0 || density > 1.0) {
        throw ParameterError("bench: density must be in (0, 1]");
    }

    BenchReport report;
    report.density = density;
    report.rank = rank;
    report.repeats = repeats;
    report.pinned = detail::pin_to_one_cpu();
    const double resolution = detail::timer_resolution();

    for (std::size_t d : dims) {
        detail::DimTimings t = detail::run_dim(d, density, rank, repeats, mix_seed(seed, d));
        detail::Stats f = detail::stats(t.fuse);
        detail::Stats s = detail::stats(t.scatter);
        BenchDimResult r;
        r.dim = d;
        r.repeats = repeats;
        r.t_fuse_mean = f.mean;
        r.t_fuse_std = f.std;
        r.t_fuse_mom = f.mom;
        r.t_scatter_mean = s.mean;
        r.t_scatter_std = s.std;
        r.t_scatter_mom = s.mom;
        r.speedup = detail::round_3sig(f.mean / s.mean);
        r.timer_warning = s.mean < 100.0 * resolution;
        report.dims.push_back(r);
    }
    return report;
}

// ============================================================================
// End-to-end synthetic model switch
// ============================================================================

struct EndToEndResult {
    double t_lora_total = 0.0;
    double t_shira_total = 0.0;
    double speedup = 0.0;
    std::size_t tensors = 0;
};

/// Sums per-tensor fuse vs scatter times over a list of weight shapes that
/// stands in for a model. Uses the same kernels as the per-dim benchmark.
inline EndToEndResult bench_end_to_end(const std::vector<std::pair<std::size_t, std::size_t>> &shapes,
                                       double density, std::size_t rank, std::size_t repeats,
                                       std::uint64_t seed) {
    if (shapes.empty()) {
        throw ParameterError("bench_end_to_end: model spec is empty");
    }
    if (repeats < 1) {
        throw ParameterError("bench_end_to_end: repeats must be >= 1");
    }
    detail::pin_to_one_cpu();

    EndToEndResult res;
    res.tensors = shapes.size();
    std::vector<double> lora_times(repeats, 0.0), shira_times(repeats, 0.0);
    for (std::size_t ti = 0; ti < shapes.size(); ++ti) {
        const auto [rows, cols] = shapes[ti];
        const std::size_t total = rows * cols;
        DenseMatrix w = seeded_gaussian(rows, cols, mix_seed(seed, 900 + ti));
        DenseMatrix dst(rows, cols, 0.0);
        const std::size_t rk = std::min(rank, std::min(rows, cols));
        DenseMatrix a = seeded_gaussian(rows, rk, mix_seed(seed, 910 + ti));
        DenseMatrix b = seeded_gaussian(rk, cols, mix_seed(seed, 920 + ti));
        DenseMatrix scratch(rows, cols, 0.0);
        SparseAdapter ad;
        ad.rows = rows;
        ad.cols = cols;
        ad.name = "t" + std::to_string(ti);
        Rng rng(mix_seed(seed, 930 + ti));
        const std::size_t count = std::max<std::size_t>(
            0, static_cast<std::size_t>(std::llround(density * static_cast<double>(total))));
        if (count > 0) {
            ad.indices = sample_indices(total, count, rng);
            ad.values.resize(count);
            for (double &v : ad.values) {
                v = static_cast<double>(static_cast<float>(rng.gaussian()));
            }
        }
        detail::fuse_kernel(w, a, b, 1.0, scratch, dst);
        detail::scatter_kernel(w, ad, 1.0, dst);
        for (std::size_t r = 0; r < repeats; ++r) {
            auto t0 = detail::bench_clock::now();
            detail::fuse_kernel(w, a, b, 1.0, scratch, dst);
            auto t1 = detail::bench_clock::now();
            lora_times[r] += detail::elapsed(t0, t1);
            auto t2 = detail::bench_clock::now();
            detail::scatter_kernel(w, ad, 1.0, dst);
            auto t3 = detail::bench_clock::now();
            shira_times[r] += detail::elapsed(t2, t3);
        }
    }
    res.t_lora_total = detail::stats(lora_times).mean;
    res.t_shira_total = detail::stats(shira_times).mean;
    res.speedup = res.t_shira_total > 0.0 ? res.t_lora_total / res.t_shira_total
                                          : std::numeric_limits<double>::infinity();
    return res;
}

inline void write_bench_csv(const std::string &path, const BenchReport &report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open for writing: " + path);
    }
    out << "dim,repeats,t_fuse_mean,t_fuse_std,t_scatter_mean,t_scatter_std,speedup\n";
    char buf[256];
    for (const BenchDimResult &r : report.dims) {
        std::snprintf(buf, sizeof(buf), "%zu,%zu,%.9g,%.9g,%.9g,%.9g,%.4g\n", r.dim, r.repeats,
                      r.t_fuse_mean, r.t_fuse_std, r.t_scatter_mean, r.t_scatter_std, r.speedup);
        out << buf;
    }
}

} // namespace shira
