#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <unordered_set>
#include <vector>

#include "shira/error.hpp"
#include "shira/matrix.hpp"

namespace shira {

// Seeded randomness used everywhere in the toolkit. The generator is pinned so
// that runs reproduce bit-for-bit given the same seed:
//   engine    std::mt19937_64, seeded directly with the given value
//   uniform   (x >> 11) * 2^-53            -> double in [0, 1)
//   normal    Marsaglia polar method, pairs cached (variable engine draws)
//   index     rejection sampling on the top 64-bit range (unbiased)
//   subset    Floyd's algorithm over flat indices, result sorted ascending
// Normal samples additionally depend on libm's sqrt/log rounding.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    /// Uniform index in [0, n).
    std::uint64_t index(std::uint64_t n) {
        if (n == 0) {
            throw ParameterError("Rng::index: n must be positive");
        }
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

  private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Derives an independent stream seed from a base seed (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline DenseMatrix seeded_gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    DenseMatrix m(rows, cols);
    Rng rng(seed);
    for (double &x : m.data) {
        x = rng.gaussian();
    }
    return m;
}

inline DenseMatrix seeded_uniform(std::size_t rows, std::size_t cols, std::uint64_t seed,
                                  double lo, double hi) {
    DenseMatrix m(rows, cols);
    Rng rng(seed);
    for (double &x : m.data) {
        x = rng.uniform(lo, hi);
    }
    return m;
}

/// `count` distinct flat indices from [0, total), sorted ascending.
inline std::vector<std::uint64_t> sample_indices(std::uint64_t total, std::uint64_t count,
                                                 Rng &rng) {
    if (count > total) {
        throw ParameterError("sample_indices: count exceeds population");
    }
    std::unordered_set<std::uint64_t> chosen;
    chosen.reserve(count * 2);
    for (std::uint64_t j = total - count; j < total; ++j) {
        std::uint64_t t = rng.index(j + 1);
        if (!chosen.insert(t).second) {
            chosen.insert(j);
        }
    }
    std::vector<std::uint64_t> out(chosen.begin(), chosen.end());
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace shira
