#include <gtest/gtest.h>

#include <cmath>
#include <unordered_set>

#include "shira/linalg.hpp"
#include "shira/mask.hpp"
#include "shira/random.hpp"
#include "support/oracles.hpp"

using namespace shira;

namespace {

DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    DenseMatrix m(rows.size(), rows.begin()->size());
    std::size_t i = 0;
    for (const auto &r : rows) {
        std::size_t j = 0;
        for (double v : r) {
            m(i, j++) = v;
        }
        ++i;
    }
    return m;
}

// generic rank of the mask pattern: random values on the support
std::size_t pattern_rank(const Mask &m, std::uint64_t seed) {
    DenseMatrix vals(m.rows, m.cols);
    Rng rng(seed);
    for (std::size_t i = 0; i < m.bits.size(); ++i) {
        if (m.bits[i]) {
            vals.data[i] = rng.gaussian();
        }
    }
    return numeric_rank(vals);
}

} // namespace

// ============================================================================
// struct masks
// ============================================================================

TEST(StructMask, FourByFourRowZeroPlusDiagonal) {
    Mask m = build_struct_mask(4, 4, 4, Axis::rows, true);
    EXPECT_EQ(m.set_count, 7u); // row 0 (4) plus diagonal (4) minus overlap (0,0)
    for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_TRUE(m.test(0, j));
    }
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_TRUE(m.test(i, i));
    }
    EXPECT_FALSE(m.stride_warning);
}

TEST(StructMask, FrequencyOneSelectsEverything) {
    Mask m = build_struct_mask(4, 4, 1, Axis::rows, false);
    EXPECT_EQ(m.set_count, 16u);
}

TEST(StructMask, HundredByHundredDensity) {
    Mask m = build_struct_mask(100, 100, 100, Axis::rows, true);
    EXPECT_EQ(m.set_count, 199u); // row 0 (100) + diagonal (100) - shared (0,0)
    EXPECT_DOUBLE_EQ(m.density(), 199.0 / 10000.0);
}

TEST(StructMask, ColumnsAxis) {
    Mask m = build_struct_mask(4, 6, 3, Axis::cols, false);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_TRUE(m.test(i, 0));
        EXPECT_TRUE(m.test(i, 3));
        EXPECT_FALSE(m.test(i, 1));
    }
}

TEST(StructMask, FrequencyBeyondAxisDegradesToDiagonalWithWarning) {
    Mask m = build_struct_mask(4, 4, 5, Axis::rows, true);
    EXPECT_TRUE(m.stride_warning);
    EXPECT_EQ(m.set_count, 4u); // diagonal only
}

TEST(StructMask, DiagonalMakesPatternFullRank) {
    Mask with_diag = build_struct_mask(64, 64, 32, Axis::rows, true);
    EXPECT_EQ(pattern_rank(with_diag, 7), 64u);
    Mask rows_only = build_struct_mask(64, 64, 32, Axis::rows, false);
    EXPECT_EQ(pattern_rank(rows_only, 7), 2u); // rows 0 and 32
}

// ============================================================================
// random masks
// ============================================================================

TEST(RandomMask, DegenerateBernoulli) {
    EXPECT_EQ(build_random_mask(16, 16, 0.0, 3).set_count, 0u);
    EXPECT_EQ(build_random_mask(16, 16, 1.0, 3).set_count, 256u);
}

TEST(RandomMask, DensityConcentratesAroundP) {
    Mask m = build_random_mask(1000, 1000, 0.02, 17);
    EXPECT_GT(m.density(), 0.015);
    EXPECT_LT(m.density(), 0.025);
}

TEST(RandomMask, DeterministicPerSeed) {
    Mask a = build_random_mask(32, 32, 0.3, 12);
    Mask b = build_random_mask(32, 32, 0.3, 12);
    EXPECT_EQ(a.bits, b.bits);
    Mask c = build_random_mask(32, 32, 0.3, 13);
    EXPECT_NE(a.bits, c.bits);
}

// ============================================================================
// weight-magnitude masks
// ============================================================================

TEST(WmMask, PicksLargestMagnitudes) {
    DenseMatrix w = from_rows({{1, -5, 2}, {0.1, 3, -4}, {6, 0.2, 0.3}});
    Mask m = build_wm_mask(w, 3);
    EXPECT_TRUE(m.test(2, 0));  // 6
    EXPECT_TRUE(m.test(0, 1));  // -5
    EXPECT_TRUE(m.test(1, 2));  // -4
    EXPECT_EQ(m.set_count, 3u);
}

TEST(WmMask, ExclusionPicksNextSlice) {
    DenseMatrix w = from_rows({{1, -5, 2}, {0.1, 3, -4}, {6, 0.2, 0.3}});
    std::unordered_set<std::uint64_t> excl = {6, 1, 5}; // positions of 6, -5, -4
    Mask m = build_wm_mask(w, 3, excl);
    EXPECT_TRUE(m.test(1, 1)); // 3
    EXPECT_TRUE(m.test(0, 2)); // 2
    EXPECT_TRUE(m.test(0, 0)); // 1
    EXPECT_EQ(m.set_count, 3u);
}

TEST(WmMask, FullSelection) {
    DenseMatrix w = seeded_gaussian(5, 5, 2);
    Mask m = build_wm_mask(w, 25);
    EXPECT_EQ(m.set_count, 25u);
}

TEST(WmMask, KTooLargeThrows) {
    DenseMatrix w = seeded_gaussian(3, 3, 2);
    EXPECT_THROW(build_wm_mask(w, 10), ParameterError);
    std::unordered_set<std::uint64_t> excl = {0};
    EXPECT_THROW(build_wm_mask(w, 9, excl), ParameterError);
}

TEST(WmMask, ExhaustiveSortOracleOnRandomMatrix) {
    DenseMatrix w = seeded_gaussian(12, 9, 55);
    const std::size_t k = 20;
    Mask m = build_wm_mask(w, k);
    // oracle: full sort by (|w| desc, index asc)
    std::vector<std::uint64_t> idx(w.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::uint64_t a, std::uint64_t b) {
        const double fa = std::fabs(w.data[a]), fb = std::fabs(w.data[b]);
        return fa > fb || (fa == fb && a < b);
    });
    for (std::size_t i = 0; i < k; ++i) {
        EXPECT_TRUE(m.bits[idx[i]]);
    }
}

// ============================================================================
// gradient snapshots and grad/snip masks
// ============================================================================

namespace {

ToyModel small_model(std::uint64_t seed) { return make_model(6, 10, 4, seed); }

std::vector<std::pair<DenseMatrix, DenseMatrix>> make_batches(const ToyModel &m,
                                                              std::size_t count,
                                                              std::uint64_t seed) {
    std::vector<std::pair<DenseMatrix, DenseMatrix>> batches;
    for (std::size_t b = 0; b < count; ++b) {
        DenseMatrix x = seeded_gaussian(m.in_dim(), 8, mix_seed(seed, b));
        DenseMatrix t = seeded_gaussian(m.out_dim(), 8, mix_seed(seed, 100 + b));
        batches.emplace_back(std::move(x), std::move(t));
    }
    return batches;
}

} // namespace

TEST(CollectGradients, IdenticalBatchTwiceDoubles) {
    ToyModel m = small_model(1);
    auto one = make_batches(m, 1, 5);
    auto two = one;
    two.push_back(one[0]);
    ModelGradSnapshots s1 = collect_gradients(m, one);
    ModelGradSnapshots s2 = collect_gradients(m, two);
    EXPECT_EQ(s2.w2.sample_count, 2u);
    for (std::size_t i = 0; i < s1.w2.accum.data.size(); ++i) {
        EXPECT_NEAR(s2.w2.accum.data[i], 2.0 * s1.w2.accum.data[i], 1e-15);
    }
}

TEST(CollectGradients, ZeroAtExactTarget) {
    ToyModel m = small_model(2);
    DenseMatrix x = seeded_gaussian(m.in_dim(), 8, 3);
    DenseMatrix t = forward(m, x);
    ModelGradSnapshots s = collect_gradients(m, {{x, t}});
    EXPECT_EQ(frobenius_norm(s.w1.accum), 0.0);
    EXPECT_EQ(frobenius_norm(s.w2.accum), 0.0);
}

TEST(CollectGradients, MatchesIndependentAccumulationOracle) {
    ToyModel m = small_model(3);
    auto batches = make_batches(m, 4, 9);
    ModelGradSnapshots snap = collect_gradients(m, batches);
    DenseMatrix acc1(m.w1.rows, m.w1.cols), acc2(m.w2.rows, m.w2.cols);
    for (const auto &[x, t] : batches) {
        ModelGrads g = backward(m, x, t);
        for (std::size_t i = 0; i < acc1.data.size(); ++i) {
            acc1.data[i] += std::fabs(g.w1.data[i]);
        }
        for (std::size_t i = 0; i < acc2.data.size(); ++i) {
            acc2.data[i] += std::fabs(g.w2.data[i]);
        }
    }
    EXPECT_EQ(max_abs_diff(acc1, snap.w1.accum), 0.0);
    EXPECT_EQ(max_abs_diff(acc2, snap.w2.accum), 0.0);
}

TEST(CollectGradients, EmptyBatchListThrows) {
    ToyModel m = small_model(4);
    EXPECT_THROW(collect_gradients(m, {}), ParameterError);
}

TEST(GradMask, SingleNonzeroEntry) {
    GradSnapshot g;
    g.accum = DenseMatrix(3, 3);
    g.accum(1, 2) = 0.7;
    g.sample_count = 1;
    Mask m = build_grad_mask(g, 1);
    EXPECT_TRUE(m.test(1, 2));
    EXPECT_EQ(m.set_count, 1u);
}

TEST(GradMask, UniformSnapshotTieBreaksToLowestIndices) {
    GradSnapshot g;
    g.accum = DenseMatrix(2, 3, 0.5);
    g.sample_count = 1;
    Mask m = build_grad_mask(g, 2);
    EXPECT_TRUE(m.test(0, 0));
    EXPECT_TRUE(m.test(0, 1));
}

TEST(GradMask, EmptySnapshotThrows) {
    GradSnapshot g;
    g.accum = DenseMatrix(2, 2);
    g.sample_count = 0;
    EXPECT_THROW(build_grad_mask(g, 1), ParameterError);
}

TEST(SnipMask, AllOnesGradientsReduceToWm) {
    DenseMatrix w = seeded_gaussian(7, 7, 21);
    GradSnapshot g;
    g.accum = DenseMatrix(7, 7, 1.0);
    g.sample_count = 1;
    Mask snip = build_snip_mask(w, g, 10);
    Mask wm = build_wm_mask(w, 10);
    EXPECT_EQ(snip.bits, wm.bits);
}

TEST(SnipMask, AllOnesWeightsReduceToGrad) {
    DenseMatrix w(7, 7, 1.0);
    GradSnapshot g;
    g.accum = seeded_gaussian(7, 7, 22);
    for (double &x : g.accum.data) {
        x = std::fabs(x);
    }
    g.sample_count = 1;
    Mask snip = build_snip_mask(w, g, 10);
    Mask grad = build_grad_mask(g, 10);
    EXPECT_EQ(snip.bits, grad.bits);
}

TEST(SnipMask, HandEvaluatedProduct) {
    DenseMatrix w = from_rows({{2, -1}});
    GradSnapshot g;
    g.accum = from_rows({{0.5, 3}});
    g.sample_count = 1;
    Mask m = build_snip_mask(w, g, 1);
    EXPECT_TRUE(m.test(0, 1)); // |-1*3| > |2*0.5|
}

TEST(SnipMask, ShapeMismatchThrows) {
    DenseMatrix w(2, 2);
    GradSnapshot g;
    g.accum = DenseMatrix(3, 2);
    g.sample_count = 1;
    EXPECT_THROW(build_snip_mask(w, g, 1), ShapeError);
}

// ============================================================================
// cross-strategy properties
// ============================================================================

TEST(MaskProperties, NonOverlapWithExcludeSet) {
    DenseMatrix w = seeded_gaussian(20, 20, 77);
    Mask first = build_wm_mask(w, 40);
    auto first_idx = first.to_indices();
    std::unordered_set<std::uint64_t> excl(first_idx.begin(), first_idx.end());
    Mask second = build_wm_mask(w, 40, excl);
    for (std::uint64_t i : second.to_indices()) {
        EXPECT_FALSE(excl.count(i));
    }
}

TEST(MaskProperties, ExactCountForTopKStrategies) {
    DenseMatrix w = seeded_gaussian(30, 30, 5);
    for (std::size_t k : {1u, 9u, 250u}) {
        EXPECT_EQ(build_wm_mask(w, k).set_count, k);
    }
}

TEST(MaskProperties, IndexRoundTrip) {
    Mask m = build_random_mask(9, 13, 0.2, 3);
    Mask back = Mask::from_indices(9, 13, m.to_indices());
    EXPECT_EQ(m.bits, back.bits);
    EXPECT_EQ(m.set_count, back.set_count);
}
