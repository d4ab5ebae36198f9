#include <gtest/gtest.h>

#include <cmath>

#include "shira/linalg.hpp"
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

DenseMatrix diag(std::initializer_list<double> d) {
    DenseMatrix m(d.size(), d.size());
    std::size_t i = 0;
    for (double v : d) {
        m(i, i) = v;
        ++i;
    }
    return m;
}

double reconstruction_error(const DenseMatrix &m, const SvdResult &s) {
    DenseMatrix us = s.u;
    for (std::size_t j = 0; j < s.s.singular_values.size(); ++j) {
        for (std::size_t i = 0; i < us.rows; ++i) {
            us(i, j) *= s.s.singular_values[j];
        }
    }
    DenseMatrix rec = matmul(us, s.vt);
    return frobenius_norm(sub(rec, m)) / std::max(1e-300, frobenius_norm(m));
}

double orthonormality_error(const DenseMatrix &u) {
    // columns of u
    DenseMatrix g = matmul(transpose(u), u);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.rows; ++i) {
        for (std::size_t j = 0; j < g.cols; ++j) {
            worst = std::max(worst, std::fabs(g(i, j) - (i == j ? 1.0 : 0.0)));
        }
    }
    return worst;
}

} // namespace

// ============================================================================
// matmul
// ============================================================================

TEST(Matmul, IdentityLeavesOperandUnchanged) {
    DenseMatrix m = seeded_gaussian(3, 5, 11);
    DenseMatrix p = matmul(DenseMatrix::identity(3), m);
    EXPECT_EQ(max_abs_diff(p, m), 0.0);
}

TEST(Matmul, ZeroTimesAnythingIsZero) {
    DenseMatrix z(2, 2);
    DenseMatrix m = seeded_gaussian(2, 2, 5);
    DenseMatrix p = matmul(z, m);
    EXPECT_EQ(frobenius_norm(p), 0.0);
}

TEST(Matmul, HandExpandedExample) {
    DenseMatrix a = from_rows({{1, 2}, {3, 4}});
    DenseMatrix b = from_rows({{5}, {6}});
    DenseMatrix p = matmul(a, b);
    EXPECT_DOUBLE_EQ(p(0, 0), 17.0);
    EXPECT_DOUBLE_EQ(p(1, 0), 39.0);
}

TEST(Matmul, DimensionMismatchThrows) {
    DenseMatrix a(2, 3), b(2, 3);
    EXPECT_THROW(matmul(a, b), ShapeError);
}

TEST(Matmul, AgreesWithNaiveOracle) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        DenseMatrix a = seeded_gaussian(17, 9, seed);
        DenseMatrix b = seeded_gaussian(9, 23, seed + 100);
        EXPECT_LT(max_abs_diff(matmul(a, b), oracle::naive_matmul(a, b)), 1e-12);
    }
}

TEST(Matmul, AssociativityOnRandomTriples) {
    DenseMatrix a = seeded_gaussian(6, 4, 21);
    DenseMatrix b = seeded_gaussian(4, 7, 22);
    DenseMatrix c = seeded_gaussian(7, 5, 23);
    DenseMatrix left = matmul(matmul(a, b), c);
    DenseMatrix right = matmul(a, matmul(b, c));
    EXPECT_LT(max_abs_diff(left, right), 1e-10);
}

// ============================================================================
// svd
// ============================================================================

TEST(Svd, DiagonalMatrix) {
    SvdResult s = svd(diag({3, 1}));
    ASSERT_EQ(s.s.singular_values.size(), 2u);
    EXPECT_NEAR(s.s.singular_values[0], 3.0, 1e-12);
    EXPECT_NEAR(s.s.singular_values[1], 1.0, 1e-12);
}

TEST(Svd, IdentityHasUnitSpectrum) {
    SvdResult s = svd(DenseMatrix::identity(4));
    for (double v : s.s.singular_values) {
        EXPECT_NEAR(v, 1.0, 1e-12);
    }
}

TEST(Svd, MatchesGramEigenvalueOracle) {
    DenseMatrix m = seeded_gaussian(8, 6, 42);
    SvdResult s = svd(m);
    DenseMatrix gram = oracle::naive_matmul(transpose(m), m);
    std::vector<double> ev = oracle::jacobi_sym_eigenvalues(gram);
    ASSERT_EQ(ev.size(), s.s.singular_values.size());
    for (std::size_t i = 0; i < ev.size(); ++i) {
        EXPECT_NEAR(s.s.singular_values[i], std::sqrt(std::max(0.0, ev[i])), 1e-8);
    }
}

TEST(Svd, ReconstructionAndOrthonormalityAcrossSeeds) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const std::size_t rows = 3 + seed % 7;
        const std::size_t cols = 3 + (seed * 5) % 9;
        DenseMatrix m = seeded_gaussian(rows, cols, 1000 + seed);
        SvdResult s = svd(m);
        EXPECT_LT(reconstruction_error(m, s), 1e-8) << "seed " << seed;
        EXPECT_LT(orthonormality_error(s.u), 1e-8) << "seed " << seed;
        EXPECT_LT(orthonormality_error(transpose(s.vt)), 1e-8) << "seed " << seed;
        for (std::size_t i = 1; i < s.s.singular_values.size(); ++i) {
            EXPECT_LE(s.s.singular_values[i], s.s.singular_values[i - 1]);
        }
    }
}

TEST(Svd, WideMatrixHandledByTransposition) {
    DenseMatrix m = seeded_gaussian(4, 9, 77);
    SvdResult s = svd(m);
    ASSERT_EQ(s.s.singular_values.size(), 4u);
    EXPECT_LT(reconstruction_error(m, s), 1e-8);
    EXPECT_LT(orthonormality_error(s.u), 1e-8);
}

TEST(Svd, RankDeficientGetsOrthonormalBasisCompletion) {
    DenseMatrix m(5, 3);
    m(0, 0) = 2.0; // rank 1
    m(1, 0) = 1.0;
    SvdResult s = svd(m);
    EXPECT_LT(orthonormality_error(s.u), 1e-8);
    EXPECT_NEAR(s.s.singular_values[1], 0.0, 1e-12);
    EXPECT_NEAR(s.s.singular_values[2], 0.0, 1e-12);
}

TEST(Svd, NonFiniteInputThrows) {
    DenseMatrix m(2, 2);
    m(0, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(svd(m), NumericError);
}

// ============================================================================
// truncate_rank
// ============================================================================

TEST(TruncateRank, FullRankTruncationIsIdentity) {
    DenseMatrix m = seeded_gaussian(6, 4, 9);
    DenseMatrix t = truncate_rank(m, 4);
    EXPECT_LT(max_abs_diff(t, m), 1e-8);
}

TEST(TruncateRank, DiagonalClosedForm) {
    DenseMatrix t = truncate_rank(diag({3, 2, 1}), 1);
    EXPECT_LT(max_abs_diff(t, diag({3, 0, 0})), 1e-12);
    EXPECT_NEAR(spectral_norm(sub(diag({3, 2, 1}), t)), 2.0, 1e-12);
}

TEST(TruncateRank, SpectralErrorIsNextSingularValue) {
    DenseMatrix m = seeded_gaussian(16, 16, 31);
    SvdResult s = svd(m);
    DenseMatrix t = truncate_rank(m, 4);
    const double err = spectral_norm(sub(m, t));
    EXPECT_NEAR(err, s.s.singular_values[4], 1e-6 * s.s.singular_values[4]);
}

TEST(TruncateRank, EckartYoungBothNormsAcrossSeeds) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        DenseMatrix m = seeded_gaussian(10, 8, 500 + seed);
        SvdResult s = svd(m);
        for (std::size_t r : {1u, 3u, 7u}) {
            DenseMatrix t = truncate_rank(m, r);
            DenseMatrix diff = sub(m, t);
            const double sp = spectral_norm(diff);
            EXPECT_NEAR(sp, s.s.singular_values[r], 1e-6 * std::max(1e-12, s.s.singular_values[r]));
            double tail = 0.0;
            for (std::size_t i = r; i < s.s.singular_values.size(); ++i) {
                tail += s.s.singular_values[i] * s.s.singular_values[i];
            }
            const double fro2 = frobenius_norm(diff) * frobenius_norm(diff);
            EXPECT_NEAR(fro2, tail, 1e-6 * std::max(1e-12, tail));
        }
    }
}

TEST(TruncateRank, OutOfRangeThrows) {
    DenseMatrix m = seeded_gaussian(4, 4, 3);
    EXPECT_THROW(truncate_rank(m, 0), ParameterError);
    EXPECT_THROW(truncate_rank(m, 5), ParameterError);
}

// ============================================================================
// norms, nnz, numeric_rank
// ============================================================================

TEST(Norms, SpectralOfDiagonal) { EXPECT_NEAR(spectral_norm(diag({5, 2})), 5.0, 1e-12); }

TEST(Norms, FrobeniusThreeFour) {
    EXPECT_DOUBLE_EQ(frobenius_norm(from_rows({{3, 4}})), 5.0);
}

TEST(Norms, NnzZeroMatrix) { EXPECT_EQ(nnz(DenseMatrix(3, 3), 0.0), 0u); }

TEST(Norms, NnzThresholdStrict) {
    DenseMatrix m(1, 3);
    m(0, 0) = 0.5;
    m(0, 1) = 1e-13;
    EXPECT_EQ(nnz(m, 1e-12), 1u);
    EXPECT_EQ(nnz(m, 0.0), 2u);
    EXPECT_THROW(nnz(m, -1.0), ParameterError);
}

TEST(Norms, NumericRank) {
    EXPECT_EQ(numeric_rank(diag({3, 2, 1})), 3u);
    EXPECT_EQ(numeric_rank(diag({3, 2, 0})), 2u);
    EXPECT_EQ(numeric_rank(DenseMatrix(4, 4)), 0u);
    DenseMatrix ones(6, 6, 1.0);
    EXPECT_EQ(numeric_rank(ones), 1u);
    EXPECT_THROW(numeric_rank(ones, 0.0), ParameterError);
}

// ============================================================================
// seeded generators
// ============================================================================

TEST(Random, SameSeedBitIdentical) {
    DenseMatrix a = seeded_gaussian(13, 7, 99);
    DenseMatrix b = seeded_gaussian(13, 7, 99);
    EXPECT_TRUE(bit_identical(a, b));
    DenseMatrix u1 = seeded_uniform(5, 5, 12, -1.0, 2.0);
    DenseMatrix u2 = seeded_uniform(5, 5, 12, -1.0, 2.0);
    EXPECT_TRUE(bit_identical(u1, u2));
}

TEST(Random, DifferentSeedsDiffer) {
    DenseMatrix a = seeded_gaussian(8, 8, 1);
    DenseMatrix b = seeded_gaussian(8, 8, 2);
    EXPECT_FALSE(bit_identical(a, b));
}

TEST(Random, GaussianMoments) {
    DenseMatrix m = seeded_gaussian(1000, 1000, 2024);
    double mean = 0.0;
    for (double x : m.data) {
        mean += x;
    }
    mean /= static_cast<double>(m.data.size());
    double var = 0.0;
    for (double x : m.data) {
        var += (x - mean) * (x - mean);
    }
    var /= static_cast<double>(m.data.size() - 1);
    EXPECT_NEAR(mean, 0.0, 0.01);
    EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(Random, UniformRespectsBounds) {
    DenseMatrix m = seeded_uniform(100, 100, 7, -2.0, 3.0);
    for (double x : m.data) {
        EXPECT_GE(x, -2.0);
        EXPECT_LT(x, 3.0);
    }
}

TEST(Random, SampleIndicesDistinctSorted) {
    Rng rng(5);
    auto idx = sample_indices(1000, 100, rng);
    ASSERT_EQ(idx.size(), 100u);
    for (std::size_t i = 1; i < idx.size(); ++i) {
        EXPECT_LT(idx[i - 1], idx[i]);
    }
    EXPECT_LT(idx.back(), 1000u);
}
