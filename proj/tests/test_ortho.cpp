#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "shira/ortho.hpp"
#include "support/oracles.hpp"

using namespace shira;

namespace {

SparseAdapter adapter_from_dense(const DenseMatrix &d, const std::string &name = "a") {
    SparseAdapter a;
    a.name = name;
    a.rows = d.rows;
    a.cols = d.cols;
    for (std::size_t i = 0; i < d.data.size(); ++i) {
        if (d.data[i] != 0.0) {
            a.indices.push_back(i);
            a.values.push_back(d.data[i]);
        }
    }
    return a;
}

} // namespace

// ============================================================================
// gram product and awom/awor
// ============================================================================

TEST(GramProduct, MatchesNaiveOracleDense) {
    DenseMatrix a1 = seeded_gaussian(7, 5, 1);
    DenseMatrix a2 = seeded_gaussian(7, 5, 2);
    DenseMatrix p = gram_product(a1, a2);
    DenseMatrix ref = oracle::naive_matmul(transpose(a1), a2);
    EXPECT_LT(max_abs_diff(p, ref), 1e-12);
}

TEST(GramProduct, MatchesNaiveOracleSparse) {
    // force the sparse path with 99% zeros
    DenseMatrix a1(40, 40), a2(40, 40);
    Rng rng(3);
    for (int k = 0; k < 16; ++k) {
        a1.data[rng.index(1600)] = rng.gaussian();
        a2.data[rng.index(1600)] = rng.gaussian();
    }
    DenseMatrix p = gram_product(a1, a2);
    DenseMatrix ref = oracle::naive_matmul(transpose(a1), a2);
    EXPECT_LT(max_abs_diff(p, ref), 1e-12);
}

TEST(Awom, ZeroOperandGivesZero) {
    DenseMatrix a1 = seeded_gaussian(6, 6, 4);
    DenseMatrix zero(6, 6);
    EXPECT_EQ(awom(a1, zero), 0.0);
}

TEST(Awom, IdentityPairIsSqrtM) {
    DenseMatrix id = DenseMatrix::identity(9);
    EXPECT_NEAR(awom(id, id), 3.0, 1e-12);
}

TEST(Awom, MatchesExplicitTripleLoopOracle) {
    DenseMatrix a1 = seeded_gaussian(4, 4, 5);
    DenseMatrix a2 = seeded_gaussian(4, 4, 6);
    double expect = frobenius_norm(oracle::naive_matmul(transpose(a1), a2));
    EXPECT_NEAR(awom(a1, a2), expect, 1e-12);
}

TEST(Awom, SpectralVariantBoundedByFrobenius) {
    DenseMatrix a1 = seeded_gaussian(8, 8, 7);
    DenseMatrix a2 = seeded_gaussian(8, 8, 8);
    EXPECT_LE(awom(a1, a2, AwomNorm::spectral), awom(a1, a2, AwomNorm::frobenius) + 1e-12);
}

TEST(Awor, ZeroProductIsFullySparse) {
    DenseMatrix a1 = seeded_gaussian(5, 5, 9);
    DenseMatrix zero(5, 5);
    EXPECT_DOUBLE_EQ(awor(a1, zero), 1.0);
}

TEST(Awor, DenseGaussiansHaveNoZeros) {
    DenseMatrix a1 = seeded_gaussian(64, 64, 10);
    DenseMatrix a2 = seeded_gaussian(64, 64, 11);
    EXPECT_EQ(awor(a1, a2, 1e-12), 0.0);
    // oracle: every product entry is nonzero
    DenseMatrix p = oracle::naive_matmul(transpose(a1), a2);
    for (double x : p.data) {
        EXPECT_GT(std::fabs(x), 1e-12);
    }
}

TEST(Awor, StructPairEnumeratedSupport) {
    // S1 = row 0, S2 = row 2 (values), both with identity diagonal; the
    // product support is I + S2 + S1^T: 4 diagonal + 3 off-diagonal from S2
    // row + 3 from S1 column minus shared positions = 9 cells on a 4x4 grid
    const std::size_t m = 4;
    StructOrthoReport rep = verify_struct_orthogonality(4, 0, 2, m, 77);
    EXPECT_TRUE(rep.product_matches);
    EXPECT_EQ(rep.product_nnz, 9u);
    EXPECT_NEAR(rep.awor_value, 1.0 - 9.0 / 16.0, 1e-15);
}

TEST(Awor, MonotoneNonDecreasingInEps) {
    DenseMatrix a1 = seeded_gaussian(12, 12, 12);
    DenseMatrix a2 = seeded_gaussian(12, 12, 13);
    double prev = -1.0;
    for (double eps : {0.0, 1e-12, 1e-3, 1.0, 100.0}) {
        double v = awor(a1, a2, eps);
        EXPECT_GE(v, prev);
        prev = v;
    }
}

TEST(Awor, ShapeMismatchThrows) {
    DenseMatrix a1(3, 4), a2(4, 3);
    EXPECT_THROW(awor(a1, a2), ShapeError);
    EXPECT_THROW(awom(a1, a2), ShapeError);
}

// ============================================================================
// verify_null_space
// ============================================================================

TEST(NullSpace, RowDisjointSupportsAreStructurallyOrthogonal) {
    DenseMatrix d1(8, 8), d2(8, 8);
    Rng rng(14);
    for (std::size_t j = 0; j < 8; ++j) {
        d1(1, j) = rng.gaussian(); // rows 1 and 3 only
        d1(3, j) = rng.gaussian();
        d2(0, j) = rng.gaussian(); // rows 0 and 5 only
        d2(5, j) = rng.gaussian();
    }
    NullSpaceCheck r = verify_null_space(adapter_from_dense(d1), adapter_from_dense(d2));
    EXPECT_TRUE(r.orthogonal);
    EXPECT_EQ(r.residual, 0.0);
}

TEST(NullSpace, SelfPairIsNotOrthogonal) {
    DenseMatrix d(6, 6);
    d(2, 3) = 1.5;
    d(4, 1) = -0.5;
    SparseAdapter a = adapter_from_dense(d);
    NullSpaceCheck r = verify_null_space(a, a);
    EXPECT_FALSE(r.orthogonal);
    EXPECT_NEAR(r.residual, frobenius_norm(oracle::naive_matmul(transpose(d), d)), 1e-12);
}

TEST(NullSpace, SvdProjectedPairPasses) {
    // project a random dense matrix onto the orthogonal complement of a1's
    // column space, built from the left singular vectors
    DenseMatrix d1 = to_dense(adapter_from_dense(seeded_gaussian(12, 9, 15)));
    // sparsify a1 to look like an adapter
    DenseMatrix sparse1(12, 9);
    Rng rng(16);
    for (int k = 0; k < 10; ++k) {
        sparse1.data[rng.index(sparse1.size())] = rng.gaussian();
    }
    SvdResult s = svd(sparse1);
    const std::size_t r = numeric_rank(sparse1);
    DenseMatrix d2 = seeded_gaussian(12, 9, 17);
    // d2 <- (I - U_r U_r^T) d2
    DenseMatrix ur(12, std::max<std::size_t>(r, 1));
    for (std::size_t i = 0; i < 12; ++i) {
        for (std::size_t j = 0; j < r; ++j) {
            ur(i, j) = s.u(i, j);
        }
    }
    DenseMatrix proj = matmul(ur, matmul(transpose(ur), d2));
    d2 = sub(d2, proj);
    NullSpaceCheck check = verify_null_space(adapter_from_dense(sparse1), adapter_from_dense(d2));
    EXPECT_TRUE(check.orthogonal);
    EXPECT_LE(check.residual, 1e-10);
}

TEST(NullSpace, ConsistentWithAwom) {
    DenseMatrix d1(8, 8), d2(8, 8);
    Rng rng(18);
    for (std::size_t j = 0; j < 8; ++j) {
        d1(2, j) = rng.gaussian();
        d2(6, j) = rng.gaussian();
    }
    SparseAdapter a1 = adapter_from_dense(d1), a2 = adapter_from_dense(d2);
    NullSpaceCheck r = verify_null_space(a1, a2);
    ASSERT_TRUE(r.orthogonal);
    EXPECT_LE(awom(to_dense(a1), to_dense(a2)), 1e-10);
}

// ============================================================================
// verify_struct_orthogonality
// ============================================================================

TEST(StructOrtho, IdentityOnlyAdapters) {
    // zero stride rows: use a frequency larger than any row index hits twice
    StructOrthoReport rep = verify_struct_orthogonality(7, 5, 6, 4, 20);
    // offsets 5,6 exceed m=4 so S1 = S2 = 0 and the product is the identity
    EXPECT_TRUE(rep.product_matches);
    EXPECT_EQ(rep.product_nnz, 4u);
    EXPECT_NEAR(rep.awor_value, 1.0 - 1.0 / 4.0, 1e-15);
}

TEST(StructOrtho, BoundHoldsAcrossSeeds) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        StructOrthoReport rep = verify_struct_orthogonality(16, 1, 9, 128, seed);
        EXPECT_TRUE(rep.product_matches) << "seed " << seed;
        EXPECT_TRUE(rep.bound_holds) << "seed " << seed;
        EXPECT_GE(rep.awor_value, rep.awor_bound);
    }
}

TEST(StructOrtho, OverlappingOffsetsRejected) {
    EXPECT_THROW(verify_struct_orthogonality(8, 3, 3, 32, 1), ParameterError);
    EXPECT_THROW(verify_struct_orthogonality(8, 9, 1, 32, 1), ParameterError);
}

// ============================================================================
// simulate_fig4
// ============================================================================

TEST(Simulate, ReportShapeAndDeterminism) {
    std::vector<AdapterStyle> styles(2);
    styles[0].kind = StyleKind::dense;
    styles[1].kind = StyleKind::shira_struct;
    styles[1].frequency = 8;
    OrthoReport r1 = simulate_fig4({16, 32}, styles, 3, 7);
    // 2 styles + 2 overlap rows per dim
    ASSERT_EQ(r1.rows.size(), 8u);
    OrthoReport r2 = simulate_fig4({16, 32}, styles, 3, 7);
    for (std::size_t i = 0; i < r1.rows.size(); ++i) {
        EXPECT_EQ(r1.rows[i].awom_mean, r2.rows[i].awom_mean);
        EXPECT_EQ(r1.rows[i].awor_mean, r2.rows[i].awor_mean);
    }
}

TEST(Simulate, DenseStyleHasNearZeroAwor) {
    std::vector<AdapterStyle> styles(1);
    styles[0].kind = StyleKind::dense;
    OrthoReport r = simulate_fig4({64}, styles, 5, 3, 1e-12, false);
    ASSERT_EQ(r.rows.size(), 1u);
    EXPECT_LT(r.rows[0].awor_mean, 0.01);
}

TEST(Simulate, StructStyleBeatsLemmaBound) {
    std::vector<AdapterStyle> styles(1);
    styles[0].kind = StyleKind::shira_struct;
    styles[0].frequency = 16;
    OrthoReport r = simulate_fig4({128}, styles, 5, 9, 1e-12, false);
    // selected fraction is roughly 1/f plus the diagonal
    const double selected = 1.0 / 16.0 + 1.0 / 128.0;
    EXPECT_GE(r.rows[0].awor_mean, 1.0 - 3.0 * selected);
}

TEST(Simulate, BadParamsRejected) {
    std::vector<AdapterStyle> styles(1);
    EXPECT_THROW(simulate_fig4({}, styles, 3, 1), ParameterError);
    EXPECT_THROW(simulate_fig4({1}, styles, 3, 1), ParameterError);
    EXPECT_THROW(simulate_fig4({16}, styles, 0, 1), ParameterError);
}

TEST(Simulate, CsvSchema) {
    std::vector<AdapterStyle> styles(1);
    styles[0].kind = StyleKind::shira_wm;
    OrthoReport r = simulate_fig4({32}, styles, 2, 5);
    const std::string path =
        (std::filesystem::temp_directory_path() / "shira_ortho_test.csv").string();
    write_ortho_csv(path, r);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "dim,style,overlap_mode,awom_mean,awom_std,awor_mean,awor_std,trials");
    std::size_t rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++rows;
    }
    EXPECT_EQ(rows, r.rows.size());
}
