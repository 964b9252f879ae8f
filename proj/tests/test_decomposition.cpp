#include <gtest/gtest.h>

#include "fedtucker/decomposition.hpp"
#include "oracles.hpp"

using namespace fedtucker;

namespace {

// Higher-order orthogonal iteration as an estimate of the best multilinear-rank error.
double hooi_error(const DenseTensor& t, const RankTuple& ranks, int sweeps)
{
    std::vector<Matrix> f = hosvd(t, ranks).factors;
    for (int s = 0; s < sweeps; ++s)
        for (std::size_t k = 0; k < ranks.size(); ++k) {
            DenseTensor y = t;
            for (std::size_t q = 0; q < ranks.size(); ++q)
                if (q != k)
                    y = ttm(y, f[q], q);
            Eigen::JacobiSVD<Matrix> svd(unfold(y, k), Eigen::ComputeThinU);
            f[k] = svd.matrixU().leftCols(ranks[k]);
        }
    DenseTensor core = t;
    for (std::size_t q = 0; q < ranks.size(); ++q)
        core = ttm(core, f[q], q);
    return (tucker_reconstruct(core, f) - t).norm();
}

DenseTensor rank_one(const std::vector<Eigen::VectorXd>& vs)
{
    std::vector<Index> e;
    for (const auto& v : vs)
        e.push_back(v.size());
    DenseTensor t{Shape(e)};
    for (Index lin = 0; lin < t.numel(); ++lin) {
        auto idx = oracle::multi_index(lin, t.shape());
        double p = 1.0;
        for (std::size_t k = 0; k < vs.size(); ++k)
            p *= vs[k][idx[k]];
        t.values()[lin] = p;
    }
    return t;
}

} // namespace

TEST(TruncatedSvd, IdentityRankTwo)
{
    SvdResult r = truncated_svd(Matrix::Identity(3, 3), 2);
    ASSERT_EQ(r.s.size(), 2);
    EXPECT_NEAR(r.s[0], 1.0, 1e-15);
    EXPECT_NEAR(r.s[1], 1.0, 1e-15);
}

TEST(TruncatedSvd, RankOneExact)
{
    std::mt19937_64 g(11);
    Matrix u = oracle::random_matrix(5, 1, g), v = oracle::random_matrix(4, 1, g);
    Matrix m = u * v.transpose();
    SvdResult r = truncated_svd(m, 1);
    EXPECT_LT((r.u * r.s.asDiagonal() * r.v.transpose() - m).norm(), 1e-12);
}

TEST(TruncatedSvd, FullRankAgainstEigenOracle)
{
    std::mt19937_64 g(12);
    for (int rep = 0; rep < 20; ++rep) {
        Matrix m = oracle::random_matrix(5, 4, g);
        SvdResult r = truncated_svd(m, 4);
        EXPECT_LT((r.u * r.s.asDiagonal() * r.v.transpose() - m).norm(), 1e-10);
        Eigen::VectorXd ev = oracle::singular_values_eig(m.transpose() * m).cwiseSqrt();
        EXPECT_LT((r.s - ev).norm(), 1e-10);
        EXPECT_LT(orthonormality_defect(r.u), 1e-10);
        EXPECT_LT(orthonormality_defect(r.v), 1e-10);
    }
}

TEST(TruncatedSvd, SignConventionLargestEntryNonNegative)
{
    std::mt19937_64 g(13);
    Matrix m = oracle::random_matrix(6, 4, g);
    SvdResult a = truncated_svd(m, 3), b = truncated_svd(-m, 3);
    for (Index j = 0; j < 3; ++j) {
        Index i;
        a.u.col(j).cwiseAbs().maxCoeff(&i);
        EXPECT_GE(a.u(i, j), 0.0);
    }
    EXPECT_LT((a.u - b.u).norm(), 1e-10);
}

TEST(TruncatedSvd, RankDeficientCompletesBasis)
{
    Matrix m = Matrix::Zero(4, 3);
    m(0, 0) = 1.0;
    SvdResult r = truncated_svd(m, 3);
    EXPECT_TRUE(r.completed);
    EXPECT_LT(orthonormality_defect(r.u), 1e-12);
}

TEST(TruncatedSvd, InvalidRankThrows)
{
    EXPECT_THROW(truncated_svd(Matrix::Identity(3, 3), 0), RankError);
    EXPECT_THROW(truncated_svd(Matrix::Identity(3, 3), 4), RankError);
}

TEST(Hosvd, FullRanksExact)
{
    std::mt19937_64 g(14);
    DenseTensor t = oracle::random_tensor(Shape{3, 4, 2}, g);
    EXPECT_LT((tucker_reconstruct(hosvd(t, {3, 4, 2})) - t).norm(), 1e-10);
}

TEST(Hosvd, RankOneExact)
{
    DenseTensor t = rank_one({Eigen::Vector3d(1, -2, 0.5), Eigen::Vector2d(3, 1), Eigen::Vector4d(1, 2, 3, 4)});
    EXPECT_LT((tucker_reconstruct(hosvd(t, {1, 1, 1})) - t).norm(), 1e-10);
}

TEST(Hosvd, MatchesTwoStepOracle)
{
    std::mt19937_64 g(15);
    DenseTensor t = oracle::random_tensor(Shape{3, 3, 3}, g);
    std::vector<Matrix> f;
    for (std::size_t k = 0; k < 3; ++k) {
        Eigen::JacobiSVD<Matrix> svd(oracle::unfold_enum(t, k), Eigen::ComputeThinU);
        f.push_back(svd.matrixU().leftCols(2));
    }
    DenseTensor core = t;
    for (std::size_t k = 0; k < 3; ++k)
        core = ttm(core, f[k], k);
    const double expect = (tucker_reconstruct(core, f) - t).norm();
    const double got = (tucker_reconstruct(hosvd(t, {2, 2, 2})) - t).norm();
    EXPECT_NEAR(got, expect, 1e-10);
}

TEST(StHosvd, FullRanksExact)
{
    std::mt19937_64 g(16);
    DenseTensor t = oracle::random_tensor(Shape{4, 3, 5, 2}, g);
    TuckerFactors f = st_hosvd(t, {4, 3, 5, 2});
    EXPECT_LT((tucker_reconstruct(f) - t).norm(), 1e-10);
    for (const auto& s : f.factors)
        EXPECT_LT(orthonormality_defect(s), 1e-10);
}

TEST(StHosvd, WorkingTensorShrinksAfterEachMode)
{
    std::mt19937_64 g(17);
    DenseTensor t = oracle::random_tensor(Shape{5, 4, 3}, g);
    std::vector<Shape> seen;
    st_hosvd(t, {2, 3, 1}, [&](std::size_t, const DenseTensor& w) { seen.push_back(w.shape()); });
    ASSERT_EQ(seen.size(), 3u);
    EXPECT_EQ(seen[0], (Shape{2, 4, 3}));
    EXPECT_EQ(seen[1], (Shape{2, 3, 3}));
    EXPECT_EQ(seen[2], (Shape{2, 3, 1}));
}

TEST(StHosvd, QuasiOptimalAgainstHooi)
{
    std::mt19937_64 g(18);
    for (int rep = 0; rep < 5; ++rep) {
        DenseTensor t = oracle::random_tensor(Shape{4, 4, 4}, g);
        const double best = hooi_error(t, {2, 2, 2}, 200);
        const double got = (tucker_reconstruct(st_hosvd(t, {2, 2, 2})) - t).norm();
        EXPECT_LE(got, std::sqrt(3.0) * best + 1e-12);
        EXPECT_GE(got, best - 1e-9);
    }
}

TEST(StHosvd, BadRanksThrow)
{
    DenseTensor t(Shape{3, 3});
    EXPECT_THROW(st_hosvd(t, {2}), RankError);
    EXPECT_THROW(st_hosvd(t, {4, 2}), RankError);
    EXPECT_THROW(st_hosvd(t, {0, 2}), RankError);
}

TEST(OrthonormalBasisQr, OrthonormalInputKeepsColumnSpace)
{
    std::mt19937_64 g(19);
    Matrix q0 = oracle::random_orthonormal(6, 3, g);
    Matrix q = orthonormal_basis_qr(q0);
    EXPECT_LT(oracle::projector_distance(q, q0), 1e-10);
}

TEST(OrthonormalBasisQr, ReconstructsInput)
{
    std::mt19937_64 g(20);
    Matrix m = oracle::random_matrix(6, 3, g);
    Matrix q = orthonormal_basis_qr(m);
    Matrix r = q.transpose() * m;
    EXPECT_LT((q * r - m).norm(), 1e-10);
    EXPECT_LT(orthonormality_defect(q), 1e-12);
    for (Index j = 0; j < 3; ++j)
        EXPECT_GT(r(j, j), 0.0);
    EXPECT_LT(r.triangularView<Eigen::StrictlyLower>().toDenseMatrix().norm(), 1e-10);
}

TEST(OrthonormalBasisQr, DuplicatedColumnStillOrthonormal)
{
    std::mt19937_64 g(21);
    Matrix m = oracle::random_matrix(6, 3, g);
    m.col(2) = m.col(0);
    QrBasis b = orthonormal_basis_qr_checked(m);
    EXPECT_TRUE(b.completed);
    EXPECT_LT(orthonormality_defect(b.q), 1e-12);
    // Deterministic: same answer twice.
    EXPECT_EQ(orthonormal_basis_qr(m), b.q);
    // The two independent columns are still spanned.
    EXPECT_LT((b.q * (b.q.transpose() * m.leftCols(2)) - m.leftCols(2)).norm(), 1e-10);
}

TEST(ProjectToRank, LowRankInputUnchanged)
{
    std::mt19937_64 g(22);
    DenseTensor core = oracle::random_tensor(Shape{2, 1, 2}, g);
    std::vector<Matrix> f{oracle::random_matrix(4, 2, g), oracle::random_matrix(3, 1, g),
                          oracle::random_matrix(5, 2, g)};
    DenseTensor t = tucker_reconstruct(core, f);
    EXPECT_LT((project_to_rank(t, {2, 1, 2}) - t).norm(), 1e-10 * (1.0 + t.norm()));
    EXPECT_LT((project_to_rank(t, {3, 2, 2}) - t).norm(), 1e-10 * (1.0 + t.norm()));
}

TEST(ProjectToRank, Idempotent)
{
    std::mt19937_64 g(23);
    DenseTensor t = oracle::random_tensor(Shape{5, 4, 3}, g);
    DenseTensor p = project_to_rank(t, {2, 3, 2});
    EXPECT_LT((project_to_rank(p, {2, 3, 2}) - p).norm(), 1e-10);
}

TEST(ProjectToRank, TrailingSingularValuesVanish)
{
    std::mt19937_64 g(24);
    DenseTensor t = oracle::random_tensor(Shape{5, 4, 6}, g);
    const RankTuple r{2, 3, 2};
    DenseTensor p = project_to_rank(t, r);
    for (std::size_t k = 0; k < 3; ++k) {
        Eigen::VectorXd s = oracle::singular_values(unfold(p, k));
        for (Index i = r[k]; i < s.size(); ++i)
            EXPECT_LT(s[i], 1e-8);
    }
}

TEST(NumericalRank, CountsAboveTolerance)
{
    std::mt19937_64 g(25);
    Matrix m = oracle::random_matrix(6, 2, g) * oracle::random_matrix(2, 5, g);
    EXPECT_EQ(numerical_rank(m), 2);
    EXPECT_EQ(numerical_rank(Matrix::Zero(3, 3)), 0);
}
