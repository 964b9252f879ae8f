#include <gtest/gtest.h>

#include <cstring>

#include "fedtucker/tensor.hpp"
#include "oracles.hpp"

using namespace fedtucker;

namespace {

DenseTensor iota(const Shape& s)
{
    DenseTensor t(s);
    for (Index i = 0; i < t.numel(); ++i)
        t.values()[i] = static_cast<double>(i + 1);
    return t;
}

} // namespace

TEST(Unfold, MatrixModeZeroIsItself)
{
    Matrix m(2, 2);
    m << 1, 2, 3, 4;
    EXPECT_EQ(unfold(DenseTensor::from_matrix(m), 0), m);
}

TEST(Unfold, ShapeRule)
{
    DenseTensor t(Shape{2, 3, 4});
    Matrix m = unfold(t, 1);
    EXPECT_EQ(m.rows(), 3);
    EXPECT_EQ(m.cols(), 8);
}

TEST(Unfold, EightValuesModeZero)
{
    Matrix expect(2, 4);
    expect << 1, 3, 5, 7, 2, 4, 6, 8;
    EXPECT_EQ(unfold(iota(Shape{2, 2, 2}), 0), expect);
    EXPECT_EQ(oracle::unfold_enum(iota(Shape{2, 2, 2}), 0), expect);
}

TEST(Unfold, MatchesEnumerationOracle)
{
    std::mt19937_64 g(1);
    for (auto s : {Shape{3}, Shape{2, 5}, Shape{3, 4, 2}, Shape{2, 3, 4, 5}, Shape{6, 1, 3, 2}}) {
        DenseTensor t = oracle::random_tensor(s, g);
        for (std::size_t k = 0; k < s.order(); ++k)
            EXPECT_EQ(unfold(t, k), oracle::unfold_enum(t, k)) << s.str() << " mode " << k;
    }
}

TEST(Unfold, BadModeThrows)
{
    EXPECT_THROW(unfold(DenseTensor(Shape{2, 2}), 2), ModeIndexError);
}

TEST(Fold, RoundTripBitwise)
{
    std::mt19937_64 g(2);
    for (auto s : {Shape{2, 3, 4}, Shape{5, 2}, Shape{2, 2, 3, 2}}) {
        DenseTensor t = oracle::random_tensor(s, g);
        for (std::size_t k = 0; k < s.order(); ++k) {
            DenseTensor back = fold(unfold(t, k), k, s);
            ASSERT_EQ(back.shape(), s);
            EXPECT_EQ(0, std::memcmp(back.values().data(), t.values().data(), sizeof(double) * t.numel()));
        }
    }
}

TEST(Fold, ZeroMatrixGivesZeroTensor)
{
    DenseTensor t = fold(Matrix::Zero(3, 8), 1, Shape{2, 3, 4});
    EXPECT_EQ(t.values().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Fold, EightValuesExample)
{
    Matrix m(2, 4);
    m << 1, 3, 5, 7, 2, 4, 6, 8;
    DenseTensor t = fold(m, 0, Shape{2, 2, 2});
    for (Index i = 0; i < 8; ++i)
        EXPECT_EQ(t.values()[i], static_cast<double>(i + 1));
}

TEST(Fold, WrongMatrixShapeThrows)
{
    EXPECT_THROW(fold(Matrix::Zero(3, 3), 0, Shape{2, 2}), ShapeError);
}

TEST(Ttm, IdentityLeavesTensorUnchanged)
{
    std::mt19937_64 g(3);
    DenseTensor t = oracle::random_tensor(Shape{3, 4, 2}, g);
    for (std::size_t k = 0; k < 3; ++k)
        EXPECT_EQ(ttm(t, Matrix::Identity(t.shape()[k], t.shape()[k]), k).values(), t.values());
}

TEST(Ttm, HandExample)
{
    Matrix x(2, 2);
    x << 1, 2, 3, 4;
    DenseTensor y = ttm(DenseTensor::from_matrix(x), Matrix::Ones(2, 1), 0);
    ASSERT_EQ(y.shape(), (Shape{1, 2}));
    EXPECT_EQ(y({0, 0}), 4.0);
    EXPECT_EQ(y({0, 1}), 6.0);
}

TEST(Ttm, ResultShapeHasRankInMode)
{
    DenseTensor t(Shape{4, 5, 6});
    EXPECT_EQ(ttm(t, Matrix::Zero(5, 2), 1).shape(), (Shape{4, 2, 6}));
}

TEST(Ttm, UnfoldingIdentity)
{
    std::mt19937_64 g(4);
    std::uniform_int_distribution<Index> ext(1, 6);
    for (std::size_t d = 1; d <= 4; ++d)
        for (int rep = 0; rep < 10; ++rep) {
            std::vector<Index> e(d);
            for (auto& v : e)
                v = ext(g);
            Shape s(e);
            DenseTensor t = oracle::random_tensor(s, g);
            for (std::size_t k = 0; k < d; ++k) {
                Matrix m = oracle::random_matrix(s[k], ext(g), g);
                Matrix lhs = unfold(ttm(t, m, k), k);
                Matrix rhs = m.transpose() * unfold(t, k);
                EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
                Matrix a = oracle::random_matrix(ext(g), s[k], g);
                Matrix lhs2 = unfold(mode_product(t, a, k), k);
                EXPECT_LT((lhs2 - a * unfold(t, k)).cwiseAbs().maxCoeff(), 1e-12);
            }
        }
}

TEST(Ttm, KroneckerIdentity)
{
    std::mt19937_64 g(5);
    for (int rep = 0; rep < 10; ++rep) {
        Shape s{3, 4, 2, 3};
        DenseTensor t = oracle::random_tensor(s, g);
        std::vector<Matrix> ms;
        for (std::size_t k = 0; k < 4; ++k)
            ms.push_back(oracle::random_matrix(2 + static_cast<Index>(k % 2), s[k], g));
        DenseTensor y = t;
        for (std::size_t k = 0; k < 4; ++k)
            y = mode_product(y, ms[k], k);
        for (std::size_t k = 0; k < 4; ++k) {
            Matrix kr = Matrix::Ones(1, 1);
            for (std::size_t q = 4; q-- > 0;)
                if (q != k)
                    kr = oracle::kron(kr, ms[q]);
            Matrix rhs = ms[k] * unfold(t, k) * kr.transpose();
            EXPECT_LT((unfold(y, k) - rhs).cwiseAbs().maxCoeff(), 1e-10);
        }
    }
}

TEST(Ttm, LinearInBothArguments)
{
    std::mt19937_64 g(6);
    DenseTensor a = oracle::random_tensor(Shape{3, 4}, g), b = oracle::random_tensor(Shape{3, 4}, g);
    Matrix s = oracle::random_matrix(4, 2, g), u = oracle::random_matrix(4, 2, g);
    const double al = 0.7, be = -1.3;
    DenseTensor lhs = ttm(al * a + be * b, s, 1);
    DenseTensor rhs = al * ttm(a, s, 1) + be * ttm(b, s, 1);
    EXPECT_LT((lhs - rhs).values().cwiseAbs().maxCoeff(), 1e-12);
    DenseTensor lhs2 = ttm(a, al * s + be * u, 1);
    DenseTensor rhs2 = al * ttm(a, s, 1) + be * ttm(a, u, 1);
    EXPECT_LT((lhs2 - rhs2).values().cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Ttm, RowMismatchThrows)
{
    EXPECT_THROW(ttm(DenseTensor(Shape{3, 4}), Matrix::Zero(3, 2), 1), ShapeError);
}

TEST(TuckerReconstruct, ScalarCoreWithBasisColumns)
{
    DenseTensor core(Shape{1, 1, 1});
    core.values()[0] = 2.0;
    std::vector<Matrix> f{Matrix::Identity(3, 1), Matrix::Identity(2, 1), Matrix::Identity(4, 1)};
    DenseTensor x = tucker_reconstruct(core, f);
    ASSERT_EQ(x.shape(), (Shape{3, 2, 4}));
    EXPECT_EQ(x.values()[0], 2.0);
    EXPECT_EQ(x.values().cwiseAbs().sum(), 2.0);
}

TEST(TuckerReconstruct, MatchesNestedLoopOracle)
{
    std::mt19937_64 g(7);
    DenseTensor core = oracle::random_tensor(Shape{2, 3, 2}, g);
    std::vector<Matrix> f{oracle::random_matrix(3, 2, g), oracle::random_matrix(4, 3, g),
                          oracle::random_matrix(2, 2, g)};
    DenseTensor x = tucker_reconstruct(core, f);
    ASSERT_EQ(x.shape(), (Shape{3, 4, 2}));
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 4; ++j)
            for (Index l = 0; l < 2; ++l) {
                double v = 0.0;
                for (Index a = 0; a < 2; ++a)
                    for (Index b = 0; b < 3; ++b)
                        for (Index c = 0; c < 2; ++c)
                            v += core({a, b, c}) * f[0](i, a) * f[1](j, b) * f[2](l, c);
                EXPECT_NEAR(x({i, j, l}), v, 1e-12);
            }
}

TEST(TuckerReconstruct, FactorCountMismatchThrows)
{
    std::vector<Matrix> f{Matrix::Identity(2, 2)};
    EXPECT_THROW(tucker_reconstruct(DenseTensor(Shape{2, 2}), f), ShapeError);
}

TEST(ConcatLast, SingleTensor)
{
    DenseTensor t = iota(Shape{2, 3});
    std::vector<DenseTensor> v{t};
    DenseTensor c = concat_last(v);
    EXPECT_EQ(c.shape(), (Shape{2, 3, 1}));
    EXPECT_EQ(c.values(), t.values());
}

TEST(ConcatLast, TwoMatricesSlicesRecoverInputs)
{
    std::mt19937_64 g(8);
    std::vector<DenseTensor> v{oracle::random_tensor(Shape{2, 2}, g), oracle::random_tensor(Shape{2, 2}, g)};
    DenseTensor c = concat_last(v);
    ASSERT_EQ(c.shape(), (Shape{2, 2, 2}));
    for (Index s = 0; s < 2; ++s)
        for (Index i = 0; i < 2; ++i)
            for (Index j = 0; j < 2; ++j)
                EXPECT_EQ(c({i, j, s}), v[static_cast<std::size_t>(s)]({i, j}));
}

TEST(ConcatLast, ModeZeroUnfoldingIsBlockMatrix)
{
    std::mt19937_64 g(9);
    std::vector<DenseTensor> v{oracle::random_tensor(Shape{2, 2}, g), oracle::random_tensor(Shape{2, 2}, g)};
    Matrix block(2, 4);
    block << unfold(v[0], 0), unfold(v[1], 0);
    Matrix w = unfold(concat_last(v), 0);
    // Same columns under this convention; in general only singular values must agree.
    EXPECT_LT((w - block).norm(), 1e-15);
    EXPECT_LT((oracle::singular_values(w) - oracle::singular_values(block)).norm(), 1e-12);
}

TEST(ConcatLast, ShapeMismatchThrows)
{
    std::vector<DenseTensor> v{DenseTensor(Shape{2, 2}), DenseTensor(Shape{2, 3})};
    EXPECT_THROW(concat_last(v), ShapeError);
}

TEST(Shape, RejectsNonPositiveExtent)
{
    EXPECT_THROW(Shape({2, 0}), ShapeError);
}
