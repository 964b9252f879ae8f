#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>

#include "fedtucker/compression.hpp"
#include "oracles.hpp"

using namespace fedtucker;

TEST(TopK, HundredPercentKeepsAll)
{
    std::mt19937_64 g(41);
    DenseTensor t = oracle::random_tensor(Shape{5, 7}, g);
    SparseTensor s = topk_sparsify(t, 100.0);
    EXPECT_EQ(s.nnz(), 35u);
    EXPECT_EQ(s.to_dense().values(), t.values());
}

TEST(TopK, KeepsLargestMagnitudes)
{
    DenseTensor t(Shape{4}, (Vector(4) << 3, -5, 1, 0.5).finished());
    SparseTensor s = topk_sparsify(t, 50.0);
    ASSERT_EQ(s.nnz(), 2u);
    EXPECT_EQ(s.indices, (std::vector<Index>{0, 1}));
    EXPECT_EQ(s.values, (std::vector<double>{3, -5}));
}

TEST(TopK, CountIsCeiling)
{
    std::mt19937_64 g(42);
    for (Index n : {1, 7, 100, 4096})
        for (double k : {0.5, 1.0, 10.0, 30.0, 33.3, 99.9, 100.0}) {
            DenseTensor t = oracle::random_tensor(Shape{n}, g);
            const auto expect = static_cast<std::size_t>(std::ceil(k / 100.0 * n));
            EXPECT_EQ(topk_sparsify(t, k).nnz(), std::max<std::size_t>(1, expect)) << n << " " << k;
        }
}

TEST(TopK, SortOracle)
{
    std::mt19937_64 g(43);
    DenseTensor t = oracle::random_tensor(Shape{10, 10}, g);
    SparseTensor s = topk_sparsify(t, 30.0);
    std::vector<double> mags(100);
    for (Index i = 0; i < 100; ++i)
        mags[i] = std::abs(t.values()[i]);
    std::sort(mags.begin(), mags.end(), std::greater<>());
    const double cut = mags[29];
    for (Index i = 0; i < 100; ++i) {
        const bool kept = std::find(s.indices.begin(), s.indices.end(), i) != s.indices.end();
        EXPECT_EQ(kept, std::abs(t.values()[i]) >= cut);
    }
}

TEST(TopK, TiesGoToSmallerIndex)
{
    DenseTensor t(Shape{4}, (Vector(4) << 1, -1, 1, 1).finished());
    SparseTensor s = topk_sparsify(t, 50.0);
    EXPECT_EQ(s.indices, (std::vector<Index>{0, 1}));
}

TEST(TopK, BadPercentThrows)
{
    DenseTensor t(Shape{4});
    EXPECT_THROW(topk_sparsify(t, 0.0), DomainError);
    EXPECT_THROW(topk_sparsify(t, 100.5), DomainError);
}

TEST(Csr, ZeroMatrix)
{
    CSRBlob b = csr_encode(Matrix::Zero(5, 6));
    EXPECT_EQ(b.nnz(), 0u);
    EXPECT_EQ(csr_decode(b), Matrix::Zero(5, 6));
}

TEST(Csr, DenseMatrixIsNegativeCompression)
{
    std::mt19937_64 g(44);
    Matrix m = oracle::random_matrix(8, 9, g);
    CSRBlob b = csr_encode(m);
    EXPECT_EQ(b.nnz(), 72u);
    EXPECT_GT(b.bits(), 64u * 72u);
}

TEST(Csr, SparseRoundTripAndBits)
{
    std::mt19937_64 g(45);
    std::bernoulli_distribution keep(0.1);
    Matrix m = oracle::random_matrix(100, 100, g);
    std::uint64_t nnz = 0;
    for (Index j = 0; j < 100; ++j)
        for (Index i = 0; i < 100; ++i)
            if (!keep(g))
                m(i, j) = 0.0;
            else
                ++nnz;
    CSRBlob b = csr_encode(m);
    EXPECT_EQ(b.nnz(), nnz);
    Matrix back = csr_decode(b);
    EXPECT_EQ(0, std::memcmp(back.data(), m.data(), sizeof(double) * m.size()));
    EXPECT_EQ(b.bits(), 64 * nnz + 32 * nnz + 32 * 101);
    EXPECT_EQ(csr_bits(100, nnz), b.bits());

    CSRBlob wire = deserialize_csr(serialize(b));
    Matrix back2 = csr_decode(wire);
    EXPECT_EQ(0, std::memcmp(back2.data(), m.data(), sizeof(double) * m.size()));
}

TEST(Csr, TensorUsesModeZeroUnfolding)
{
    std::mt19937_64 g(46);
    DenseTensor t = oracle::random_tensor(Shape{3, 4, 2}, g);
    CSRBlob b = csr_encode(t);
    EXPECT_EQ(b.rows, 3u);
    EXPECT_EQ(b.cols, 8u);
    EXPECT_EQ(fold(csr_decode(b), 0, t.shape()).values(), t.values());
}

TEST(Csr, MalformedBlobRejected)
{
    CSRBlob b = csr_encode(Matrix::Identity(3, 3));
    CSRBlob bad = b;
    bad.row_ptr.pop_back();
    EXPECT_THROW(csr_decode(bad), FormatError);
    bad = b;
    bad.col_idx[1] = 7;
    EXPECT_THROW(csr_decode(bad), FormatError);
    auto bytes = serialize(b);
    bytes.resize(bytes.size() - 3);
    EXPECT_THROW(deserialize_csr(bytes), FormatError);
    auto bytes2 = serialize(b);
    bytes2[0] = 'X';
    EXPECT_THROW(deserialize_csr(bytes2), FormatError);
}

TEST(Volume, FullImage)
{
    EXPECT_EQ(message_volume_bits(RawPayload{250 * 250}), 4'000'000u);
}

TEST(Volume, TuckerMatrix)
{
    TuckerPayload p{{250, 250}, {40, 40}};
    EXPECT_EQ(message_volume_bits(p), 21600u * 64u);
    EXPECT_EQ(message_volume_bits(p), 1'382'400u);
    EXPECT_NEAR(21600.0 / 62500.0, 0.3456, 1e-15);
}

TEST(Volume, TuckerPayloadFromFactors)
{
    TuckerFactors f{DenseTensor(Shape{2, 3}), {Matrix::Zero(5, 2), Matrix::Zero(7, 3)}};
    EXPECT_EQ(message_volume_bits(tucker_payload(f)), 64u * (6 + 10 + 21));
}

TEST(CompressionRatio, PaperExample)
{
    EXPECT_NEAR(compression_ratio(250, 2, 40), 62500.0 / 21600.0, 1e-12);
    EXPECT_NEAR(compression_ratio(250, 2, 40), 2.8935, 1e-4);
}

TEST(CompressionRatio, NearFullRankBelowOne)
{
    EXPECT_LT(compression_ratio(4, 2, 3), 1.0);
    EXPECT_NEAR(compression_ratio(4, 2, 3), 16.0 / 33.0, 1e-15);
}

TEST(CompressionRatio, InvalidRankThrows)
{
    EXPECT_THROW(compression_ratio(10, 2, 10), RankError);
    EXPECT_THROW(compression_ratio(10, 2, 0), RankError);
}

TEST(RankBound, PaperValues)
{
    RankBounds b = rank_upper_bound(250, 2);
    EXPECT_EQ(b.ours, 103);
    EXPECT_EQ(b.dai, 11);
    EXPECT_EQ(rank_upper_bound(250, 3).ours, 248);
}

TEST(RankBound, RatioAboveOneBelowBound)
{
    for (int d : {2, 3})
        for (Index n = 3; n <= 512; ++n) {
            const Index ours = rank_upper_bound(n, d).ours;
            for (Index r = 1; r <= std::min(ours, n - 1); ++r) {
                // Exact integer arithmetic for n^d > r^d + d n r.
                const long double nd = std::pow(static_cast<long double>(n), d);
                const long double rhs = std::pow(static_cast<long double>(r), d) + static_cast<long double>(d) * n * r;
                ASSERT_GT(nd, rhs) << "n=" << n << " d=" << d << " r=" << r;
                ASSERT_GT(compression_ratio(n, d, r), 1.0);
            }
        }
}

TEST(RankBound, TwoWayBoundIsTight)
{
    // For d = 2 the bound is exact: the next rank no longer compresses.
    for (Index n = 3; n <= 512; ++n) {
        const Index next = rank_upper_bound(n, 2).ours + 1;
        if (next < n)
            EXPECT_LE(compression_ratio(n, 2, next), 1.0) << n;
    }
}

TEST(Ledger, CumulativeIsRunningSum)
{
    CommLedger l;
    l.record(0, 0);
    l.record(10, 5);
    l.record(3, 4);
    EXPECT_EQ(l.cumulative(), (std::vector<Bits>{0, 15, 22}));
    EXPECT_EQ(l.volumes(), (std::vector<Bits>{0, 15, 7}));
    EXPECT_EQ(l.total(), 22u);
}
