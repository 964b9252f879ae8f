#pragma once
//
// Communication accounting and the compression baselines.
//
// Bit model: 64-bit values, 32-bit indices and row pointers, headers
// excluded.
//

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "fedtucker/error.hpp"
#include "fedtucker/tensor.hpp"

namespace fedtucker {

using Bits = std::uint64_t;

inline constexpr Bits kValueBits = 64;
inline constexpr Bits kIndexBits = 32;

// ---------------------------------------------------------------------------
// Top-k

struct SparseTensor {
    Shape shape;
    std::vector<Index> indices;  // strictly increasing linear indices
    std::vector<double> values;

    [[nodiscard]] std::size_t nnz() const noexcept { return indices.size(); }

    [[nodiscard]] DenseTensor to_dense() const
    {
        DenseTensor t(shape);
        for (std::size_t i = 0; i < indices.size(); ++i)
            t.values()[indices[i]] = values[i];
        return t;
    }
};

inline Index topk_count(Index numel, double percent)
{
    if (!(percent > 0.0 && percent <= 100.0))
        throw DomainError("top-k percentage must lie in (0, 100], got " + std::to_string(percent));
    const auto m = static_cast<Index>(std::ceil(percent * static_cast<double>(numel) / 100.0));
    return std::clamp<Index>(m, 1, numel);
}

// Keeps the ceil(percent/100 * numel) largest-magnitude entries; ties go to
// the smaller linear index.
inline SparseTensor topk_sparsify(const DenseTensor& t, double percent)
{
    const Index m = topk_count(t.numel(), percent);
    std::vector<Index> order(static_cast<std::size_t>(t.numel()));
    std::iota(order.begin(), order.end(), Index{0});
    const auto& v = t.values();
    auto before = [&](Index a, Index b) {
        const double fa = std::abs(v[a]);
        const double fb = std::abs(v[b]);
        return fa != fb ? fa > fb : a < b;
    };
    std::nth_element(order.begin(), order.begin() + m - 1, order.end(), before);
    order.resize(static_cast<std::size_t>(m));
    std::sort(order.begin(), order.end());

    SparseTensor s{t.shape(), std::move(order), {}};
    s.values.reserve(s.indices.size());
    for (Index i : s.indices)
        s.values.push_back(v[i]);
    return s;
}

// ---------------------------------------------------------------------------
// CSR

struct CSRBlob {
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    std::vector<std::uint32_t> row_ptr;
    std::vector<std::uint32_t> col_idx;
    std::vector<double> values;

    [[nodiscard]] std::uint64_t nnz() const noexcept { return values.size(); }

    [[nodiscard]] Bits bits() const noexcept
    {
        return kValueBits * nnz() + kIndexBits * nnz() + kIndexBits * (static_cast<Bits>(rows) + 1);
    }
};

inline Bits csr_bits(Index rows, std::uint64_t nnz)
{
    return kValueBits * nnz + kIndexBits * nnz + kIndexBits * (static_cast<Bits>(rows) + 1);
}

inline CSRBlob csr_encode(const Matrix& m)
{
    if (!m.allFinite())
        throw DomainError("csr_encode: non-finite value");
    if (m.rows() > UINT32_MAX || m.cols() > UINT32_MAX)
        throw ShapeError("csr_encode: matrix too large for 32-bit indices");
    CSRBlob b;
    b.rows = static_cast<std::uint32_t>(m.rows());
    b.cols = static_cast<std::uint32_t>(m.cols());
    b.row_ptr.reserve(b.rows + 1);
    b.row_ptr.push_back(0);
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j)
            if (m(i, j) != 0.0) {
                b.col_idx.push_back(static_cast<std::uint32_t>(j));
                b.values.push_back(m(i, j));
            }
        b.row_ptr.push_back(static_cast<std::uint32_t>(b.values.size()));
    }
    return b;
}

// Tensors are encoded through their mode-0 unfolding (n_1 rows).
inline CSRBlob csr_encode(const DenseTensor& t)
{
    return csr_encode(unfold(t, 0));
}

inline void validate(const CSRBlob& b)
{
    if (b.row_ptr.size() != static_cast<std::size_t>(b.rows) + 1)
        throw FormatError("CSR: row pointer count must be rows + 1");
    if (b.col_idx.size() != b.values.size())
        throw FormatError("CSR: index/value count mismatch");
    if (b.row_ptr.front() != 0 || b.row_ptr.back() != b.values.size())
        throw FormatError("CSR: row pointers must start at 0 and end at nnz");
    for (std::uint32_t i = 0; i < b.rows; ++i) {
        if (b.row_ptr[i] > b.row_ptr[i + 1])
            throw FormatError("CSR: row pointers must be non-decreasing");
        for (std::uint32_t p = b.row_ptr[i]; p < b.row_ptr[i + 1]; ++p) {
            if (b.col_idx[p] >= b.cols)
                throw FormatError("CSR: column index out of range");
            if (p > b.row_ptr[i] && b.col_idx[p] <= b.col_idx[p - 1])
                throw FormatError("CSR: column indices must increase within a row");
        }
    }
}

inline Matrix csr_decode(const CSRBlob& b)
{
    validate(b);
    Matrix m = Matrix::Zero(b.rows, b.cols);
    for (std::uint32_t i = 0; i < b.rows; ++i)
        for (std::uint32_t p = b.row_ptr[i]; p < b.row_ptr[i + 1]; ++p)
            m(i, b.col_idx[p]) = b.values[p];
    return m;
}

namespace detail {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v)
{
    static_assert(std::is_trivially_copyable_v<T>);
    std::uint8_t bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(std::begin(bytes), std::end(bytes));
    out.insert(out.end(), std::begin(bytes), std::end(bytes));
}

template <typename T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t& pos)
{
    if (pos + sizeof(T) > in.size())
        throw FormatError("CSR: truncated blob");
    std::uint8_t bytes[sizeof(T)];
    std::memcpy(bytes, in.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        std::reverse(std::begin(bytes), std::end(bytes));
    pos += sizeof(T);
    T v;
    std::memcpy(&v, bytes, sizeof(T));
    return v;
}

} // namespace detail

// Little-endian layout: "CSR1", u32 rows, u32 cols, u64 nnz, row pointers
// (u32 x rows+1), column indices (u32 x nnz), values (f64 x nnz).
inline std::vector<std::uint8_t> serialize(const CSRBlob& b)
{
    validate(b);
    std::vector<std::uint8_t> out{'C', 'S', 'R', '1'};
    detail::put_le(out, b.rows);
    detail::put_le(out, b.cols);
    detail::put_le(out, static_cast<std::uint64_t>(b.nnz()));
    for (auto p : b.row_ptr)
        detail::put_le(out, p);
    for (auto c : b.col_idx)
        detail::put_le(out, c);
    for (double v : b.values)
        detail::put_le(out, v);
    return out;
}

inline CSRBlob deserialize_csr(const std::vector<std::uint8_t>& in)
{
    if (in.size() < 4 || std::memcmp(in.data(), "CSR1", 4) != 0)
        throw FormatError("CSR: bad magic");
    std::size_t pos = 4;
    CSRBlob b;
    b.rows = detail::get_le<std::uint32_t>(in, pos);
    b.cols = detail::get_le<std::uint32_t>(in, pos);
    const auto nnz = detail::get_le<std::uint64_t>(in, pos);
    const std::uint64_t need = (static_cast<std::uint64_t>(b.rows) + 1) * 4 + nnz * 12;
    if (in.size() - pos != need)
        throw FormatError("CSR: payload size does not match header");
    b.row_ptr.resize(static_cast<std::size_t>(b.rows) + 1);
    for (auto& p : b.row_ptr)
        p = detail::get_le<std::uint32_t>(in, pos);
    b.col_idx.resize(nnz);
    for (auto& c : b.col_idx)
        c = detail::get_le<std::uint32_t>(in, pos);
    b.values.resize(nnz);
    for (auto& v : b.values)
        v = detail::get_le<double>(in, pos);
    validate(b);
    return b;
}

// ---------------------------------------------------------------------------
// Message volumes

struct RawPayload {
    Index numel;
};

struct TuckerPayload {
    std::vector<Index> extents;  // n_k
    std::vector<Index> ranks;    // r_k
};

struct CsrPayload {
    Index rows;
    std::uint64_t nnz;
};

using Payload = std::variant<RawPayload, TuckerPayload, CsrPayload>;

inline TuckerPayload tucker_payload(const TuckerFactors& f)
{
    return {f.full_shape().extents(), f.ranks()};
}

inline Bits message_volume_bits(const Payload& p)
{
    struct Visitor {
        Bits operator()(const RawPayload& r) const { return kValueBits * static_cast<Bits>(r.numel); }
        Bits operator()(const TuckerPayload& t) const
        {
            if (t.extents.size() != t.ranks.size())
                throw ShapeError("Tucker payload: extents and ranks differ in length");
            Bits core = 1;
            Bits factors = 0;
            for (std::size_t k = 0; k < t.ranks.size(); ++k) {
                core *= static_cast<Bits>(t.ranks[k]);
                factors += static_cast<Bits>(t.extents[k]) * static_cast<Bits>(t.ranks[k]);
            }
            return kValueBits * (core + factors);
        }
        Bits operator()(const CsrPayload& c) const { return csr_bits(c.rows, c.nnz); }
    };
    return std::visit(Visitor{}, p);
}

// ---------------------------------------------------------------------------
// Compression ratio and the rank bounds that keep it above one

// phi = n^d / (r^d + d n r)
inline double compression_ratio(Index n, int d, Index r)
{
    if (d < 1)
        throw DomainError("order must be positive");
    if (r < 1 || r >= n)
        throw RankError("compression_ratio requires 1 <= r < n");
    const double nd = std::pow(static_cast<double>(n), d);
    const double rd = std::pow(static_cast<double>(r), d);
    return nd / (rd + static_cast<double>(d) * static_cast<double>(n) * static_cast<double>(r));
}

struct RankBounds {
    Index ours;  // largest integer strictly below the improved bound
    Index dai;   // floor(n / (1 + d n)^{1/d})
};

inline RankBounds rank_upper_bound(Index n, int d)
{
    if (n < 3)
        throw DomainError("rank_upper_bound requires n >= 3");
    const double nn = static_cast<double>(n);
    double bound = 0.0;
    if (d == 2)
        bound = nn / (std::sqrt(2.0) + 1.0);
    else if (d == 3)
        bound = nn * std::cbrt((nn - 3.0) / nn);
    else
        throw DomainError("rank_upper_bound supports d = 2 or 3, got " + std::to_string(d));
    const auto ours = static_cast<Index>(std::ceil(bound)) - 1;
    const auto dai = static_cast<Index>(std::floor(nn / std::pow(1.0 + d * nn, 1.0 / d)));
    return {ours, dai};
}

// ---------------------------------------------------------------------------

// Per-epoch uplink/downlink totals with a running cumulative volume.
class CommLedger {
public:
    void record(Bits uplink, Bits downlink)
    {
        uplink_.push_back(uplink);
        downlink_.push_back(downlink);
        cumulative_.push_back((cumulative_.empty() ? 0 : cumulative_.back()) + uplink + downlink);
    }

    [[nodiscard]] std::size_t epochs() const noexcept { return uplink_.size(); }
    [[nodiscard]] const std::vector<Bits>& uplink() const noexcept { return uplink_; }
    [[nodiscard]] const std::vector<Bits>& downlink() const noexcept { return downlink_; }
    [[nodiscard]] const std::vector<Bits>& cumulative() const noexcept { return cumulative_; }

    // V_t = uplink_t + downlink_t
    [[nodiscard]] std::vector<Bits> volumes() const
    {
        std::vector<Bits> v(uplink_.size());
        for (std::size_t t = 0; t < v.size(); ++t)
            v[t] = uplink_[t] + downlink_[t];
        return v;
    }

    [[nodiscard]] Bits total() const noexcept { return cumulative_.empty() ? 0 : cumulative_.back(); }

private:
    std::vector<Bits> uplink_;
    std::vector<Bits> downlink_;
    std::vector<Bits> cumulative_;
};

} // namespace fedtucker
