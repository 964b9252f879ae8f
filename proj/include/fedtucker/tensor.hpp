#pragma once
//
// Dense d-way tensors and the multilinear primitives built on them.
//
// Storage is column-major in the generalized sense: the FIRST index varies
// fastest. Mode indices are 0-based throughout the library.
//
// The mode-k unfolding X_(k) is n_k x prod_{i != k} n_i with the remaining
// modes ordered ascending, lower index fastest. Under this ordering
//
//   unfold(G x_1 S_1 ... x_d S_d, k) = S_k G_(k) (S_d (x) ... (x) S_1)^T
//
// (mode k omitted from the Kronecker chain) holds without permutations.
//

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fedtucker/error.hpp"

namespace fedtucker {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Shape {
public:
    Shape() = default;
    Shape(std::initializer_list<Index> extents) : Shape(std::vector<Index>(extents)) {}
    explicit Shape(std::vector<Index> extents) : extents_(std::move(extents))
    {
        if (extents_.empty())
            throw ShapeError("shape must have at least one mode");
        Index count = 1;
        for (Index e : extents_) {
            if (e < 1)
                throw ShapeError("shape extents must be positive, got " + std::to_string(e));
            if (count > std::numeric_limits<Index>::max() / e)
                throw ShapeError("shape element count overflows");
            count *= e;
        }
    }

    [[nodiscard]] std::size_t order() const noexcept { return extents_.size(); }
    [[nodiscard]] Index operator[](std::size_t k) const { return extents_.at(k); }
    [[nodiscard]] const std::vector<Index>& extents() const noexcept { return extents_; }

    [[nodiscard]] Index numel() const noexcept
    {
        return std::accumulate(extents_.begin(), extents_.end(), Index{1}, std::multiplies<>());
    }

    // Product of extents strictly before / after mode k.
    [[nodiscard]] Index leading(std::size_t k) const noexcept
    {
        return std::accumulate(extents_.begin(), extents_.begin() + static_cast<std::ptrdiff_t>(k),
                               Index{1}, std::multiplies<>());
    }
    [[nodiscard]] Index trailing(std::size_t k) const noexcept
    {
        return std::accumulate(extents_.begin() + static_cast<std::ptrdiff_t>(k) + 1, extents_.end(),
                               Index{1}, std::multiplies<>());
    }

    [[nodiscard]] Shape with_extent(std::size_t k, Index n) const
    {
        auto e = extents_;
        e.at(k) = n;
        return Shape(std::move(e));
    }

    [[nodiscard]] std::string str() const
    {
        std::ostringstream os;
        os << '(';
        for (std::size_t i = 0; i < extents_.size(); ++i)
            os << (i ? "," : "") << extents_[i];
        os << ')';
        return os.str();
    }

    friend bool operator==(const Shape&, const Shape&) = default;

private:
    std::vector<Index> extents_;
};

class DenseTensor {
public:
    DenseTensor() = default;

    explicit DenseTensor(Shape shape) : shape_(std::move(shape)), values_(Vector::Zero(shape_.numel())) {}

    DenseTensor(Shape shape, Vector values) : shape_(std::move(shape)), values_(std::move(values))
    {
        if (values_.size() != shape_.numel())
            throw ShapeError("value count " + std::to_string(values_.size()) + " does not match shape " +
                             shape_.str());
    }

    static DenseTensor zeros(const Shape& shape) { return DenseTensor(shape); }

    // A matrix is a 2-way tensor with the same linearization.
    static DenseTensor from_matrix(const Matrix& m)
    {
        return DenseTensor(Shape{m.rows(), m.cols()}, Eigen::Map<const Vector>(m.data(), m.size()));
    }

    [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t order() const noexcept { return shape_.order(); }
    [[nodiscard]] Index numel() const noexcept { return values_.size(); }

    [[nodiscard]] const Vector& values() const noexcept { return values_; }
    [[nodiscard]] Vector& values() noexcept { return values_; }
    [[nodiscard]] std::span<const double> span() const noexcept
    {
        return {values_.data(), static_cast<std::size_t>(values_.size())};
    }

    [[nodiscard]] Index linear_index(std::span<const Index> idx) const
    {
        if (idx.size() != order())
            throw ShapeError("index arity does not match tensor order");
        Index lin = 0;
        Index stride = 1;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            if (idx[k] < 0 || idx[k] >= shape_[k])
                throw ShapeError("index out of range");
            lin += idx[k] * stride;
            stride *= shape_[k];
        }
        return lin;
    }

    [[nodiscard]] double operator()(std::initializer_list<Index> idx) const
    {
        return values_[linear_index(std::span<const Index>(idx.begin(), idx.size()))];
    }
    [[nodiscard]] double& operator()(std::initializer_list<Index> idx)
    {
        return values_[linear_index(std::span<const Index>(idx.begin(), idx.size()))];
    }

    // View a 2-way tensor as a matrix (copy).
    [[nodiscard]] Matrix as_matrix() const
    {
        if (order() != 2)
            throw ShapeError("as_matrix requires a 2-way tensor, got shape " + shape_.str());
        return Eigen::Map<const Matrix>(values_.data(), shape_[0], shape_[1]);
    }

    [[nodiscard]] double norm() const { return values_.norm(); }
    [[nodiscard]] bool all_finite() const { return values_.allFinite(); }

    DenseTensor& operator+=(const DenseTensor& o)
    {
        require_same_shape(o);
        values_ += o.values_;
        return *this;
    }
    DenseTensor& operator-=(const DenseTensor& o)
    {
        require_same_shape(o);
        values_ -= o.values_;
        return *this;
    }
    DenseTensor& operator*=(double a)
    {
        values_ *= a;
        return *this;
    }

    friend DenseTensor operator+(DenseTensor a, const DenseTensor& b) { return a += b; }
    friend DenseTensor operator-(DenseTensor a, const DenseTensor& b) { return a -= b; }
    friend DenseTensor operator*(double s, DenseTensor a) { return a *= s; }
    friend DenseTensor operator*(DenseTensor a, double s) { return a *= s; }

private:
    void require_same_shape(const DenseTensor& o) const
    {
        if (shape_ != o.shape_)
            throw ShapeError("shape mismatch: " + shape_.str() + " vs " + o.shape_.str());
    }

    Shape shape_;
    Vector values_;
};

// Core plus one factor per mode; factor k is n_k x r_k.
struct TuckerFactors {
    DenseTensor core;
    std::vector<Matrix> factors;

    [[nodiscard]] std::size_t order() const noexcept { return factors.size(); }

    [[nodiscard]] std::vector<Index> ranks() const
    {
        std::vector<Index> r;
        r.reserve(factors.size());
        for (const auto& f : factors)
            r.push_back(f.cols());
        return r;
    }

    [[nodiscard]] Shape full_shape() const
    {
        std::vector<Index> n;
        n.reserve(factors.size());
        for (const auto& f : factors)
            n.push_back(f.rows());
        return Shape(std::move(n));
    }
};

namespace detail {

inline void check_mode(const Shape& s, std::size_t k)
{
    if (k >= s.order())
        throw ModeIndexError("mode " + std::to_string(k) + " out of range for order-" +
                             std::to_string(s.order()) + " tensor");
}

} // namespace detail

inline Matrix unfold(const DenseTensor& t, std::size_t k)
{
    const Shape& s = t.shape();
    detail::check_mode(s, k);
    const Index left = s.leading(k);
    const Index nk = s[k];
    const Index right = s.trailing(k);
    Matrix m(nk, left * right);
    const double* src = t.values().data();
    for (Index r = 0; r < right; ++r)
        for (Index i = 0; i < nk; ++i) {
            const double* slab = src + left * (i + nk * r);
            for (Index l = 0; l < left; ++l)
                m(i, l + left * r) = slab[l];
        }
    return m;
}

inline DenseTensor fold(const Matrix& m, std::size_t k, const Shape& s)
{
    detail::check_mode(s, k);
    const Index left = s.leading(k);
    const Index nk = s[k];
    const Index right = s.trailing(k);
    if (m.rows() != nk || m.cols() != left * right)
        throw ShapeError("cannot fold a " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         " matrix at mode " + std::to_string(k) + " into shape " + s.str());
    DenseTensor t(s);
    double* dst = t.values().data();
    for (Index r = 0; r < right; ++r)
        for (Index i = 0; i < nk; ++i) {
            double* slab = dst + left * (i + nk * r);
            for (Index l = 0; l < left; ++l)
                slab[l] = m(i, l + left * r);
        }
    return t;
}

namespace detail {

// Y_slab = X_slab * op for every trailing block, where X_slab is the
// left x n_k view of the tensor at a fixed trailing multi-index.
template <typename Op>
DenseTensor contract_mode(const DenseTensor& t, const Op& op, Index out_extent, std::size_t k)
{
    const Shape& s = t.shape();
    const Index left = s.leading(k);
    const Index nk = s[k];
    const Index right = s.trailing(k);
    DenseTensor y(s.with_extent(k, out_extent));
    for (Index r = 0; r < right; ++r) {
        Eigen::Map<const Matrix> xs(t.values().data() + left * nk * r, left, nk);
        Eigen::Map<Matrix> ys(y.values().data() + left * out_extent * r, left, out_extent);
        ys.noalias() = xs * op;
    }
    return y;
}

} // namespace detail

// Tensor-times-matrix contracting the ROWS of s with mode k:
//   Y(.., j, ..) = sum_i X(.., i, ..) s(i, j),  so unfold(Y,k) = s^T unfold(X,k).
// s is n_k x r and the result has extent r in mode k.
inline DenseTensor ttm(const DenseTensor& t, const Matrix& s, std::size_t k)
{
    detail::check_mode(t.shape(), k);
    if (s.rows() != t.shape()[k])
        throw ShapeError("ttm: matrix has " + std::to_string(s.rows()) + " rows, mode " + std::to_string(k) +
                         " has extent " + std::to_string(t.shape()[k]));
    return detail::contract_mode(t, s, s.cols(), k);
}

// Mode-k product in the multiplying convention: unfold(Y,k) = m unfold(X,k).
// m is p x n_k. Equivalent to ttm(t, m^T, k).
inline DenseTensor mode_product(const DenseTensor& t, const Matrix& m, std::size_t k)
{
    detail::check_mode(t.shape(), k);
    if (m.cols() != t.shape()[k])
        throw ShapeError("mode_product: matrix has " + std::to_string(m.cols()) + " columns, mode " +
                         std::to_string(k) + " has extent " + std::to_string(t.shape()[k]));
    return detail::contract_mode(t, m.transpose(), m.rows(), k);
}

// [[G; S_1, ..., S_d]] = G x_1 S_1 ... x_d S_d, each S_k n_k x r_k.
inline DenseTensor tucker_reconstruct(const DenseTensor& core, std::span<const Matrix> factors)
{
    if (factors.size() != core.order())
        throw ShapeError("tucker_reconstruct: " + std::to_string(factors.size()) + " factors for an order-" +
                         std::to_string(core.order()) + " core");
    DenseTensor y = core;
    for (std::size_t k = 0; k < factors.size(); ++k)
        y = mode_product(y, factors[k], k);
    return y;
}

inline DenseTensor tucker_reconstruct(const TuckerFactors& f)
{
    return tucker_reconstruct(f.core, f.factors);
}

// Stacks equally shaped tensors along a new trailing mode of extent N.
inline DenseTensor concat_last(std::span<const DenseTensor> ts)
{
    if (ts.empty())
        throw ShapeError("concat_last: empty tensor list");
    const Shape& s = ts.front().shape();
    std::vector<Index> ext = s.extents();
    ext.push_back(static_cast<Index>(ts.size()));
    DenseTensor out{Shape(std::move(ext))};
    const Index block = s.numel();
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (ts[i].shape() != s)
            throw ShapeError("concat_last: shape mismatch " + ts[i].shape().str() + " vs " + s.str());
        out.values().segment(static_cast<Index>(i) * block, block) = ts[i].values();
    }
    return out;
}

// max |S^T S - I|
inline double orthonormality_defect(const Matrix& s)
{
    if (s.cols() == 0)
        return 0.0;
    return (s.transpose() * s - Matrix::Identity(s.cols(), s.cols())).cwiseAbs().maxCoeff();
}

} // namespace fedtucker
