#pragma once
//
// Truncated SVD, HOSVD / ST-HOSVD, QR orthonormalization and low-rank
// projection.
//
// Every factor produced here has orthonormal columns, including when the
// input is rank deficient: numerically null directions are replaced by a
// deterministic completion against the standard basis (index order).
// Left singular vectors are sign-normalized so that their largest-magnitude
// entry is non-negative.
//

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "fedtucker/error.hpp"
#include "fedtucker/tensor.hpp"

namespace fedtucker {

using RankTuple = std::vector<Index>;

// Singular values at or below this fraction of the largest one count as zero.
inline constexpr double kNumericalRankTol = 1e-8;

inline void validate_ranks(const Shape& s, const RankTuple& ranks)
{
    if (ranks.size() != s.order())
        throw RankError("rank tuple has " + std::to_string(ranks.size()) + " entries for an order-" +
                        std::to_string(s.order()) + " tensor");
    for (std::size_t k = 0; k < ranks.size(); ++k)
        if (ranks[k] < 1 || ranks[k] > s[k])
            throw RankError("rank " + std::to_string(ranks[k]) + " out of range [1, " + std::to_string(s[k]) +
                            "] for mode " + std::to_string(k));
}

// Appends orthonormal columns to q (n x p, orthonormal) until it has
// `target` columns, taking standard basis vectors in index order and
// Gram-Schmidt-orthogonalizing them (twice) against everything kept so far.
inline Matrix complete_basis(const Matrix& q, Index target)
{
    const Index n = q.rows();
    if (target > n)
        throw RankError("cannot complete a basis of " + std::to_string(target) + " vectors in dimension " +
                        std::to_string(n));
    Matrix out(n, target);
    out.leftCols(q.cols()) = q;
    Index have = q.cols();
    for (Index j = 0; j < n && have < target; ++j) {
        Vector v = Vector::Unit(n, j);
        for (int pass = 0; pass < 2; ++pass)
            v -= out.leftCols(have) * (out.leftCols(have).transpose() * v);
        const double nv = v.norm();
        // Residual norms only shrink as the basis grows, so one pass over
        // the standard basis always finds enough candidates above this.
        if (nv > 1e-3)
            out.col(have++) = v / nv;
    }
    return out;
}

namespace detail {

inline Index argmax_abs(const Eigen::Ref<const Vector>& v)
{
    Index best = 0;
    for (Index i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[best]))
            best = i;
    return best;
}

inline bool is_null_value(double sigma, double sigma_max)
{
    return sigma_max <= 0.0 || sigma <= kNumericalRankTol * sigma_max;
}

// Replaces the listed columns of u by a deterministic completion of the rest.
inline void refill_columns(Matrix& u, const std::vector<Index>& bad)
{
    if (bad.empty())
        return;
    std::vector<Index> good;
    for (Index j = 0; j < u.cols(); ++j)
        if (std::find(bad.begin(), bad.end(), j) == bad.end())
            good.push_back(j);
    Matrix kept(u.rows(), static_cast<Index>(good.size()));
    for (std::size_t i = 0; i < good.size(); ++i)
        kept.col(static_cast<Index>(i)) = u.col(good[i]);
    const Matrix full = complete_basis(kept, u.cols());
    for (std::size_t i = 0; i < bad.size(); ++i)
        u.col(bad[i]) = full.col(static_cast<Index>(good.size() + i));
}

} // namespace detail

struct SvdResult {
    Matrix u;       // rows x r, orthonormal
    Vector s;       // r values, non-increasing
    Matrix v;       // cols x r
    bool completed; // some directions came from basis completion
};

inline SvdResult truncated_svd(const Matrix& m, Index r)
{
    if (r < 1 || r > std::min(m.rows(), m.cols()))
        throw RankError("truncated_svd: rank " + std::to_string(r) + " out of range for a " +
                        std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + " matrix");
    if (!m.allFinite())
        throw DomainError("truncated_svd: non-finite input");

    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    SvdResult out{svd.matrixU().leftCols(r), svd.singularValues().head(r), svd.matrixV().leftCols(r), false};

    const double smax = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
    std::vector<Index> null_cols;
    for (Index j = 0; j < r; ++j)
        if (detail::is_null_value(out.s[j], smax))
            null_cols.push_back(j);
    if (!null_cols.empty()) {
        detail::refill_columns(out.u, null_cols);
        detail::refill_columns(out.v, null_cols);
        out.completed = true;
    }
    for (Index j = 0; j < r; ++j)
        if (out.u(detail::argmax_abs(out.u.col(j)), j) < 0.0) {
            out.u.col(j) *= -1.0;
            out.v.col(j) *= -1.0;
        }
    return out;
}

// r leading left singular vectors only; skips computing V.
inline Matrix leading_left_singular_vectors(const Matrix& m, Index r, bool* completed = nullptr)
{
    if (r < 1 || r > m.rows())
        throw RankError("requested " + std::to_string(r) + " left singular vectors of a matrix with " +
                        std::to_string(m.rows()) + " rows");
    if (!m.allFinite())
        throw DomainError("non-finite input to SVD");

    Matrix u;
    Vector s;
    if (m.cols() == 0) {
        u = Matrix::Zero(m.rows(), 0);
    } else {
        Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU);
        u = svd.matrixU();
        s = svd.singularValues();
    }
    // A wide-enough matrix gives min(rows, cols) vectors; pad the remainder
    // with completion directions.
    const Index avail = std::min<Index>(r, u.cols());
    const double smax = s.size() ? s[0] : 0.0;
    Index good = 0;
    while (good < avail && !detail::is_null_value(s[good], smax))
        ++good;
    Matrix out = complete_basis(u.leftCols(good), r);
    if (completed)
        *completed = good < r;
    for (Index j = 0; j < good; ++j)
        if (out(detail::argmax_abs(out.col(j)), j) < 0.0)
            out.col(j) *= -1.0;
    return out;
}

inline TuckerFactors hosvd(const DenseTensor& t, const RankTuple& ranks)
{
    validate_ranks(t.shape(), ranks);
    TuckerFactors f;
    f.factors.reserve(ranks.size());
    for (std::size_t k = 0; k < ranks.size(); ++k)
        f.factors.push_back(leading_left_singular_vectors(unfold(t, k), ranks[k]));
    f.core = t;
    for (std::size_t k = 0; k < ranks.size(); ++k)
        f.core = ttm(f.core, f.factors[k], k);
    return f;
}

// Sequentially truncated HOSVD, modes in ascending order. The optional
// observer sees the working tensor after each mode is compressed.
inline TuckerFactors st_hosvd(const DenseTensor& t, const RankTuple& ranks,
                              const std::function<void(std::size_t, const DenseTensor&)>& observer = {})
{
    validate_ranks(t.shape(), ranks);
    TuckerFactors f;
    f.factors.reserve(ranks.size());
    DenseTensor work = t;
    for (std::size_t k = 0; k < ranks.size(); ++k) {
        f.factors.push_back(leading_left_singular_vectors(unfold(work, k), ranks[k]));
        work = ttm(work, f.factors.back(), k);
        if (observer)
            observer(k, work);
    }
    f.core = std::move(work);
    return f;
}

struct QrBasis {
    Matrix q;
    bool completed;
};

// Orthonormal basis of range(m) via Householder QR with R's diagonal made
// non-negative. Columns whose R_jj is numerically zero are replaced by a
// deterministic completion so the result is always a full orthonormal frame.
inline QrBasis orthonormal_basis_qr_checked(const Matrix& m)
{
    if (m.rows() < m.cols())
        throw ShapeError("orthonormal_basis_qr: need rows >= cols, got " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
    if (!m.allFinite())
        throw DomainError("orthonormal_basis_qr: non-finite input");
    const Index n = m.rows();
    const Index c = m.cols();
    Eigen::HouseholderQR<Matrix> qr(m);
    Matrix q = qr.householderQ() * Matrix::Identity(n, c);
    const auto& packed = qr.matrixQR();

    double rmax = 0.0;
    for (Index j = 0; j < c; ++j)
        rmax = std::max(rmax, std::abs(packed(j, j)));
    std::vector<Index> null_cols;
    for (Index j = 0; j < c; ++j) {
        if (detail::is_null_value(std::abs(packed(j, j)), rmax))
            null_cols.push_back(j);
        else if (packed(j, j) < 0.0)
            q.col(j) *= -1.0;
    }
    detail::refill_columns(q, null_cols);
    return {std::move(q), !null_cols.empty()};
}

inline Matrix orthonormal_basis_qr(const Matrix& m)
{
    return orthonormal_basis_qr_checked(m).q;
}

inline DenseTensor project_to_rank(const DenseTensor& t, const RankTuple& ranks)
{
    return tucker_reconstruct(st_hosvd(t, ranks));
}

// Number of singular values above kNumericalRankTol * sigma_max.
inline Index numerical_rank(const Matrix& m)
{
    if (m.size() == 0)
        return 0;
    Eigen::BDCSVD<Matrix> svd(m);
    const Vector& s = svd.singularValues();
    Index r = 0;
    while (r < s.size() && !detail::is_null_value(s[r], s[0]))
        ++r;
    return r;
}

} // namespace fedtucker
