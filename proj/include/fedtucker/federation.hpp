#pragma once
//
// Client and server steps of the federated low-rank reconstruction loop.
//
// Clients run one projected-gradient step (gradient step on the full image,
// then ST-HOSVD back to their rank) and upload the Tucker components.
// Servers merge those into shared factors (joint factorization, its
// randomized variant, or plain averaging), re-express every client core in
// the shared basis, and enforce the multimodality constraint
//   X^N = sum_j c_j X^j
// on the cores. The full-image baselines (FIRM, FullDecomp) apply the same
// constraint update to full-size images.
//
// Client order convention: clients 0..N-2 are XRF, client N-1 is XRT.
//

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "fedtucker/compression.hpp"
#include "fedtucker/decomposition.hpp"
#include "fedtucker/error.hpp"
#include "fedtucker/rng.hpp"
#include "fedtucker/tensor.hpp"
#include "fedtucker/tomography.hpp"

namespace fedtucker {

enum class Modality { xrf, xrt };

struct ClientState {
    std::size_t id = 0;
    Modality modality = Modality::xrf;
    double coefficient = 0.0;  // c_i for XRF clients, unused for XRT
    DenseTensor sinogram;
    RankTuple ranks;
    DenseTensor core;
};

struct ServerState {
    std::vector<Matrix> factors;
    RankTuple ranks;
};

struct UplinkMessage {
    std::size_t client = 0;
    TuckerFactors tucker;
};

struct DownlinkMessage {
    std::vector<Matrix> factors;
    DenseTensor core;
};

// S_k(0) = first r_k standard basis columns.
inline std::vector<Matrix> initial_factors(const Shape& shape, const RankTuple& ranks)
{
    validate_ranks(shape, ranks);
    std::vector<Matrix> f;
    for (std::size_t k = 0; k < ranks.size(); ++k)
        f.push_back(Matrix::Identity(shape[k], ranks[k]));
    return f;
}

// Componentwise maximum of the client ranks.
inline RankTuple merge_ranks(std::span<const RankTuple> client_ranks)
{
    if (client_ranks.empty())
        throw RankError("merge_ranks: no client ranks");
    RankTuple out = client_ranks.front();
    for (const auto& r : client_ranks) {
        if (r.size() != out.size())
            throw RankError("merge_ranks: rank tuples differ in length");
        for (std::size_t k = 0; k < r.size(); ++k)
            out[k] = std::max(out[k], r[k]);
    }
    return out;
}

// X~ = X - eta * grad f(X)
inline DenseTensor gradient_step(const RadonOperator& a, const DenseTensor& x, const DenseTensor& b, double eta)
{
    DenseTensor g = loss_gradient(a, x, b);
    if (!g.all_finite())
        throw DomainError("non-finite gradient");
    g *= -eta;
    g += x;
    return g;
}

inline UplinkMessage client_local_step(const ClientState& c, std::span<const Matrix> factors,
                                       const RadonOperator& a, double eta)
{
    if (factors.size() != c.core.order())
        throw ShapeError("client " + std::to_string(c.id) + ": factor count does not match core order");
    for (std::size_t k = 0; k < factors.size(); ++k)
        if (factors[k].cols() != c.core.shape()[k])
            throw ShapeError("client " + std::to_string(c.id) + ": factor " + std::to_string(k) +
                             " incompatible with core shape " + c.core.shape().str());
    const DenseTensor x = tucker_reconstruct(c.core, factors);
    const DenseTensor stepped = gradient_step(a, x, c.sinogram, eta);
    return {c.id, st_hosvd(stepped, c.ranks)};
}

inline UplinkMessage client_local_step(const ClientState& c, const ServerState& s, const RadonOperator& a,
                                       double eta)
{
    return client_local_step(c, std::span<const Matrix>(s.factors), a, eta);
}

namespace detail {

inline void check_messages(std::span<const UplinkMessage> msgs, const RankTuple& target)
{
    if (msgs.empty())
        throw ShapeError("server step needs at least one client message");
    const Shape shape = msgs.front().tucker.full_shape();
    if (target.size() != shape.order())
        throw RankError("server rank tuple has the wrong length");
    for (const auto& m : msgs) {
        if (m.tucker.full_shape() != shape)
            throw ShapeError("client " + std::to_string(m.client) + " factors disagree on row counts");
        for (std::size_t k = 0; k < shape.order(); ++k)
            if (m.tucker.core.shape()[k] != m.tucker.factors[k].cols())
                throw ShapeError("client " + std::to_string(m.client) + " core does not match its factors");
    }
    validate_ranks(shape, target);
}

} // namespace detail

struct JointFactors {
    std::vector<Matrix> factors;
    bool completed = false;  // some mode needed deterministic basis completion
};

// Y_k = [S^1_k G^1_(k)  ...  S^N_k G^N_(k)]
inline Matrix joint_matrix(std::span<const UplinkMessage> msgs, std::size_t k)
{
    Index cols = 0;
    for (const auto& m : msgs)
        cols += m.tucker.core.numel() / m.tucker.core.shape()[k];
    Matrix y(msgs.front().tucker.factors[k].rows(), cols);
    Index at = 0;
    for (const auto& m : msgs) {
        const Matrix block = m.tucker.factors[k] * unfold(m.tucker.core, k);
        y.middleCols(at, block.cols()) = block;
        at += block.cols();
    }
    return y;
}

// Joint factorization: S_k = r*_k leading left singular vectors of Y_k.
inline JointFactors jf_server(std::span<const UplinkMessage> msgs, const RankTuple& target)
{
    detail::check_messages(msgs, target);
    JointFactors out;
    for (std::size_t k = 0; k < target.size(); ++k) {
        bool completed = false;
        out.factors.push_back(leading_left_singular_vectors(joint_matrix(msgs, k), target[k], &completed));
        out.completed = out.completed || completed;
    }
    return out;
}

// Z_k = sum_i S^i_k G^i_(k) Omega^i, Omega^i being prod_{j != k} r^i_j x r*_k.
inline Matrix sketch_sum(std::span<const UplinkMessage> msgs, std::size_t k, std::span<const Matrix> omegas)
{
    if (omegas.size() != msgs.size())
        throw ShapeError("sketch_sum: one test matrix per client required");
    Matrix z;
    for (std::size_t i = 0; i < msgs.size(); ++i) {
        const auto& t = msgs[i].tucker;
        const Matrix gk = unfold(t.core, k);
        if (omegas[i].rows() != gk.cols())
            throw ShapeError("sketch_sum: test matrix has wrong row count");
        Matrix term = t.factors[k] * (gk * omegas[i]);
        if (i == 0)
            z = std::move(term);
        else
            z += term;
    }
    return z;
}

inline Matrix gaussian_matrix(Index rows, Index cols, std::mt19937_64& gen)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i)
            m(i, j) = normal(gen);
    return m;
}

// Randomized joint factorization. The test matrix for (epoch, mode k,
// client) comes from its own substream, so the result depends only on the
// seed and the messages.
inline JointFactors rjf_server(std::span<const UplinkMessage> msgs, const RankTuple& target,
                               const RngStreams& rng, std::uint64_t epoch)
{
    detail::check_messages(msgs, target);
    JointFactors out;
    for (std::size_t k = 0; k < target.size(); ++k) {
        std::vector<Matrix> omegas;
        omegas.reserve(msgs.size());
        for (const auto& m : msgs) {
            auto gen = rng.stream(RngStreams::Purpose::sketch, epoch, k, m.client);
            omegas.push_back(gaussian_matrix(m.tucker.core.numel() / m.tucker.core.shape()[k], target[k], gen));
        }
        auto qr = orthonormal_basis_qr_checked(sketch_sum(msgs, k, omegas));
        out.factors.push_back(std::move(qr.q));
        out.completed = out.completed || qr.completed;
    }
    return out;
}

// G~^i = [[G^i; S_1^T S^i_1, ..., S_d^T S^i_d]]
inline std::vector<DenseTensor> recompute_cores(std::span<const UplinkMessage> msgs,
                                                std::span<const Matrix> factors)
{
    std::vector<DenseTensor> out;
    out.reserve(msgs.size());
    for (const auto& m : msgs) {
        if (m.tucker.factors.size() != factors.size())
            throw ShapeError("recompute_cores: order mismatch");
        DenseTensor g = m.tucker.core;
        for (std::size_t k = 0; k < factors.size(); ++k) {
            if (factors[k].rows() != m.tucker.factors[k].rows())
                throw ShapeError("recompute_cores: factor row mismatch in mode " + std::to_string(k));
            g = mode_product(g, factors[k].transpose() * m.tucker.factors[k], k);
        }
        out.push_back(std::move(g));
    }
    return out;
}

// Same as recompute_cores with pinv(S_k) in place of S_k^T, for factor
// sets that are not orthonormal.
inline std::vector<DenseTensor> recompute_cores_pinv(std::span<const UplinkMessage> msgs,
                                                     std::span<const Matrix> factors)
{
    std::vector<Matrix> pinv;
    pinv.reserve(factors.size());
    for (const auto& f : factors)
        pinv.push_back(Eigen::CompleteOrthogonalDecomposition<Matrix>(f).pseudoInverse());
    std::vector<DenseTensor> out;
    out.reserve(msgs.size());
    for (const auto& m : msgs) {
        DenseTensor g = m.tucker.core;
        for (std::size_t k = 0; k < factors.size(); ++k) {
            if (factors[k].rows() != m.tucker.factors[k].rows())
                throw ShapeError("recompute_cores: factor row mismatch in mode " + std::to_string(k));
            g = mode_product(g, pinv[k] * m.tucker.factors[k], k);
        }
        out.push_back(std::move(g));
    }
    return out;
}

// Multimodality update on equally shaped tensors (cores or full images):
//   Sigma  = sum_{i<N} c_i T~^i
//   T^i    = T~^i + (c_i / 2)(T~^N - Sigma),   i < N
//   T^N    = (T~^N + Sigma) / 2
// With sum c_i^2 = 1 this is the orthogonal projection onto the constraint.
inline std::vector<DenseTensor> firm_core_update(std::span<const DenseTensor> ts, std::span<const double> coeffs)
{
    if (ts.size() < 2)
        throw ShapeError("multimodality update needs at least two clients");
    if (coeffs.size() + 1 != ts.size())
        throw ShapeError("need one coefficient per XRF client");
    const Shape& s = ts.front().shape();
    for (const auto& t : ts)
        if (t.shape() != s)
            throw ShapeError("multimodality update: shape mismatch " + t.shape().str() + " vs " + s.str());
    const std::size_t last = ts.size() - 1;
    Vector sigma = Vector::Zero(s.numel());
    for (std::size_t i = 0; i < last; ++i)
        sigma += coeffs[i] * ts[i].values();
    const Vector gap = ts[last].values() - sigma;
    std::vector<DenseTensor> out;
    out.reserve(ts.size());
    for (std::size_t i = 0; i < last; ++i)
        out.emplace_back(s, ts[i].values() + (0.5 * coeffs[i]) * gap);
    out.emplace_back(s, 0.5 * (ts[last].values() + sigma));
    return out;
}

inline std::vector<DenseTensor> firm_tensor_update(std::span<const DenseTensor> ts, std::span<const double> coeffs)
{
    return firm_core_update(ts, coeffs);
}

// ||T^N - sum_j c_j T^j||_F
inline double constraint_residual(std::span<const DenseTensor> ts, std::span<const double> coeffs)
{
    if (coeffs.size() + 1 != ts.size())
        throw ShapeError("need one coefficient per XRF client");
    Vector r = ts.back().values();
    for (std::size_t i = 0; i + 1 < ts.size(); ++i)
        r -= coeffs[i] * ts[i].values();
    return r.norm();
}

struct FullDecompRound {
    std::vector<TuckerFactors> downlinks;  // per client, at the client's rank
    double residual = 0.0;                 // constraint residual of the updated images
};

// Server of the FullDecomp baseline: rebuild every image, apply the
// multimodality update on full images, then re-decompose each one at the
// rank its client uploaded with.
inline FullDecompRound full_decomp_round(std::span<const UplinkMessage> msgs, std::span<const double> coeffs)
{
    std::vector<DenseTensor> images;
    images.reserve(msgs.size());
    for (const auto& m : msgs)
        images.push_back(tucker_reconstruct(m.tucker));
    const auto updated = firm_tensor_update(images, coeffs);
    FullDecompRound out;
    out.residual = constraint_residual(updated, coeffs);
    for (std::size_t i = 0; i < msgs.size(); ++i)
        out.downlinks.push_back(st_hosvd(updated[i], msgs[i].tucker.ranks()));
    return out;
}

struct CompAvgRound {
    ServerState server;              // averaged (generally non-orthonormal) factors
    std::vector<DenseTensor> cores;  // after the multimodality update
    double residual = 0.0;
};

// FedAvg-style baseline: average the factors elementwise, re-express the
// cores against the averaged factors via pseudo-inverse, then apply the
// multimodality update to the cores.
inline CompAvgRound comp_avg_round(std::span<const UplinkMessage> msgs, std::span<const double> coeffs)
{
    if (msgs.empty())
        throw ShapeError("comp_avg_round: no messages");
    const RankTuple ranks = msgs.front().tucker.ranks();
    for (const auto& m : msgs)
        if (m.tucker.ranks() != ranks)
            throw UnsupportedConfiguration("CompAVG requires homogeneous client ranks");
    detail::check_messages(msgs, ranks);

    CompAvgRound out;
    out.server.ranks = ranks;
    for (std::size_t k = 0; k < ranks.size(); ++k) {
        Matrix avg = Matrix::Zero(msgs.front().tucker.factors[k].rows(), ranks[k]);
        for (const auto& m : msgs)
            avg += m.tucker.factors[k];
        avg /= static_cast<double>(msgs.size());
        out.server.factors.push_back(std::move(avg));
    }
    const auto cores = recompute_cores_pinv(msgs, out.server.factors);
    out.cores = firm_core_update(cores, coeffs);
    out.residual = constraint_residual(out.cores, coeffs);
    return out;
}

} // namespace fedtucker
