#pragma once
//
// The federated reconstruction loop: synthetic multimodal problem setup,
// T epochs of client steps and a selected server scheme, per-epoch quality
// and communication bookkeeping.
//

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include "fedtucker/compression.hpp"
#include "fedtucker/config.hpp"
#include "fedtucker/decomposition.hpp"
#include "fedtucker/federation.hpp"
#include "fedtucker/metrics.hpp"
#include "fedtucker/rng.hpp"
#include "fedtucker/tomography.hpp"

namespace fedtucker {

// Runs fn(0..n-1) on up to `threads` workers. Each index is handled by
// exactly one worker and results must be written to per-index slots.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn)
{
    const auto workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers)
                    fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool)
        t.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

struct Problem {
    RadonOperator op;
    MultimodalTruth truth;
    std::vector<DenseTensor> images;     // ground truth per client
    std::vector<DenseTensor> sinograms;  // noisy measurements per client
    std::vector<double> coefficients;
};

inline Problem make_problem(const ExperimentConfig& cfg)
{
    Problem p;
    p.op = build_radon_operator(Geometry::parallel(cfg.n1, cfg.n2, cfg.angles, cfg.beamlets));
    p.coefficients = cfg.effective_coefficients();
    p.truth = synthesize_multimodal_truth(make_shepp_logan(cfg.n1, cfg.n2), cfg.clients - 1, p.coefficients);
    p.images = p.truth.images();
    for (std::size_t i = 0; i < p.images.size(); ++i)
        if (!(p.images[i].values().maxCoeff() > 0.0))
            throw DomainError("client " + std::to_string(i) + " has an empty ground-truth image on a " +
                              std::to_string(cfg.n1) + "x" + std::to_string(cfg.n2) +
                              " grid; use a larger grid or fewer clients");
    const RngStreams rng(cfg.seed);
    for (std::size_t i = 0; i < p.images.size(); ++i) {
        auto gen = rng.stream(RngStreams::Purpose::noise, i);
        p.sinograms.push_back(add_speckle_noise(forward_project(p.op, p.images[i]), cfg.sigma, gen));
    }
    return p;
}

struct MetricsRow {
    int epoch = 0;
    std::size_t client = 0;
    double loss = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    Bits uplink_bits = 0;
    Bits downlink_bits = 0;
    Bits cum_bits = 0;
    bool stopped = false;
};

struct RoundRecord {
    int epoch = 0;
    std::vector<RankTuple> client_ranks;
    RankTuple server_ranks;          // r* for shared-factor schemes
    double constraint_residual = 0;  // right after the multimodality update
    bool basis_completed = false;
};

struct MetricsSummary {
    double best_ssim = 0.0;  // max over epochs of the client-averaged SSIM
    int best_epoch = 0;
    std::vector<double> best_ssim_per_client;
    bool stop_rule_fired = false;
    int stop_epoch = 0;      // first epoch meeting the discrepancy rule, else the last epoch
    double stop_ssim = 0.0;  // client-averaged SSIM at stop_epoch
    double final_ssim = 0.0;
    double gce = 0.0;
    Bits total_bits = 0;
    double max_constraint_residual = 0.0;
};

struct MetricsLog {
    std::vector<MetricsRow> rows;
    std::vector<RoundRecord> rounds;
    CommLedger ledger;  // epochs 1..T
    MetricsSummary summary;
    double step_size = 0.0;
    std::vector<double> coefficients;
    std::vector<DenseTensor> truth;
    std::vector<DenseTensor> best_images;
    std::vector<DenseTensor> final_images;

    [[nodiscard]] std::size_t clients() const noexcept { return truth.size(); }

    [[nodiscard]] double mean_ssim(int epoch) const
    {
        double s = 0.0;
        std::size_t n = 0;
        for (const auto& r : rows)
            if (r.epoch == epoch) {
                s += r.ssim;
                ++n;
            }
        return n ? s / static_cast<double>(n) : 0.0;
    }
};

// Default step size: half of estimate_step_size, i.e. 1 / Lipschitz(grad f)
// for f = ||A x - b||^2.
inline double auto_step_size(const RadonOperator& op)
{
    return 0.5 * estimate_step_size(op);
}

namespace detail {

struct Transmitted {
    DenseTensor tensor;
    Bits bits;
};

// Full-image message under the FIRM baselines' encoding.
inline Transmitted transmit_image(const DenseTensor& x, const ExperimentConfig& cfg)
{
    if (cfg.topk) {
        DenseTensor kept = topk_sparsify(x, *cfg.topk).to_dense();
        const Bits bits = csr_encode(kept).bits();
        return {std::move(kept), bits};
    }
    if (cfg.encoding == Encoding::csr)
        return {x, csr_encode(x).bits()};
    return {x, message_volume_bits(RawPayload{x.numel()})};
}

} // namespace detail

inline MetricsLog run_epochs(const ExperimentConfig& cfg, unsigned threads = 1)
{
    validate(cfg);
    const Problem pb = make_problem(cfg);
    const std::size_t n = cfg.clients;
    const Shape shape{cfg.n1, cfg.n2};
    const double eta = cfg.lr ? *cfg.lr : auto_step_size(pb.op);
    const RngStreams rng(cfg.seed);
    const auto& coeffs = pb.coefficients;

    const auto [rank_lo, rank_hi] = cfg.effective_rank_range();
    auto sample_ranks = [&](int epoch) {
        std::vector<RankTuple> out(n);
        for (std::size_t i = 0; i < n; ++i) {
            Index r = cfg.client_rank(i);
            if (cfg.hetero != Hetero::none) {
                const auto key = static_cast<std::uint64_t>(cfg.hetero == Hetero::fixed ? 0 : epoch);
                auto gen = rng.stream(RngStreams::Purpose::rank, key, i);
                r = std::uniform_int_distribution<Index>(rank_lo, rank_hi)(gen);
            }
            out[i] = RankTuple(shape.order(), r);
        }
        return out;
    };

    MetricsLog log;
    log.step_size = eta;
    log.coefficients = coeffs;
    log.truth = pb.images;

    // Client models. FIRM keeps full images; the Tucker schemes keep a core
    // and the factors last received from the server.
    std::vector<DenseTensor> images(n, DenseTensor(shape));
    std::vector<ClientState> clients(n);
    std::vector<std::vector<Matrix>> client_factors(n);
    {
        const auto ranks0 = sample_ranks(0);
        const RankTuple shared = merge_ranks(ranks0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& c = clients[i];
            c.id = i;
            c.modality = i + 1 == n ? Modality::xrt : Modality::xrf;
            c.coefficient = i + 1 == n ? 0.0 : coeffs[i];
            c.sinogram = pb.sinograms[i];
            c.ranks = ranks0[i];
            const RankTuple& r = cfg.method == Method::fulldecomp ? ranks0[i] : shared;
            c.core = DenseTensor(Shape(std::vector<Index>(r.begin(), r.end())));
            client_factors[i] = initial_factors(shape, r);
        }
    }

    auto current_images = [&]() {
        if (!uses_tucker(cfg.method))
            return images;
        std::vector<DenseTensor> out(n);
        parallel_for(n, threads, [&](std::size_t i) { out[i] = tucker_reconstruct(clients[i].core, client_factors[i]); });
        return out;
    };

    std::vector<DenseTensor> best_images;
    double best = -kInfinity;
    bool stop_seen = false;

    auto record = [&](int epoch, const std::vector<Bits>& up, const std::vector<Bits>& down) {
        const auto now = current_images();
        std::vector<double> loss(n), ps(n), ss(n);
        parallel_for(n, threads, [&](std::size_t i) {
            loss[i] = loss_value(pb.op, now[i], pb.sinograms[i]);
            ps[i] = psnr(now[i], pb.images[i]);
            ss[i] = ssim(now[i], pb.images[i], cfg.ssim_scales);
        });
        bool stop_now = false;
        if (epoch > 0 && !stop_seen &&
            discrepancy_stop(loss, pb.sinograms, cfg.angles, cfg.beamlets, cfg.sigma)) {
            stop_now = true;
            stop_seen = true;
            log.summary.stop_rule_fired = true;
            log.summary.stop_epoch = epoch;
        }
        const Bits cum = epoch > 0 ? log.ledger.total() : 0;
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            log.rows.push_back({epoch, i, loss[i], ps[i], ss[i], up[i], down[i], cum, stop_now});
            mean += ss[i];
        }
        mean /= static_cast<double>(n);
        if (mean > best) {
            best = mean;
            log.summary.best_ssim = mean;
            log.summary.best_epoch = epoch;
            best_images = now;
        }
        log.final_images = now;
        return stop_now;
    };

    const std::vector<Bits> zero(n, 0);
    record(0, zero, zero);

    for (int t = 1; t <= cfg.epochs; ++t) {
        std::vector<Bits> up(n), down(n);
        RoundRecord round;
        round.epoch = t;
        round.client_ranks = sample_ranks(t);

        if (cfg.method == Method::firm) {
            std::vector<detail::Transmitted> sent(n);
            parallel_for(n, threads, [&](std::size_t i) {
                sent[i] = detail::transmit_image(gradient_step(pb.op, images[i], pb.sinograms[i], eta), cfg);
            });
            std::vector<DenseTensor> received;
            received.reserve(n);
            for (std::size_t i = 0; i < n; ++i) {
                up[i] = sent[i].bits;
                received.push_back(std::move(sent[i].tensor));
            }
            const auto updated = firm_tensor_update(received, coeffs);
            round.constraint_residual = constraint_residual(updated, coeffs);
            for (std::size_t i = 0; i < n; ++i) {
                auto back = detail::transmit_image(updated[i], cfg);
                down[i] = back.bits;
                images[i] = std::move(back.tensor);
            }
        } else {
            std::vector<UplinkMessage> msgs(n);
            parallel_for(n, threads, [&](std::size_t i) {
                ClientState& c = clients[i];
                c.ranks = round.client_ranks[i];
                msgs[i] = client_local_step(c, client_factors[i], pb.op, eta);
            });
            for (std::size_t i = 0; i < n; ++i)
                up[i] = message_volume_bits(tucker_payload(msgs[i].tucker));

            std::vector<DenseTensor> cores;
            std::vector<Matrix> shared;
            switch (cfg.method) {
            case Method::fulldecomp: {
                auto r = full_decomp_round(msgs, coeffs);
                round.constraint_residual = r.residual;
                for (std::size_t i = 0; i < n; ++i) {
                    down[i] = message_volume_bits(tucker_payload(r.downlinks[i]));
                    clients[i].core = std::move(r.downlinks[i].core);
                    client_factors[i] = std::move(r.downlinks[i].factors);
                }
                break;
            }
            case Method::compjf:
            case Method::comprandjf: {
                round.server_ranks = merge_ranks(round.client_ranks);
                auto jf = cfg.method == Method::compjf
                              ? jf_server(msgs, round.server_ranks)
                              : rjf_server(msgs, round.server_ranks, rng, static_cast<std::uint64_t>(t));
                round.basis_completed = jf.completed;
                cores = firm_core_update(recompute_cores(msgs, jf.factors), coeffs);
                shared = std::move(jf.factors);
                break;
            }
            case Method::compavg: {
                auto r = comp_avg_round(msgs, coeffs);
                round.server_ranks = r.server.ranks;
                cores = std::move(r.cores);
                shared = std::move(r.server.factors);
                break;
            }
            case Method::firm:
                break;
            }
            if (cfg.method != Method::fulldecomp) {
                round.constraint_residual = constraint_residual(cores, coeffs);
                for (std::size_t i = 0; i < n; ++i) {
                    clients[i].core = std::move(cores[i]);
                    client_factors[i] = shared;
                    DownlinkMessage msg{shared, clients[i].core};
                    down[i] = message_volume_bits(
                        TuckerPayload{shape.extents(), std::vector<Index>(msg.core.shape().extents())});
                }
            }
        }

        log.ledger.record(std::accumulate(up.begin(), up.end(), Bits{0}),
                          std::accumulate(down.begin(), down.end(), Bits{0}));
        log.summary.max_constraint_residual =
            std::max(log.summary.max_constraint_residual, round.constraint_residual);
        log.rounds.push_back(std::move(round));
        if (record(t, up, down) && cfg.early_stop)
            break;
    }

    auto& s = log.summary;
    const int last = log.rows.back().epoch;
    if (!s.stop_rule_fired)
        s.stop_epoch = last;
    s.stop_ssim = log.mean_ssim(s.stop_epoch);
    s.final_ssim = log.mean_ssim(last);
    s.best_ssim_per_client.assign(n, -kInfinity);
    for (const auto& r : log.rows)
        s.best_ssim_per_client[r.client] = std::max(s.best_ssim_per_client[r.client], r.ssim);
    const auto volumes = log.ledger.volumes();
    const auto used = std::min<std::size_t>(volumes.size(), static_cast<std::size_t>(s.stop_epoch));
    s.gce = gce(std::max(0.0, s.stop_ssim), std::span<const Bits>(volumes.data(), used), cfg.gamma);
    s.total_bits = log.ledger.total();
    log.best_images = std::move(best_images);
    return log;
}

} // namespace fedtucker
