#pragma once
//
// Experiment outputs: metrics.csv, summary.json and 16-bit graymaps.
//

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fedtucker/config.hpp"
#include "fedtucker/error.hpp"
#include "fedtucker/simulation.hpp"
#include "fedtucker/tensor.hpp"

namespace fedtucker {

class IoError : public Error {
public:
    using Error::Error;
};

inline constexpr std::string_view kMetricsHeader =
    "epoch,client,loss,psnr,ssim,uplink_bits,downlink_bits,cum_bits,stopped";

// Shortest decimal that round-trips to the same double; "inf"/"-inf"/"nan".
inline std::string shortest_decimal(double v)
{
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string metrics_csv(const MetricsLog& log)
{
    std::string out(kMetricsHeader);
    out += '\n';
    for (const auto& r : log.rows) {
        out += std::to_string(r.epoch) + ',' + std::to_string(r.client) + ',' + shortest_decimal(r.loss) + ',' +
               shortest_decimal(r.psnr) + ',' + shortest_decimal(r.ssim) + ',' + std::to_string(r.uplink_bits) +
               ',' + std::to_string(r.downlink_bits) + ',' + std::to_string(r.cum_bits) + ',' +
               (r.stopped ? '1' : '0') + '\n';
    }
    return out;
}

inline nlohmann::json summary_json(const MetricsLog& log, const ExperimentConfig& cfg)
{
    const auto& s = log.summary;
    auto num = [](double v) -> nlohmann::json {
        if (std::isfinite(v))
            return v;
        return shortest_decimal(v);
    };
    nlohmann::json j;
    j["method"] = std::string(to_string(cfg.method));
    j["epochs_run"] = log.rows.empty() ? 0 : log.rows.back().epoch;
    j["best_ssim"] = num(s.best_ssim);
    j["best_epoch"] = s.best_epoch;
    j["best_ssim_per_client"] = nlohmann::json::array();
    for (double v : s.best_ssim_per_client)
        j["best_ssim_per_client"].push_back(num(v));
    j["stop_rule_fired"] = s.stop_rule_fired;
    j["stop_epoch"] = s.stop_epoch;
    j["stop_ssim"] = num(s.stop_ssim);
    j["final_ssim"] = num(s.final_ssim);
    j["gce"] = num(s.gce);
    j["gamma"] = cfg.gamma;
    j["total_bits"] = s.total_bits;
    j["step_size"] = log.step_size;
    j["max_constraint_residual"] = s.max_constraint_residual;
    j["coefficients"] = log.coefficients;
    j["config"] = to_text(cfg);
    return j;
}

// Binary 16-bit PGM (P5, big-endian samples), min-max scaled to [0, 65535].
// Rows are mode 0, columns mode 1. The scaling goes to a sidecar text file.
inline void write_pgm16(const DenseTensor& img, const std::filesystem::path& path)
{
    if (img.order() != 2)
        throw ShapeError("write_pgm16: image must be 2-way");
    const Index rows = img.shape()[0];
    const Index cols = img.shape()[1];
    const double lo = img.values().minCoeff();
    const double hi = img.values().maxCoeff();
    const double span = hi - lo;

    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot open " + path.string());
    f << "P5\n" << cols << ' ' << rows << "\n65535\n";
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) {
            const double v = span > 0.0 ? (img.values()[i + rows * j] - lo) / span : 0.0;
            const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
            const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
            f.write(bytes, 2);
        }
    if (!f)
        throw IoError("failed writing " + path.string());

    auto side = path;
    side += ".txt";
    std::ofstream s(side);
    s << "min=" << shortest_decimal(lo) << "\nmax=" << shortest_decimal(hi) << '\n';
    if (!s)
        throw IoError("failed writing " + side.string());
}

inline void write_text(const std::filesystem::path& path, std::string_view text)
{
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw IoError("cannot open " + path.string());
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f)
        throw IoError("failed writing " + path.string());
}

inline void write_outputs(const MetricsLog& log, const ExperimentConfig& cfg, const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
    write_text(dir / "metrics.csv", metrics_csv(log));
    write_text(dir / "summary.json", summary_json(log, cfg).dump(2) + "\n");
    for (std::size_t i = 0; i < log.truth.size(); ++i) {
        const std::string id = std::to_string(i);
        write_pgm16(log.truth[i], dir / ("truth_client" + id + ".pgm"));
        if (i < log.best_images.size())
            write_pgm16(log.best_images[i], dir / ("best_client" + id + ".pgm"));
        if (i < log.final_images.size())
            write_pgm16(log.final_images[i], dir / ("final_client" + id + ".pgm"));
    }
}

inline MetricsLog run_experiment(const ExperimentConfig& cfg, unsigned threads = 1)
{
    MetricsLog log = run_epochs(cfg, threads);
    write_outputs(log, cfg, cfg.output);
    return log;
}

} // namespace fedtucker
