// reconstruct --config <path> [--out <dir>] [--seed <u64>]
//
// Exit codes: 0 success, 2 configuration error, 3 runtime error.
// FEDTUCKER_THREADS caps the number of worker threads.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "fedtucker/config.hpp"
#include "fedtucker/io.hpp"

namespace {

unsigned thread_cap()
{
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("FEDTUCKER_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v >= 1)
                threads = static_cast<unsigned>(v);
        } catch (const std::exception&) {
            std::cerr << "warning: ignoring FEDTUCKER_THREADS='" << env << "'\n";
        }
    }
    return threads;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Federated Tucker-compressed multimodal tomographic reconstruction"};
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    app.add_option("--config", config_path, "key=value experiment configuration")->required();
    auto* out_opt = app.add_option("--out", out_dir, "output directory (overrides 'output')");
    auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides 'seed')");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    fedtucker::ExperimentConfig cfg;
    try {
        std::ifstream f(config_path, std::ios::binary);
        if (!f) {
            std::cerr << "error: cannot read config " << config_path << '\n';
            return 2;
        }
        std::ostringstream text;
        text << f.rdbuf();
        cfg = fedtucker::parse_config(text.str());
        if (*out_opt)
            cfg.output = out_dir;
        if (*seed_opt)
            cfg.seed = seed;
        fedtucker::validate(cfg);
    } catch (const fedtucker::ConfigError& e) {
        for (const auto& p : e.problems())
            std::cerr << "config error: " << p << '\n';
        return 2;
    }

    try {
        const auto log = fedtucker::run_experiment(cfg, thread_cap());
        const auto& s = log.summary;
        std::cout << "method=" << fedtucker::to_string(cfg.method) << " best_ssim=" << s.best_ssim
                  << " (epoch " << s.best_epoch << ") stop_epoch=" << s.stop_epoch << " gce=" << s.gce
                  << " total_bits=" << s.total_bits << "\noutputs in " << cfg.output << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
