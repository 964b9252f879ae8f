#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace fedtucker {

// Independent, reproducible random streams keyed by (purpose, a, b, c).
// A stream depends only on the master seed and its key, never on the
// order in which streams are requested, so concurrent clients draw the
// same numbers regardless of scheduling.
class RngStreams {
public:
    enum class Purpose : std::uint32_t {
        noise = 1,   // (client)
        rank = 2,    // (epoch, client)
        sketch = 3,  // (epoch, mode, client)
    };

    explicit RngStreams(std::uint64_t seed = 0) : seed_(seed) {}

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

    [[nodiscard]] std::mt19937_64 stream(Purpose p, std::uint64_t a = 0, std::uint64_t b = 0,
                                         std::uint64_t c = 0) const
    {
        std::vector<std::uint32_t> key;
        key.reserve(9);
        auto push64 = [&](std::uint64_t v) {
            key.push_back(static_cast<std::uint32_t>(v));
            key.push_back(static_cast<std::uint32_t>(v >> 32));
        };
        push64(seed_);
        key.push_back(static_cast<std::uint32_t>(p));
        push64(a);
        push64(b);
        push64(c);
        std::seed_seq seq(key.begin(), key.end());
        return std::mt19937_64(seq);
    }

private:
    std::uint64_t seed_;
};

} // namespace fedtucker
