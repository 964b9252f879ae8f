#pragma once
//
// Experiment configuration: a key=value text format, one pair per line,
// '#' starting a comment. Unknown keys are rejected; every field has a
// documented default so an empty file is a valid configuration.
//
//   method       firm | fulldecomp | compjf | comprandjf | compavg   (compjf)
//   grid         <n1>x<n2>                                             (64x64)
//   angles       projection angles                                     (40)
//   beamlets     beamlets per angle                                    (95)
//   clients      N, the last one is the XRT client                     (4)
//   coefficients auto | c_1,...,c_{N-1}                                (auto = 1/sqrt(N-1))
//   sigma        speckle noise standard deviation                      (0.1)
//   ranks        r | r_1,...,r_N  (one Tucker rank per client)         (32)
//   hetero       none | fixed | per_epoch                              (none)
//   rank_range   lo:hi for heterogeneous sampling          (20n/250 : 100n/250)
//   epochs       T                                                     (300)
//   lr           auto | step size                                      (auto)
//   seed         unsigned 64-bit                                       (0)
//   topk         percent in (0,100], FIRM only                         (off)
//   encoding     raw | csr, FIRM only                                  (raw)
//   early_stop   true | false                                          (false)
//   gamma        GCE exponent                                          (0.01)
//   ssim_scales  1..5                                                  (3)
//   output       output directory                                      (out)
//

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fedtucker/error.hpp"
#include "fedtucker/metrics.hpp"
#include "fedtucker/tensor.hpp"

namespace fedtucker {

enum class Method { firm, fulldecomp, compjf, comprandjf, compavg };
enum class Hetero { none, fixed, per_epoch };
enum class Encoding { raw, csr };

inline std::string_view to_string(Method m)
{
    switch (m) {
    case Method::firm: return "firm";
    case Method::fulldecomp: return "fulldecomp";
    case Method::compjf: return "compjf";
    case Method::comprandjf: return "comprandjf";
    case Method::compavg: return "compavg";
    }
    return "?";
}

inline std::string_view to_string(Hetero h)
{
    switch (h) {
    case Hetero::none: return "none";
    case Hetero::fixed: return "fixed";
    case Hetero::per_epoch: return "per_epoch";
    }
    return "?";
}

inline std::string_view to_string(Encoding e)
{
    return e == Encoding::raw ? "raw" : "csr";
}

inline bool uses_tucker(Method m) noexcept
{
    return m != Method::firm;
}

class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> problems)
        : Error(join(problems)), problems_(std::move(problems))
    {
    }

    [[nodiscard]] const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    static std::string join(const std::vector<std::string>& p)
    {
        std::string s;
        for (const auto& m : p)
            s += (s.empty() ? "" : "; ") + m;
        return s;
    }

    std::vector<std::string> problems_;
};

struct ExperimentConfig {
    Method method = Method::compjf;
    Index n1 = 64;
    Index n2 = 64;
    Index angles = 40;
    Index beamlets = 95;
    std::size_t clients = 4;
    std::vector<double> coefficients;  // empty = auto
    double sigma = 0.1;
    std::vector<Index> ranks{32};      // one entry = same rank for every client
    Hetero hetero = Hetero::none;
    std::optional<std::pair<Index, Index>> rank_range;  // empty = scaled default
    int epochs = 300;
    std::optional<double> lr;          // empty = auto
    std::uint64_t seed = 0;
    std::optional<double> topk;
    Encoding encoding = Encoding::raw;
    bool early_stop = false;
    double gamma = 0.01;
    int ssim_scales = 3;
    std::string output = "out";

    [[nodiscard]] Index min_extent() const noexcept { return std::min(n1, n2); }

    // Heterogeneous sampling range: [20, 100] at n = 250, scaled by n / 250.
    [[nodiscard]] std::pair<Index, Index> effective_rank_range() const
    {
        if (rank_range)
            return *rank_range;
        const double scale = static_cast<double>(min_extent()) / 250.0;
        const auto lo = std::max<Index>(1, static_cast<Index>(std::lround(20.0 * scale)));
        const auto hi = std::clamp<Index>(static_cast<Index>(std::lround(100.0 * scale)), lo, min_extent());
        return {lo, hi};
    }

    [[nodiscard]] std::vector<double> effective_coefficients() const
    {
        if (!coefficients.empty())
            return coefficients;
        return std::vector<double>(clients - 1, 1.0 / std::sqrt(static_cast<double>(clients - 1)));
    }

    // Base rank of client i before any heterogeneous sampling.
    [[nodiscard]] Index client_rank(std::size_t i) const { return ranks.size() == 1 ? ranks.front() : ranks.at(i); }

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline std::string format_double(double v)
{
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view s)
{
    T v{};
    const auto* end = s.data() + s.size();
    auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end)
        return std::nullopt;
    if constexpr (std::is_floating_point_v<T>)
        if (!std::isfinite(v))
            return std::nullopt;
    return v;
}

} // namespace detail

inline void validate(const ExperimentConfig& c)
{
    std::vector<std::string> p;
    auto need = [&](bool ok, const std::string& msg) {
        if (!ok)
            p.push_back(msg);
    };
    need(c.n1 >= 8 && c.n2 >= 8 && c.n1 <= 4096 && c.n2 <= 4096, "grid extents must lie in [8, 4096]");
    need(c.angles >= 1 && c.angles <= 100000, "angles must lie in [1, 100000]");
    need(c.beamlets >= 1 && c.beamlets <= 100000, "beamlets must lie in [1, 100000]");
    need(c.clients >= 2 && c.clients <= 11, "clients must lie in [2, 11]");
    need(c.coefficients.empty() || c.coefficients.size() + 1 == c.clients,
         "coefficients need exactly clients-1 entries");
    for (double v : c.coefficients)
        need(v > 0.0, "coefficients must be positive");
    need(c.sigma >= 0.0 && c.sigma <= 1.0, "sigma must lie in [0, 1]");
    need(c.ranks.size() == 1 || c.ranks.size() == c.clients, "ranks needs one value or one per client");
    for (Index r : c.ranks)
        need(r >= 1 && r <= std::min(c.n1, c.n2), "ranks must lie in [1, min(n1, n2)]");
    if (c.rank_range)
        need(c.rank_range->first >= 1 && c.rank_range->first <= c.rank_range->second &&
                 c.rank_range->second <= std::min(c.n1, c.n2),
             "rank_range must satisfy 1 <= lo <= hi <= min(n1, n2)");
    need(c.epochs >= 0 && c.epochs <= 1000000, "epochs must lie in [0, 1000000]");
    need(!c.lr || *c.lr > 0.0, "lr must be positive");
    need(!c.topk || (*c.topk > 0.0 && *c.topk <= 100.0), "topk must lie in (0, 100]");
    need(c.gamma >= 0.0, "gamma must be non-negative");
    need(c.ssim_scales >= 1 && c.ssim_scales <= 5, "ssim_scales must lie in [1, 5]");
    if (c.ssim_scales >= 1 && c.ssim_scales <= 5)
        need(std::min(c.n1, c.n2) >= ssim_min_side(c.ssim_scales),
             "grid too small for ssim_scales=" + std::to_string(c.ssim_scales));
    need(!c.output.empty(), "output must not be empty");

    // Method/option compatibility.
    need(!c.topk || c.method == Method::firm, "topk is a FIRM baseline and requires method=firm");
    need(c.encoding == Encoding::raw || c.method == Method::firm, "encoding=csr requires method=firm");
    need(c.hetero == Hetero::none || c.method == Method::compjf || c.method == Method::comprandjf ||
             c.method == Method::fulldecomp,
         "heterogeneous ranks require method=compjf, comprandjf or fulldecomp");
    if (c.method == Method::compavg && c.ranks.size() > 1)
        need(std::all_of(c.ranks.begin(), c.ranks.end(), [&](Index r) { return r == c.ranks.front(); }),
             "compavg requires homogeneous ranks");
    if (!p.empty())
        throw ConfigError(std::move(p));
}

inline ExperimentConfig parse_config(std::string_view text)
{
    ExperimentConfig c;
    std::vector<std::string> p;
    std::map<std::string, std::size_t, std::less<>> seen;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        std::string_view line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        const std::string at = "line " + std::to_string(line_no) + ": ";
        if (eq == std::string_view::npos) {
            p.push_back(at + "expected key=value");
            continue;
        }
        const std::string key(detail::trim(line.substr(0, eq)));
        const std::string_view val = detail::trim(line.substr(eq + 1));
        if (auto [it, fresh] = seen.emplace(key, line_no); !fresh) {
            p.push_back(at + "duplicate key '" + key + "' (first on line " + std::to_string(it->second) + ")");
            continue;
        }
        auto bad = [&](const std::string& what) { p.push_back(at + "invalid " + key + " '" + std::string(val) + "': " + what); };
        auto integer = [&](auto& field) {
            using T = std::remove_reference_t<decltype(field)>;
            if (auto v = detail::parse_number<T>(val))
                field = *v;
            else
                bad("expected an integer");
        };
        auto real = [&](double& field) {
            if (auto v = detail::parse_number<double>(val))
                field = *v;
            else
                bad("expected a number");
        };
        auto boolean = [&](bool& field) {
            if (val == "true" || val == "1" || val == "yes")
                field = true;
            else if (val == "false" || val == "0" || val == "no")
                field = false;
            else
                bad("expected true or false");
        };

        if (key == "method") {
            if (val == "firm") c.method = Method::firm;
            else if (val == "fulldecomp") c.method = Method::fulldecomp;
            else if (val == "compjf") c.method = Method::compjf;
            else if (val == "comprandjf") c.method = Method::comprandjf;
            else if (val == "compavg") c.method = Method::compavg;
            else bad("expected firm, fulldecomp, compjf, comprandjf or compavg");
        } else if (key == "grid") {
            const auto parts = detail::split(val, 'x');
            std::optional<Index> a, b;
            if (parts.size() == 2) {
                a = detail::parse_number<Index>(parts[0]);
                b = detail::parse_number<Index>(parts[1]);
            }
            if (a && b) {
                c.n1 = *a;
                c.n2 = *b;
            } else {
                bad("expected <n1>x<n2>");
            }
        } else if (key == "angles") {
            integer(c.angles);
        } else if (key == "beamlets") {
            integer(c.beamlets);
        } else if (key == "clients") {
            integer(c.clients);
        } else if (key == "coefficients") {
            c.coefficients.clear();
            if (val != "auto") {
                for (auto part : detail::split(val, ',')) {
                    if (auto v = detail::parse_number<double>(part))
                        c.coefficients.push_back(*v);
                    else {
                        bad("expected auto or a comma-separated list of numbers");
                        break;
                    }
                }
            }
        } else if (key == "sigma") {
            real(c.sigma);
        } else if (key == "ranks") {
            c.ranks.clear();
            for (auto part : detail::split(val, ',')) {
                if (auto v = detail::parse_number<Index>(part))
                    c.ranks.push_back(*v);
                else {
                    bad("expected an integer or a comma-separated list of integers");
                    c.ranks = {32};
                    break;
                }
            }
        } else if (key == "hetero") {
            if (val == "none") c.hetero = Hetero::none;
            else if (val == "fixed") c.hetero = Hetero::fixed;
            else if (val == "per_epoch") c.hetero = Hetero::per_epoch;
            else bad("expected none, fixed or per_epoch");
        } else if (key == "rank_range") {
            const auto parts = detail::split(val, ':');
            std::optional<Index> a, b;
            if (parts.size() == 2) {
                a = detail::parse_number<Index>(parts[0]);
                b = detail::parse_number<Index>(parts[1]);
            }
            if (a && b)
                c.rank_range = std::pair{*a, *b};
            else
                bad("expected lo:hi");
        } else if (key == "epochs") {
            integer(c.epochs);
        } else if (key == "lr") {
            if (val == "auto")
                c.lr.reset();
            else if (auto v = detail::parse_number<double>(val))
                c.lr = *v;
            else
                bad("expected auto or a number");
        } else if (key == "seed") {
            integer(c.seed);
        } else if (key == "topk") {
            if (val == "off" || val == "none")
                c.topk.reset();
            else if (auto v = detail::parse_number<double>(val))
                c.topk = *v;
            else
                bad("expected a percentage");
        } else if (key == "encoding") {
            if (val == "raw") c.encoding = Encoding::raw;
            else if (val == "csr") c.encoding = Encoding::csr;
            else bad("expected raw or csr");
        } else if (key == "early_stop") {
            boolean(c.early_stop);
        } else if (key == "gamma") {
            real(c.gamma);
        } else if (key == "ssim_scales") {
            integer(c.ssim_scales);
        } else if (key == "output") {
            if (val.empty())
                bad("expected a path");
            else
                c.output = std::string(val);
        } else {
            p.push_back(at + "unknown key '" + key + "'");
        }
    }
    if (!p.empty())
        throw ConfigError(std::move(p));
    validate(c);
    return c;
}

// Canonical text form; parse_config(to_text(c)) == c.
inline std::string to_text(const ExperimentConfig& c)
{
    std::ostringstream os;
    auto list = [](const auto& v, auto fmt) {
        std::string s;
        for (const auto& x : v)
            s += (s.empty() ? "" : ",") + fmt(x);
        return s;
    };
    os << "method=" << to_string(c.method) << '\n';
    os << "grid=" << c.n1 << 'x' << c.n2 << '\n';
    os << "angles=" << c.angles << '\n';
    os << "beamlets=" << c.beamlets << '\n';
    os << "clients=" << c.clients << '\n';
    os << "coefficients="
       << (c.coefficients.empty() ? std::string("auto") : list(c.coefficients, detail::format_double)) << '\n';
    os << "sigma=" << detail::format_double(c.sigma) << '\n';
    os << "ranks=" << list(c.ranks, [](Index r) { return std::to_string(r); }) << '\n';
    os << "hetero=" << to_string(c.hetero) << '\n';
    if (c.rank_range)
        os << "rank_range=" << c.rank_range->first << ':' << c.rank_range->second << '\n';
    os << "epochs=" << c.epochs << '\n';
    os << "lr=" << (c.lr ? detail::format_double(*c.lr) : std::string("auto")) << '\n';
    os << "seed=" << c.seed << '\n';
    if (c.topk)
        os << "topk=" << detail::format_double(*c.topk) << '\n';
    os << "encoding=" << to_string(c.encoding) << '\n';
    os << "early_stop=" << (c.early_stop ? "true" : "false") << '\n';
    os << "gamma=" << detail::format_double(c.gamma) << '\n';
    os << "ssim_scales=" << c.ssim_scales << '\n';
    os << "output=" << c.output << '\n';
    return os.str();
}

} // namespace fedtucker
