#pragma once
//
// Parallel-beam tomography: ray-driven Radon operator with exact
// intersection lengths, least-squares data term, Shepp-Logan phantoms and
// multiplicative speckle noise.
//
// Image coordinates: pixel (i, j) is the unit square
//   x in [-n2/2 + j, -n2/2 + j + 1),  y in [-n1/2 + i, -n1/2 + i + 1)
// and pixels are half-open, so a ray running exactly along a grid line is
// attributed to the pixel on the higher-index side.
//
// Sinogram entry (a, b) is angle a, beamlet b; the operator row for it is
// a + angles * b (first index fastest, same as DenseTensor).
//

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "fedtucker/error.hpp"
#include "fedtucker/tensor.hpp"

namespace fedtucker {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct Geometry {
    Index n1 = 0;
    Index n2 = 0;
    std::vector<double> angles;   // radians
    std::vector<double> offsets;  // signed beamlet distance from the grid center

    [[nodiscard]] Index num_angles() const noexcept { return static_cast<Index>(angles.size()); }
    [[nodiscard]] Index num_beamlets() const noexcept { return static_cast<Index>(offsets.size()); }
    [[nodiscard]] Index num_rays() const noexcept { return num_angles() * num_beamlets(); }
    [[nodiscard]] Index num_pixels() const noexcept { return n1 * n2; }
    [[nodiscard]] Shape image_shape() const { return Shape{n1, n2}; }
    [[nodiscard]] Shape sinogram_shape() const { return Shape{num_angles(), num_beamlets()}; }

    // Angles uniform over [0, pi); beamlets uniformly spaced (cell centers)
    // across the circumscribed diameter sqrt(n1^2 + n2^2).
    static Geometry parallel(Index n1, Index n2, Index num_angles, Index num_beamlets)
    {
        if (n1 < 1 || n2 < 1 || num_angles < 1 || num_beamlets < 1)
            throw DomainError("geometry extents must be positive");
        Geometry g;
        g.n1 = n1;
        g.n2 = n2;
        g.angles.resize(static_cast<std::size_t>(num_angles));
        for (Index a = 0; a < num_angles; ++a)
            g.angles[static_cast<std::size_t>(a)] = std::numbers::pi * static_cast<double>(a) /
                                                    static_cast<double>(num_angles);
        const double diameter = std::hypot(static_cast<double>(n1), static_cast<double>(n2));
        const double spacing = diameter / static_cast<double>(num_beamlets);
        g.offsets.resize(static_cast<std::size_t>(num_beamlets));
        for (Index b = 0; b < num_beamlets; ++b)
            g.offsets[static_cast<std::size_t>(b)] =
                (static_cast<double>(b) + 0.5 - 0.5 * static_cast<double>(num_beamlets)) * spacing;
        return g;
    }
};

// Exact ray/pixel intersection lengths for one line {p : p . (cos t, sin t) = s},
// returned as (pixel linear index, length) pairs sorted by pixel index.
inline std::vector<std::pair<Index, double>> trace_ray(Index n1, Index n2, double angle, double offset)
{
    constexpr double kParallel = 1e-12;
    const double nx = std::cos(angle);
    const double ny = std::sin(angle);
    const double px = offset * nx;
    const double py = offset * ny;
    const double dx = -ny;
    const double dy = nx;
    const double xmin = -0.5 * static_cast<double>(n2);
    const double ymin = -0.5 * static_cast<double>(n1);
    const double xmax = -xmin;
    const double ymax = -ymin;

    double tlo = -std::numeric_limits<double>::infinity();
    double thi = std::numeric_limits<double>::infinity();
    auto clip = [&](double p, double d, double lo, double hi) {
        if (std::abs(d) <= kParallel)
            return p >= lo && p <= hi;
        double t0 = (lo - p) / d;
        double t1 = (hi - p) / d;
        if (t0 > t1)
            std::swap(t0, t1);
        tlo = std::max(tlo, t0);
        thi = std::min(thi, t1);
        return true;
    };
    if (!clip(px, dx, xmin, xmax) || !clip(py, dy, ymin, ymax))
        return {};
    if (!(thi > tlo))
        return {};

    std::vector<double> ts{tlo, thi};
    auto crossings = [&](double p, double d, double lo, Index count) {
        if (std::abs(d) <= kParallel)
            return;
        for (Index k = 0; k <= count; ++k) {
            const double t = (lo + static_cast<double>(k) - p) / d;
            if (t > tlo && t < thi)
                ts.push_back(t);
        }
    };
    crossings(px, dx, xmin, n2);
    crossings(py, dy, ymin, n1);
    std::sort(ts.begin(), ts.end());

    std::vector<std::pair<Index, double>> hits;
    for (std::size_t m = 0; m + 1 < ts.size(); ++m) {
        const double len = ts[m + 1] - ts[m];
        if (len <= 0.0)
            continue;
        const double tm = 0.5 * (ts[m] + ts[m + 1]);
        const auto j = static_cast<Index>(std::floor(px + tm * dx - xmin));
        const auto i = static_cast<Index>(std::floor(py + tm * dy - ymin));
        if (i < 0 || i >= n1 || j < 0 || j >= n2)
            continue;
        hits.emplace_back(i + n1 * j, len);
    }
    std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::pair<Index, double>> merged;
    for (const auto& h : hits) {
        if (!merged.empty() && merged.back().first == h.first)
            merged.back().second += h.second;
        else
            merged.push_back(h);
    }
    return merged;
}

class RadonOperator {
public:
    RadonOperator() = default;

    RadonOperator(Geometry geometry, SparseRowMatrix entries)
        : geometry_(std::move(geometry)), entries_(std::move(entries))
    {
        if (entries_.rows() != geometry_.num_rays() || entries_.cols() != geometry_.num_pixels())
            throw ShapeError("operator is " + std::to_string(entries_.rows()) + "x" +
                             std::to_string(entries_.cols()) + " but geometry needs " +
                             std::to_string(geometry_.num_rays()) + "x" + std::to_string(geometry_.num_pixels()));
        entries_.makeCompressed();
        transposed_ = entries_.transpose();
        transposed_.makeCompressed();
    }

    [[nodiscard]] const Geometry& geometry() const noexcept { return geometry_; }
    [[nodiscard]] const SparseRowMatrix& entries() const noexcept { return entries_; }

    [[nodiscard]] Vector apply(const Vector& x) const { return entries_ * x; }
    [[nodiscard]] Vector apply_adjoint(const Vector& y) const { return transposed_ * y; }

private:
    Geometry geometry_;
    SparseRowMatrix entries_;
    SparseRowMatrix transposed_;
};

inline RadonOperator build_radon_operator(const Geometry& g)
{
    std::vector<Eigen::Triplet<double>> triplets;
    for (Index b = 0; b < g.num_beamlets(); ++b)
        for (Index a = 0; a < g.num_angles(); ++a) {
            const Index row = a + g.num_angles() * b;
            for (const auto& [pixel, len] :
                 trace_ray(g.n1, g.n2, g.angles[static_cast<std::size_t>(a)], g.offsets[static_cast<std::size_t>(b)]))
                triplets.emplace_back(row, pixel, len);
        }
    SparseRowMatrix m(g.num_rays(), g.num_pixels());
    m.setFromTriplets(triplets.begin(), triplets.end());
    return RadonOperator(g, std::move(m));
}

namespace detail {

inline void check_image(const RadonOperator& a, const DenseTensor& x)
{
    if (x.shape() != a.geometry().image_shape())
        throw ShapeError("image shape " + x.shape().str() + " does not match grid " +
                         a.geometry().image_shape().str());
}

inline void check_sinogram(const RadonOperator& a, const DenseTensor& b)
{
    if (b.shape() != a.geometry().sinogram_shape())
        throw ShapeError("sinogram shape " + b.shape().str() + " does not match geometry " +
                         a.geometry().sinogram_shape().str());
}

} // namespace detail

inline DenseTensor forward_project(const RadonOperator& a, const DenseTensor& x)
{
    detail::check_image(a, x);
    return DenseTensor(a.geometry().sinogram_shape(), a.apply(x.values()));
}

inline DenseTensor back_project(const RadonOperator& a, const DenseTensor& y)
{
    detail::check_sinogram(a, y);
    return DenseTensor(a.geometry().image_shape(), a.apply_adjoint(y.values()));
}

// ||A x - b||_F^2
inline double loss_value(const RadonOperator& a, const DenseTensor& x, const DenseTensor& b)
{
    detail::check_image(a, x);
    detail::check_sinogram(a, b);
    return (a.apply(x.values()) - b.values()).squaredNorm();
}

// 2 A^T (A x - b)
inline DenseTensor loss_gradient(const RadonOperator& a, const DenseTensor& x, const DenseTensor& b)
{
    detail::check_image(a, x);
    detail::check_sinogram(a, b);
    Vector r = a.apply(x.values()) - b.values();
    return DenseTensor(a.geometry().image_shape(), 2.0 * a.apply_adjoint(r));
}

// Power iteration on A^T A from a fixed positive start vector; returns 1/lambda_max.
inline double estimate_step_size(const RadonOperator& a, int iterations = 100)
{
    const Index n = a.geometry().num_pixels();
    std::mt19937_64 gen(0x5eedULL);
    std::uniform_real_distribution<double> unif(0.5, 1.5);
    Vector v(n);
    for (Index i = 0; i < n; ++i)
        v[i] = unif(gen);
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
        Vector w = a.apply_adjoint(a.apply(v));
        const double nw = w.norm();
        if (nw == 0.0)
            throw DomainError("estimate_step_size: operator is zero");
        v = w / nw;
    }
    lambda = a.apply(v).squaredNorm();
    if (!(lambda > 0.0))
        throw DomainError("estimate_step_size: operator is zero");
    return 1.0 / lambda;
}

// ---------------------------------------------------------------------------
// Phantoms

struct Ellipse {
    double intensity;
    double a;  // x semi-axis
    double b;  // y semi-axis
    double x0;
    double y0;
    double phi_deg;

    [[nodiscard]] bool contains(double x, double y) const
    {
        const double phi = phi_deg * std::numbers::pi / 180.0;
        const double c = std::cos(phi);
        const double s = std::sin(phi);
        const double u = (x - x0) * c + (y - y0) * s;
        const double v = -(x - x0) * s + (y - y0) * c;
        return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
    }
};

// Modified (high-contrast) Shepp-Logan ellipse table on [-1, 1]^2.
inline const std::array<Ellipse, 10>& shepp_logan_ellipses()
{
    static const std::array<Ellipse, 10> table{{
        {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
        {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
        {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
        {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
        {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
        {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
        {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
        {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
        {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
        {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
    }};
    return table;
}

struct Phantom {
    DenseTensor image;       // clamped to [0, 1]
    std::vector<int> label;  // per pixel: last ellipse containing its center, -1 = background
};

inline Phantom make_shepp_logan(Index n1, Index n2)
{
    if (n1 < 8 || n2 < 8)
        throw DomainError("phantom grid must be at least 8x8");
    const auto& ellipses = shepp_logan_ellipses();
    Phantom p{DenseTensor(Shape{n1, n2}), std::vector<int>(static_cast<std::size_t>(n1 * n2), -1)};
    for (Index j = 0; j < n2; ++j)
        for (Index i = 0; i < n1; ++i) {
            const double x = 2.0 * (static_cast<double>(j) + 0.5) / static_cast<double>(n2) - 1.0;
            const double y = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n1);
            double v = 0.0;
            int lab = -1;
            for (std::size_t e = 0; e < ellipses.size(); ++e)
                if (ellipses[e].contains(x, y)) {
                    v += ellipses[e].intensity;
                    lab = static_cast<int>(e);
                }
            p.image.values()[i + n1 * j] = std::clamp(v, 0.0, 1.0);
            p.label[static_cast<std::size_t>(i + n1 * j)] = lab;
        }
    return p;
}

inline DenseTensor shepp_logan_phantom(Index n1, Index n2)
{
    return make_shepp_logan(n1, n2).image;
}

struct MultimodalTruth {
    std::vector<DenseTensor> elements;  // X^1 .. X^{N-1}
    DenseTensor transmission;           // X^N = sum_j c_j X^j
    std::vector<double> coefficients;

    // All N images in client order (XRF clients first, XRT last).
    [[nodiscard]] std::vector<DenseTensor> images() const
    {
        auto all = elements;
        all.push_back(transmission);
        return all;
    }
};

// Splits the phantom's non-background pixels into element maps by
// assigning ellipse e (the last ellipse covering the pixel) to element
// e mod (N-1); the transmission image is the coefficient-weighted sum.
inline MultimodalTruth synthesize_multimodal_truth(const Phantom& phantom, std::size_t num_elements,
                                                   std::vector<double> coefficients)
{
    if (num_elements < 1)
        throw DomainError("need at least one element (N >= 2)");
    if (num_elements > shepp_logan_ellipses().size())
        throw DomainError("element count " + std::to_string(num_elements) + " exceeds ellipse count " +
                          std::to_string(shepp_logan_ellipses().size()));
    if (coefficients.size() != num_elements)
        throw DomainError("need one coefficient per element");
    for (double c : coefficients)
        if (!(c > 0.0))
            throw DomainError("coefficients must be positive");

    MultimodalTruth truth;
    truth.coefficients = std::move(coefficients);
    truth.elements.assign(num_elements, DenseTensor(phantom.image.shape()));
    for (std::size_t p = 0; p < phantom.label.size(); ++p) {
        const int lab = phantom.label[p];
        if (lab < 0)
            continue;
        truth.elements[static_cast<std::size_t>(lab) % num_elements].values()[static_cast<Index>(p)] =
            phantom.image.values()[static_cast<Index>(p)];
    }
    truth.transmission = DenseTensor(phantom.image.shape());
    for (std::size_t j = 0; j < num_elements; ++j)
        truth.transmission.values() += truth.coefficients[j] * truth.elements[j].values();
    return truth;
}

// out = b (1 + eps), eps ~ N(0, sigma^2) clipped to +-6 sigma.
template <typename Rng>
DenseTensor add_speckle_noise(const DenseTensor& b, double sigma, Rng& rng)
{
    if (!(sigma >= 0.0))
        throw DomainError("noise standard deviation must be non-negative");
    DenseTensor out = b;
    if (sigma == 0.0)
        return out;
    std::normal_distribution<double> normal(0.0, sigma);
    for (Index i = 0; i < out.numel(); ++i) {
        const double eps = std::clamp(normal(rng), -6.0 * sigma, 6.0 * sigma);
        out.values()[i] = b.values()[i] * (1.0 + eps);
    }
    return out;
}

} // namespace fedtucker
