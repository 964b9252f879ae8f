#pragma once
//
// Image quality (PSNR, multiscale SSIM) and communication efficiency (GCE)
// metrics, plus the discrepancy-principle stopping rule.
//

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "fedtucker/compression.hpp"
#include "fedtucker/error.hpp"
#include "fedtucker/tensor.hpp"

namespace fedtucker {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// 10 log10(max(ref)^2 / MSE); +inf when the images are identical.
inline double psnr(const DenseTensor& x, const DenseTensor& ref)
{
    if (x.shape() != ref.shape())
        throw ShapeError("psnr: shape mismatch " + x.shape().str() + " vs " + ref.shape().str());
    const double peak = ref.values().maxCoeff();
    if (!(peak > 0.0))
        throw DomainError("psnr: reference peak must be positive");
    const double mse = (x.values() - ref.values()).squaredNorm() / static_cast<double>(x.numel());
    if (mse == 0.0)
        return kInfinity;
    return 10.0 * std::log10(peak * peak / mse);
}

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

// Standard 5-level multiscale weights; the first `scales` are used and
// renormalized to sum to one.
inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma)
{
    std::vector<double> w(static_cast<std::size_t>(size));
    const double c = 0.5 * static_cast<double>(size - 1);
    for (int i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - c;
        w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    }
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& v : w)
        v /= s;
    return w;
}

// 'valid' separable filtering of a column-major image.
inline Matrix filter_valid(const Matrix& img, const std::vector<double>& w)
{
    const auto k = static_cast<Index>(w.size());
    const Index rows = img.rows() - k + 1;
    const Index cols = img.cols() - k + 1;
    Matrix tmp(rows, img.cols());
    for (Index j = 0; j < img.cols(); ++j)
        for (Index i = 0; i < rows; ++i) {
            double acc = 0.0;
            for (Index t = 0; t < k; ++t)
                acc += w[static_cast<std::size_t>(t)] * img(i + t, j);
            tmp(i, j) = acc;
        }
    Matrix out(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) {
            double acc = 0.0;
            for (Index t = 0; t < k; ++t)
                acc += w[static_cast<std::size_t>(t)] * tmp(i, j + t);
            out(i, j) = acc;
        }
    return out;
}

// 2x2 average pooling (odd trailing row/column dropped).
inline Matrix downsample2(const Matrix& img)
{
    Matrix out(img.rows() / 2, img.cols() / 2);
    for (Index j = 0; j < out.cols(); ++j)
        for (Index i = 0; i < out.rows(); ++i)
            out(i, j) = 0.25 * (img(2 * i, 2 * j) + img(2 * i + 1, 2 * j) + img(2 * i, 2 * j + 1) +
                                img(2 * i + 1, 2 * j + 1));
    return out;
}

struct SsimMeans {
    double ssim;  // mean of luminance * contrast-structure
    double cs;    // mean of contrast-structure
};

inline SsimMeans ssim_single_scale(const Matrix& x, const Matrix& y, double c1, double c2, const SsimParams& p)
{
    const auto w = gaussian_window(p.window, p.sigma);
    const Matrix mx = filter_valid(x, w);
    const Matrix my = filter_valid(y, w);
    const Matrix sxx = filter_valid(x.cwiseProduct(x), w);
    const Matrix syy = filter_valid(y.cwiseProduct(y), w);
    const Matrix sxy = filter_valid(x.cwiseProduct(y), w);
    double sum_ssim = 0.0;
    double sum_cs = 0.0;
    for (Index j = 0; j < mx.cols(); ++j)
        for (Index i = 0; i < mx.rows(); ++i) {
            const double ux = mx(i, j);
            const double uy = my(i, j);
            const double vx = sxx(i, j) - ux * ux;
            const double vy = syy(i, j) - uy * uy;
            const double cov = sxy(i, j) - ux * uy;
            const double lum = (2.0 * ux * uy + c1) / (ux * ux + uy * uy + c1);
            const double cs = (2.0 * cov + c2) / (vx + vy + c2);
            sum_ssim += lum * cs;
            sum_cs += cs;
        }
    const auto n = static_cast<double>(mx.size());
    return {sum_ssim / n, sum_cs / n};
}

} // namespace detail

// Minimum side length supporting `scales` dyadic levels with the window.
inline Index ssim_min_side(int scales, const SsimParams& p = {})
{
    return (Index{1} << (scales - 1)) * p.window;
}

// SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03 and
// dynamic range max(ref) - min(ref) (1 if ref is constant). With
// scales > 1 this is multiscale SSIM over 2x2-average-pooled levels:
//   prod_{j<M} cs_j^{w_j} * ssim_M^{w_M},
// negative per-level terms clamped to zero.
inline double ssim(const DenseTensor& x, const DenseTensor& ref, int scales = 1, const SsimParams& p = {})
{
    if (x.shape() != ref.shape())
        throw ShapeError("ssim: shape mismatch " + x.shape().str() + " vs " + ref.shape().str());
    if (x.order() != 2)
        throw ShapeError("ssim: images must be 2-way tensors");
    if (scales < 1 || scales > static_cast<int>(kMsSsimWeights.size()))
        throw DomainError("ssim: scales must lie in [1, 5]");
    const Index side = ssim_min_side(scales, p);
    if (x.shape()[0] < side || x.shape()[1] < side)
        throw DomainError("ssim: image " + x.shape().str() + " too small for " + std::to_string(scales) +
                          " scales (need " + std::to_string(side) + " per side)");

    double range = ref.values().maxCoeff() - ref.values().minCoeff();
    if (!(range > 0.0))
        range = 1.0;
    const double c1 = (p.k1 * range) * (p.k1 * range);
    const double c2 = (p.k2 * range) * (p.k2 * range);

    Matrix a = x.as_matrix();
    Matrix b = ref.as_matrix();
    if (scales == 1)
        return detail::ssim_single_scale(a, b, c1, c2, p).ssim;

    const double wsum = std::accumulate(kMsSsimWeights.begin(), kMsSsimWeights.begin() + scales, 0.0);
    double out = 1.0;
    for (int level = 0; level < scales; ++level) {
        const auto m = detail::ssim_single_scale(a, b, c1, c2, p);
        const double w = kMsSsimWeights[static_cast<std::size_t>(level)] / wsum;
        const double term = level + 1 == scales ? m.ssim : m.cs;
        out *= std::pow(std::max(term, 0.0), w);
        if (level + 1 < scales) {
            a = detail::downsample2(a);
            b = detail::downsample2(b);
        }
    }
    return out;
}

// Gamma communication efficiency with SSIM as the accuracy term:
//   ssim / ((1 - ssim)^gamma * sum_t log2(V_t + 1)).
inline double gce(double ssim_avg, std::span<const Bits> volumes, double gamma)
{
    if (!(ssim_avg >= 0.0))
        throw DomainError("gce: SSIM must be non-negative");
    if (ssim_avg >= 1.0)
        return kInfinity;
    double denom = 0.0;
    for (Bits v : volumes)
        denom += std::log2(static_cast<double>(v) + 1.0);
    if (ssim_avg == 0.0)
        return 0.0;
    if (denom == 0.0)
        return kInfinity;
    return ssim_avg / (std::pow(1.0 - ssim_avg, gamma) * denom);
}

inline double discrepancy_threshold(const DenseTensor& sinogram, Index angles, Index beamlets, double sigma)
{
    return sinogram.values().maxCoeff() * std::sqrt(static_cast<double>(angles * beamlets)) * sigma;
}

// True iff f^i <= max(B^i) sqrt(angles * beamlets) sigma for every client.
// The rule is disabled (never fires) for sigma <= 0.
inline bool discrepancy_stop(std::span<const double> losses, std::span<const DenseTensor> sinograms, Index angles,
                             Index beamlets, double sigma)
{
    if (losses.size() != sinograms.size())
        throw ShapeError("discrepancy_stop: one loss per sinogram required");
    if (!(sigma > 0.0) || losses.empty())
        return false;
    for (std::size_t i = 0; i < losses.size(); ++i)
        if (!(losses[i] <= discrepancy_threshold(sinograms[i], angles, beamlets, sigma)))
            return false;
    return true;
}

} // namespace fedtucker
