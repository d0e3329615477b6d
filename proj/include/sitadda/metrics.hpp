#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "errors.hpp"
#include "image.hpp"

namespace sitadda {

/// Pearson correlation over all pixels. Throws DegenerateError when either
/// image is constant (the coefficient is undefined there, not zero).
inline double pearson(std::span<const float> y, std::span<const float> yhat)
{
    if (y.size() != yhat.size()) throw ShapeError("pearson: size mismatch");
    if (y.empty()) throw ShapeError("pearson: empty input");
    const double n = static_cast<double>(y.size());
    double my = 0.0, mh = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        my += y[i];
        mh += yhat[i];
    }
    my /= n;
    mh /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double a = y[i] - my, b = yhat[i] - mh;
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if (sxx == 0.0 || syy == 0.0) throw DegenerateError("pearson: correlation undefined for a constant image");
    return std::clamp(sxy / (std::sqrt(sxx) * std::sqrt(syy)), -1.0, 1.0);
}

inline double pearson(const Image& y, const Image& yhat)
{
    require_same_shape(y, yhat, "pearson");
    return pearson(y.view(), yhat.view());
}

/// Pearson, or NaN where it is undefined. For bookkeeping paths that must
/// record "undefined" instead of aborting.
inline double pearson_or_nan(const Image& y, const Image& yhat)
{
    try {
        return pearson(y, yhat);
    } catch (const DegenerateError&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

inline double mse(const Image& y, const Image& yhat)
{
    require_same_shape(y, yhat, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = static_cast<double>(y.values[i]) - yhat.values[i];
        acc += d * d;
    }
    return acc / static_cast<double>(y.size());
}

/// 10 log10(L^2 / MSE); +infinity when the images are identical.
inline double psnr(const Image& y, const Image& yhat, double max_value)
{
    if (!(max_value > 0.0)) throw ConfigError("psnr: L must be > 0");
    const double e = mse(y, yhat);
    if (e == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(max_value * max_value / e);
}

/// Dynamic range of a value domain (255 raw, 2 normalized).
inline double dynamic_range(Domain d) { return static_cast<double>(domain_max(d) - domain_min(d)); }

struct SsimConfig {
    int window = 11;
    double sigma = 1.5;
    double dynamic_range = 255.0;
    double k1 = 0.01;
    double k2 = 0.03;

    [[nodiscard]] double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
    [[nodiscard]] double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }

    void validate() const
    {
        if (window < 1 || window % 2 == 0) throw ConfigError("ssim window size must be odd and positive");
        if (!(sigma > 0.0)) throw ConfigError("ssim sigma must be > 0");
        if (!(dynamic_range > 0.0)) throw ConfigError("ssim dynamic range L must be > 0");
    }
};

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
inline std::vector<double> gaussian_taps(int size, double sigma)
{
    std::vector<double> w(static_cast<std::size_t>(size));
    const int half = size / 2;
    for (int i = 0; i < size; ++i) w[i] = std::exp(-static_cast<double>((i - half) * (i - half)) / (2.0 * sigma * sigma));
    const double s = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& v : w) v /= s;
    return w;
}

namespace detail {

/// Separable 'valid' filtering of a double plane.
inline std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& taps)
{
    const int k = static_cast<int>(taps.size());
    const int ow = w - k + 1, oh = h - k + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int t = 0; t < k; ++t) acc += taps[t] * src[static_cast<std::size_t>(y) * w + x + t];
            tmp[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int t = 0; t < k; ++t) acc += taps[t] * tmp[static_cast<std::size_t>(y + t) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

} // namespace detail

/// Mean of the local SSIM map over every window position fully inside the image.
inline double ssim(const Image& y, const Image& yhat, const SsimConfig& cfg = {})
{
    cfg.validate();
    require_same_shape(y, yhat, "ssim");
    if (y.height < cfg.window || y.width < cfg.window) throw ShapeError("ssim: image smaller than the window");
    const int h = y.height, w = y.width;
    const std::size_t n = y.size();
    std::vector<double> a(n), b(n), aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = y.values[i];
        b[i] = yhat.values[i];
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const auto taps = gaussian_taps(cfg.window, cfg.sigma);
    const auto mu_a = detail::filter_valid(a, h, w, taps);
    const auto mu_b = detail::filter_valid(b, h, w, taps);
    const auto e_aa = detail::filter_valid(aa, h, w, taps);
    const auto e_bb = detail::filter_valid(bb, h, w, taps);
    const auto e_ab = detail::filter_valid(ab, h, w, taps);
    const double c1 = cfg.c1(), c2 = cfg.c2();
    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
        acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return acc / static_cast<double>(mu_a.size());
}

/// Exact rank-based histogram specification: the k-th smallest pixel of
/// `yhat` (ties broken by raster order) receives the k-th smallest value of
/// `reference`.
inline Image histogram_match(const Image& yhat, const Image& reference)
{
    if (yhat.size() != reference.size()) throw ShapeError("histogram_match: pixel counts differ");
    std::vector<std::size_t> order(yhat.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return yhat.values[i] < yhat.values[j]; });
    std::vector<float> sorted_ref = reference.values;
    std::sort(sorted_ref.begin(), sorted_ref.end());
    Image out(yhat.height, yhat.width, reference.domain);
    for (std::size_t k = 0; k < order.size(); ++k) out.values[order[k]] = sorted_ref[k];
    return out;
}

/// 256-bin intensity histogram of an 8-bit image (normalized images are
/// mapped onto [0,255] first).
inline std::array<std::size_t, 256> intensity_histogram(const Image& x)
{
    std::array<std::size_t, 256> hist{};
    const Image raw = x.domain == Domain::Raw0To255 ? x : denormalize(x);
    for (float v : raw.values) ++hist[static_cast<std::size_t>(std::clamp(round_half_up(v), 0.0f, 255.0f))];
    return hist;
}

/// Shannon entropy in bits of the 256-bin histogram.
inline double shannon_entropy(const Image& x)
{
    if (x.empty()) throw ShapeError("shannon_entropy: empty image");
    const auto hist = intensity_histogram(x);
    const double n = static_cast<double>(x.size());
    double h = 0.0;
    for (std::size_t c : hist) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log2(p);
    }
    return h == 0.0 ? 0.0 : h;
}

struct SharpnessStats {
    double laplacian_variance = 0.0;
    double rms_contrast = 0.0;
};

/// Variance of the 4-neighbour Laplacian over interior pixels, and the
/// population standard deviation of intensities.
inline SharpnessStats sharpness_stats(const Image& x)
{
    if (x.height < 3 || x.width < 3) throw ShapeError("sharpness_stats: image must be at least 3x3");
    std::vector<double> lap;
    lap.reserve(static_cast<std::size_t>(x.height - 2) * (x.width - 2));
    for (int y = 1; y < x.height - 1; ++y)
        for (int c = 1; c < x.width - 1; ++c)
            lap.push_back(static_cast<double>(x.at(y - 1, c)) + x.at(y + 1, c) + x.at(y, c - 1) + x.at(y, c + 1) -
                          4.0 * x.at(y, c));
    auto population_variance = [](const auto& v) {
        double m = 0.0;
        for (double e : v) m += e;
        m /= static_cast<double>(v.size());
        double s = 0.0;
        for (double e : v) s += (e - m) * (e - m);
        return s / static_cast<double>(v.size());
    };
    std::vector<double> vals(x.values.begin(), x.values.end());
    return {population_variance(lap), std::sqrt(population_variance(vals))};
}

/// Maps an image to a feature vector. External encoders plug in here.
using Embedder = std::function<std::vector<double>(const Image&)>;

/// Built-in embedder: bilinear downsample to 32x32, flattened.
inline std::vector<double> downsample_embedding(const Image& x)
{
    const Image small = resize_bilinear(x, 32, 32);
    return {small.values.begin(), small.values.end()};
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) throw ShapeError("cosine_similarity: embedding lengths differ");
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) throw DegenerateError("cosine_similarity: zero-norm embedding");
    return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

inline double cosine_similarity(const Image& a, const Image& b, const Embedder& embed = downsample_embedding)
{
    const auto ea = embed(a);
    const auto eb = embed(b);
    return cosine_similarity(std::span<const double>(ea), std::span<const double>(eb));
}

/// For each test image the best similarity to any reference, averaged.
inline double mean_max_similarity(std::span<const Image> tests, std::span<const Image> references,
                                  const Embedder& embed = downsample_embedding)
{
    if (tests.empty() || references.empty()) throw ShapeError("mean_max_similarity: empty image set");
    std::vector<std::vector<double>> refs;
    for (const auto& r : references) refs.push_back(embed(r));
    double total = 0.0;
    for (const auto& t : tests) {
        const auto e = embed(t);
        double best = -1.0;
        for (const auto& r : refs) best = std::max(best, cosine_similarity(std::span<const double>(e), std::span<const double>(r)));
        total += best;
    }
    return total / static_cast<double>(tests.size());
}

/// Per-image accuracy against ground truth. PSNR and SSIM are computed on
/// the prediction histogram-matched to its ground truth.
struct ImageScores {
    double pearson = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
};

inline ImageScores score_prediction(const Image& truth, const Image& prediction, const SsimConfig& ssim_cfg)
{
    require_same_shape(truth, prediction, "score_prediction");
    ImageScores s;
    s.pearson = pearson_or_nan(truth, prediction);
    const Image matched = histogram_match(prediction, truth);
    s.psnr = psnr(truth, matched, ssim_cfg.dynamic_range);
    s.ssim = ssim(truth, matched, ssim_cfg);
    return s;
}

} // namespace sitadda
