#pragma once

// Brute-force reference implementations used to cross-check the library.
// Deliberately naive: direct per-window sums, O(n^2) ranking, map counting.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include <sitadda/image.hpp>

namespace oracle {

using sitadda::Image;

inline double pearson(const Image& a, const Image& b)
{
    long double n = a.size(), sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const long double x = a.values[i], y = b.values[i];
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    const long double num = n * sxy - sx * sy;
    const long double den = std::sqrt(n * sxx - sx * sx) * std::sqrt(n * syy - sy * sy);
    return static_cast<double>(num / den);
}

inline double psnr(const Image& a, const Image& b, double L)
{
    long double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const long double d = static_cast<long double>(a.values[i]) - b.values[i];
        acc += d * d;
    }
    const long double mse = acc / a.size();
    if (mse == 0) return INFINITY;
    return static_cast<double>(10.0L * std::log10(static_cast<long double>(L) * L / mse));
}

/// SSIM by direct evaluation of every 11x11 window with a 2-D Gaussian.
inline double ssim(const Image& a, const Image& b, int win = 11, double sigma = 1.5, double L = 255.0)
{
    std::vector<double> w2(static_cast<std::size_t>(win * win));
    const int half = win / 2;
    double total = 0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            const double r2 = (i - half) * (i - half) + (j - half) * (j - half);
            w2[i * win + j] = std::exp(-r2 / (2 * sigma * sigma));
            total += w2[i * win + j];
        }
    for (double& v : w2) v /= total;
    const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
    double acc = 0;
    int count = 0;
    for (int y = 0; y + win <= a.height; ++y)
        for (int x = 0; x + win <= a.width; ++x) {
            double ma = 0, mb = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    ma += w2[i * win + j] * a.at(y + i, x + j);
                    mb += w2[i * win + j] * b.at(y + i, x + j);
                }
            double va = 0, vb = 0, cov = 0;
            for (int i = 0; i < win; ++i)
                for (int j = 0; j < win; ++j) {
                    const double da = a.at(y + i, x + j) - ma, db = b.at(y + i, x + j) - mb;
                    va += w2[i * win + j] * da * da;
                    vb += w2[i * win + j] * db * db;
                    cov += w2[i * win + j] * da * db;
                }
            acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return acc / count;
}

/// Rank of each pixel by counting, then the same-rank reference value.
inline Image histogram_match(const Image& src, const Image& ref)
{
    std::vector<float> sorted_ref = ref.values;
    std::sort(sorted_ref.begin(), sorted_ref.end());
    Image out(src.height, src.width, ref.domain);
    for (std::size_t i = 0; i < src.size(); ++i) {
        std::size_t rank = 0;
        for (std::size_t j = 0; j < src.size(); ++j)
            if (src.values[j] < src.values[i] || (src.values[j] == src.values[i] && j < i)) ++rank;
        out.values[i] = sorted_ref[rank];
    }
    return out;
}

inline double entropy(const Image& x)
{
    std::map<int, int> counts;
    for (float v : x.values) ++counts[static_cast<int>(std::lround(v))];
    double h = 0;
    for (const auto& [value, c] : counts) {
        const double p = static_cast<double>(c) / x.size();
        h += -p * std::log(p) / std::log(2.0);
    }
    return std::abs(h);
}

/// (Laplacian variance via explicit 3x3 kernel, RMS contrast), both by Welford.
inline std::pair<double, double> sharpness(const Image& x)
{
    static const int k[3][3] = {{0, 1, 0}, {1, -4, 1}, {0, 1, 0}};
    auto welford = [](const std::vector<double>& v) {
        double mean = 0, m2 = 0;
        std::size_t n = 0;
        for (double e : v) {
            ++n;
            const double d = e - mean;
            mean += d / n;
            m2 += d * (e - mean);
        }
        return m2 / n;
    };
    std::vector<double> resp, vals;
    for (int y = 1; y + 1 < x.height; ++y)
        for (int c = 1; c + 1 < x.width; ++c) {
            double r = 0;
            for (int i = -1; i <= 1; ++i)
                for (int j = -1; j <= 1; ++j) r += k[i + 1][j + 1] * x.at(y + i, c + j);
            resp.push_back(r);
        }
    for (float v : x.values) vals.push_back(v);
    return {welford(resp), std::sqrt(welford(vals))};
}

/// Random raw image pair with a controllable relationship: b = a + noise, clipped and rounded.
inline std::pair<Image, Image> random_pair(std::mt19937_64& rng, int h, int w)
{
    std::uniform_int_distribution<int> px(0, 255), noise(-40, 40);
    Image a(h, w, sitadda::Domain::Raw0To255), b(h, w, sitadda::Domain::Raw0To255);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a.values[i] = static_cast<float>(px(rng));
        b.values[i] = static_cast<float>(std::clamp(static_cast<int>(a.values[i]) + noise(rng), 0, 255));
    }
    return {a, b};
}

} // namespace oracle
