#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace sitadda {

/// Value domain of an image: raw 8-bit intensities or the [-1, 1] range
/// the translator consumes and produces.
enum class Domain { Raw0To255, NormNeg1To1 };

inline const char* to_string(Domain d)
{
    return d == Domain::Raw0To255 ? "raw_0_255" : "norm_neg1_1";
}

inline constexpr float domain_min(Domain d) { return d == Domain::Raw0To255 ? 0.0f : -1.0f; }
inline constexpr float domain_max(Domain d) { return d == Domain::Raw0To255 ? 255.0f : 1.0f; }

/// Round half up, the single rounding convention used for intensities.
inline float round_half_up(double v) { return static_cast<float>(std::floor(v + 0.5)); }

/// Single-channel raster, row-major.
struct Image {
    int height = 0;
    int width = 0;
    Domain domain = Domain::Raw0To255;
    std::vector<float> values;

    Image() = default;
    Image(int h, int w, Domain d, float fill = 0.0f)
        : height(h), width(w), domain(d), values(checked_size(h, w), fill)
    {
    }
    Image(int h, int w, Domain d, std::vector<float> v) : height(h), width(w), domain(d), values(std::move(v))
    {
        if (values.size() != checked_size(h, w))
            throw ShapeError("image buffer holds " + std::to_string(values.size()) + " values, expected " +
                             std::to_string(checked_size(h, w)));
    }

    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
    [[nodiscard]] bool empty() const noexcept { return values.empty(); }

    float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    [[nodiscard]] float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }

    [[nodiscard]] std::span<const float> view() const noexcept { return values; }

    /// True when every value lies within the declared domain bounds.
    [[nodiscard]] bool in_domain() const noexcept
    {
        const float lo = domain_min(domain), hi = domain_max(domain);
        return std::all_of(values.begin(), values.end(), [&](float v) { return v >= lo && v <= hi; });
    }

    bool operator==(const Image&) const = default;

private:
    static std::size_t checked_size(int h, int w)
    {
        if (h <= 0 || w <= 0)
            throw ShapeError("image dimensions must be positive, got " + std::to_string(h) + "x" + std::to_string(w));
        return static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    }
};

inline void require_same_shape(const Image& a, const Image& b, const char* what)
{
    if (a.height != b.height || a.width != b.width)
        throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.height) + "x" +
                         std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width));
}

/// v -> v / 127.5 - 1.
inline Image normalize(const Image& raw)
{
    if (raw.domain != Domain::Raw0To255) throw ConfigError("normalize expects a raw [0,255] image");
    Image out(raw.height, raw.width, Domain::NormNeg1To1);
    std::transform(raw.values.begin(), raw.values.end(), out.values.begin(),
                   [](float v) { return static_cast<float>(static_cast<double>(v) / 127.5 - 1.0); });
    return out;
}

/// Inverse of normalize: rescale, round half up, clip to [0, 255].
inline Image denormalize(const Image& norm)
{
    if (norm.domain != Domain::NormNeg1To1) throw ConfigError("denormalize expects a normalized [-1,1] image");
    Image out(norm.height, norm.width, Domain::Raw0To255);
    std::transform(norm.values.begin(), norm.values.end(), out.values.begin(), [](float v) {
        return std::clamp(round_half_up((static_cast<double>(v) + 1.0) * 127.5), 0.0f, 255.0f);
    });
    return out;
}

/// Bilinear resampling with half-pixel centres; a same-size resize is the identity.
inline Image resize_bilinear(const Image& in, int out_h, int out_w)
{
    Image out(out_h, out_w, in.domain);
    if (out_h == in.height && out_w == in.width) {
        out.values = in.values;
        return out;
    }
    const double sy = static_cast<double>(in.height) / out_h;
    const double sx = static_cast<double>(in.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, in.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, in.width - 1);
            const double wx = fx - x0;
            const double top = in.at(y0, x0) * (1.0 - wx) + in.at(y0, x1) * wx;
            const double bottom = in.at(y1, x0) * (1.0 - wx) + in.at(y1, x1) * wx;
            out.at(y, x) = static_cast<float>(top * (1.0 - wy) + bottom * wy);
        }
    }
    return out;
}

inline Image crop(const Image& in, int top, int left, int h, int w)
{
    if (top < 0 || left < 0 || top + h > in.height || left + w > in.width)
        throw ShapeError("crop window outside image");
    Image out(h, w, in.domain);
    for (int y = 0; y < h; ++y)
        std::copy_n(in.values.begin() + static_cast<std::ptrdiff_t>(top + y) * in.width + left, w,
                    out.values.begin() + static_cast<std::ptrdiff_t>(y) * w);
    return out;
}

inline Image flip_horizontal(const Image& in)
{
    Image out = in;
    for (int y = 0; y < in.height; ++y) {
        auto row = out.values.begin() + static_cast<std::ptrdiff_t>(y) * in.width;
        std::reverse(row, row + in.width);
    }
    return out;
}

} // namespace sitadda
