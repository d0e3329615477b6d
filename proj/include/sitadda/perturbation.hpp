#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "errors.hpp"
#include "image.hpp"

namespace sitadda {

enum class PerturbationKind { Scale, Overexpose, Gradient };

inline const char* to_string(PerturbationKind k)
{
    switch (k) {
    case PerturbationKind::Scale: return "scale";
    case PerturbationKind::Overexpose: return "overexpose";
    case PerturbationKind::Gradient: return "gradient";
    }
    return "?";
}

inline PerturbationKind perturbation_kind_from_string(const std::string& s)
{
    if (s == "scale" || s == "zoom") return PerturbationKind::Scale;
    if (s == "overexpose" || s == "overexposure" || s == "brightness") return PerturbationKind::Overexpose;
    if (s == "gradient" || s == "illumination") return PerturbationKind::Gradient;
    throw ConfigError("unknown perturbation kind '" + s + "' (expected scale|overexpose|gradient)");
}

/// Preset magnitudes used for the canonical shift families.
inline constexpr double kZoomPresets[] = {1.2, 1.4, 1.6};
inline constexpr double kBrightnessPresets[] = {1.2, 1.5, 1.7};
inline constexpr double kGradientPresets[] = {40.0, 80.0, 120.0};

namespace detail {

inline void require_raw(const Image& x, const char* op)
{
    if (x.domain != Domain::Raw0To255) throw ConfigError(std::string(op) + " expects a raw [0,255] image");
}

inline float clip_u8(double v) { return std::clamp(round_half_up(v), 0.0f, 255.0f); }

} // namespace detail

/// Brightness enhancement: clip(round(x * factor), 0, 255).
inline Image overexpose(const Image& x, double factor)
{
    detail::require_raw(x, "overexpose");
    if (!(factor > 0.0)) throw ConfigError("overexposure factor must be > 0");
    Image out = x;
    for (float& v : out.values) v = detail::clip_u8(static_cast<double>(v) * factor);
    return out;
}

/// Left-to-right additive ramp: column c gains round(max_add * c / (W-1)),
/// so the leftmost column is untouched and the rightmost gains max_add.
inline Image illumination_gradient(const Image& x, double max_add)
{
    detail::require_raw(x, "illumination_gradient");
    if (!(max_add >= 0.0 && max_add <= 255.0)) throw ConfigError("gradient maximum must lie in [0, 255]");
    Image out = x;
    const int w = x.width;
    for (int c = 0; c < w; ++c) {
        const double add = w > 1 ? std::floor(max_add * c / (w - 1) + 0.5) : 0.0;
        for (int y = 0; y < x.height; ++y) out.at(y, c) = detail::clip_u8(x.at(y, c) + add);
    }
    return out;
}

struct CropWindow {
    int top = 0;
    int left = 0;
    int height = 0;
    int width = 0;
};

/// Centered digital-zoom crop: side round(side / zoom), offset floor((side - crop) / 2).
inline CropWindow zoom_crop_window(int height, int width, double zoom)
{
    if (!(zoom > 1.0)) throw ConfigError("zoom factor must be > 1");
    CropWindow w;
    w.height = static_cast<int>(std::floor(height / zoom + 0.5));
    w.width = static_cast<int>(std::floor(width / zoom + 0.5));
    if (w.height < 2 || w.width < 2) throw ConfigError("zoom factor leaves a degenerate crop (< 2 pixels)");
    w.top = (height - w.height) / 2;
    w.left = (width - w.width) / 2;
    return w;
}

/// Digital zoom: centered crop then bilinear resize back to the original size.
/// Raw images are rounded and clipped back onto the 8-bit grid.
inline Image scale_zoom(const Image& x, double zoom)
{
    const CropWindow w = zoom_crop_window(x.height, x.width, zoom);
    Image out = resize_bilinear(crop(x, w.top, w.left, w.height, w.width), x.height, x.width);
    if (out.domain == Domain::Raw0To255)
        for (float& v : out.values) v = detail::clip_u8(v);
    return out;
}

struct PerturbationSpec {
    PerturbationKind kind = PerturbationKind::Overexpose;
    double magnitude = 1.0;

    void validate() const
    {
        switch (kind) {
        case PerturbationKind::Scale:
            if (!(magnitude > 1.0)) throw ConfigError("scale magnitude must be > 1");
            break;
        case PerturbationKind::Overexpose:
            if (!(magnitude > 0.0)) throw ConfigError("overexposure magnitude must be > 0");
            break;
        case PerturbationKind::Gradient:
            if (!(magnitude >= 0.0 && magnitude <= 255.0)) throw ConfigError("gradient magnitude must lie in [0, 255]");
            break;
        }
    }

    /// True when the perturbation moves pixels, so paired targets must follow.
    [[nodiscard]] bool geometric() const noexcept { return kind == PerturbationKind::Scale; }

    bool operator==(const PerturbationSpec&) const = default;
};

inline std::string to_string(const PerturbationSpec& p)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s:%g", to_string(p.kind), p.magnitude);
    return buf;
}

inline Image apply(const PerturbationSpec& p, const Image& x)
{
    p.validate();
    switch (p.kind) {
    case PerturbationKind::Scale: return scale_zoom(x, p.magnitude);
    case PerturbationKind::Overexpose: return overexpose(x, p.magnitude);
    case PerturbationKind::Gradient: return illumination_gradient(x, p.magnitude);
    }
    return x;
}

} // namespace sitadda
