#pragma once

// Procedural stand-in for paired label-free / fluorescence microscopy:
// Gaussian "cells" that appear as faint bumps over a grey background with
// sensor noise in the input, and as bright clean spots on a dark background
// in the target.

#include <cstdint>
#include <utility>

#include "errors.hpp"
#include "image.hpp"
#include "rng.hpp"

namespace sitadda {

struct SyntheticSceneSpec {
    int height = 128;
    int width = 128;
    int num_blobs = 12;
    double radius_min = 3.0; // Gaussian sigma, pixels
    double radius_max = 7.0;
    double intensity_min = 110.0; // target peak intensity
    double intensity_max = 240.0;
    double input_contrast = 0.25; // input bump = contrast * target peak
    double background = 100.0;    // input background level
    double target_background = 0.0;
    double noise_std = 6.0;
    std::uint64_t seed = 0;

    void validate() const
    {
        auto in_u8 = [](double v) { return v >= 0.0 && v <= 255.0; };
        if (height < 1 || width < 1) throw ConfigError("scene size must be positive");
        if (num_blobs < 0) throw ConfigError("num_blobs must be >= 0");
        if (!(radius_min > 0.0 && radius_min <= radius_max && radius_max <= 255.0))
            throw ConfigError("blob radius range must be nonempty and within (0, 255]");
        if (!(in_u8(intensity_min) && in_u8(intensity_max) && intensity_min <= intensity_max))
            throw ConfigError("intensity range must be nonempty and within [0, 255]");
        if (!(in_u8(background) && in_u8(target_background))) throw ConfigError("background levels must lie in [0, 255]");
        if (!(noise_std >= 0.0 && noise_std <= 255.0)) throw ConfigError("noise std must lie in [0, 255]");
        if (!(input_contrast >= 0.0 && input_contrast <= 1.0)) throw ConfigError("input contrast must lie in [0, 1]");
    }
};

struct SyntheticPair {
    Image input;  // raw [0,255]
    Image target; // raw [0,255]
};

inline SyntheticPair generate_synthetic_pair(const SyntheticSceneSpec& spec)
{
    spec.validate();
    Rng rng = make_rng(spec.seed);
    const int h = spec.height, w = spec.width;
    std::vector<double> bump(static_cast<std::size_t>(h) * w, 0.0);
    std::vector<double> spot(static_cast<std::size_t>(h) * w, 0.0);

    for (int b = 0; b < spec.num_blobs; ++b) {
        const double cy = uniform(rng, 0.0, h);
        const double cx = uniform(rng, 0.0, w);
        const double sigma = uniform(rng, spec.radius_min, spec.radius_max);
        const double peak = uniform(rng, spec.intensity_min, spec.intensity_max);
        const int reach = static_cast<int>(std::ceil(3.5 * sigma));
        const int y0 = std::max(0, static_cast<int>(cy) - reach), y1 = std::min(h - 1, static_cast<int>(cy) + reach);
        const int x0 = std::max(0, static_cast<int>(cx) - reach), x1 = std::min(w - 1, static_cast<int>(cx) + reach);
        // The fluorescence spot is tighter than the transmitted-light footprint.
        const double in_den = 2.0 * sigma * sigma;
        const double tg_den = 2.0 * 0.7 * sigma * 0.7 * sigma;
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double r2 = (y + 0.5 - cy) * (y + 0.5 - cy) + (x + 0.5 - cx) * (x + 0.5 - cx);
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                bump[i] += spec.input_contrast * peak * std::exp(-r2 / in_den);
                spot[i] = std::max(spot[i], peak * std::exp(-r2 / tg_den));
            }
    }

    SyntheticPair pair{Image(h, w, Domain::Raw0To255), Image(h, w, Domain::Raw0To255)};
    for (std::size_t i = 0; i < bump.size(); ++i) {
        double v = spec.background + bump[i];
        if (spec.noise_std > 0.0) v += normal(rng, 0.0, spec.noise_std);
        pair.input.values[i] = std::clamp(round_half_up(v), 0.0f, 255.0f);
        pair.target.values[i] = std::clamp(round_half_up(spec.target_background + spot[i]), 0.0f, 255.0f);
    }
    return pair;
}

} // namespace sitadda
