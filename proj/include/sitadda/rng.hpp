#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace sitadda {

using Rng = std::mt19937_64;

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) noexcept
{
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

} // namespace detail

/// Derives an independent seed for a named substream of a root seed.
/// Every random consumer ("synth", "split", "source-train", "adapt", ...)
/// draws from its own substream so that adding a consumer never perturbs
/// the others.
inline constexpr std::uint64_t substream_seed(std::uint64_t root, std::string_view name,
                                              std::uint64_t index = 0) noexcept
{
    return detail::splitmix64(detail::splitmix64(root ^ detail::fnv1a(name)) + index);
}

inline Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

/// Uniform integer in [0, n) without the implementation-defined behaviour
/// of std::uniform_int_distribution, so shuffles are stable across stdlibs.
inline std::size_t uniform_index(Rng& rng, std::size_t n)
{
    // Lemire-style rejection keeps the draw unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return static_cast<std::size_t>(r % n);
}

/// Uniform real in [0, 1) built from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Standard normal via Box-Muller; one draw per call.
inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0)
{
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    constexpr double two_pi = 6.283185307179586476925286766559;
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

template <class RandomIt>
void shuffle(RandomIt first, RandomIt last, Rng& rng)
{
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = uniform_index(rng, i);
        std::swap(first[i - 1], first[j]);
    }
}

} // namespace sitadda
