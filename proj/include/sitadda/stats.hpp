#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "errors.hpp"

namespace sitadda {

/// 1-based ranks with ties sharing their average rank.
inline std::vector<double> average_ranks(std::span<const double> v)
{
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

/// Spearman rank correlation (Pearson on average ranks).
inline double spearman(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) throw ShapeError("spearman: need two equal-length series of length >= 2");
    const auto rx = average_ranks(x), ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) throw DegenerateError("spearman: constant series");
    return sxy / std::sqrt(sxx * syy);
}

struct PairedTestResult {
    double statistic = 0.0; // signed-rank sum  sum_i sign(a_i - b_i) * rank|a_i - b_i|
    double p_value = 1.0;   // two-sided
    double adjusted_p = 1.0;
    std::size_t n_used = 0; // pairs with a nonzero difference
    bool exact = false;
};

inline constexpr std::size_t kExactSignedRankLimit = 25;

/// Two-sided Wilcoxon signed-rank test. Zero differences are dropped; ties
/// get average ranks. Exact null distribution (all 2^n sign patterns) for
/// n <= 25, normal approximation beyond.
inline PairedTestResult paired_test(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) throw ShapeError("paired_test: samples must have equal length");
    if (a.size() < 5) throw ConfigError("paired_test: need at least 5 pairs");
    std::vector<double> diff;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) diff.push_back(a[i] - b[i]);
    if (diff.empty()) throw DegenerateError("paired_test: all paired differences are zero");

    std::vector<double> mags(diff.size());
    std::transform(diff.begin(), diff.end(), mags.begin(), [](double d) { return std::abs(d); });
    const auto ranks = average_ranks(mags);

    PairedTestResult r;
    r.n_used = diff.size();
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < diff.size(); ++i) {
        r.statistic += diff[i] > 0 ? ranks[i] : -ranks[i];
        sum_sq += ranks[i] * ranks[i];
    }

    if (diff.size() <= kExactSignedRankLimit) {
        r.exact = true;
        // Doubled ranks are integers even with ties; count sign patterns by
        // the sum of doubled ranks carrying a '+' sign.
        std::vector<long> dr(ranks.size());
        long total = 0;
        for (std::size_t i = 0; i < ranks.size(); ++i) {
            dr[i] = std::lround(2.0 * ranks[i]);
            total += dr[i];
        }
        std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
        count[0] = 1.0;
        for (long w : dr)
            for (long s = total; s >= w; --s) count[s] += count[s - w];
        // statistic * 2 = 2U - total, U = positive doubled-rank sum.
        const long observed = std::lround(std::abs(2.0 * r.statistic));
        double extreme = 0.0;
        for (long u = 0; u <= total; ++u)
            if (std::labs(2 * u - total) >= observed) extreme += count[u];
        r.p_value = std::min(1.0, extreme / std::ldexp(1.0, static_cast<int>(dr.size())));
    } else {
        const double z = std::abs(r.statistic) / std::sqrt(sum_sq);
        r.p_value = std::erfc(z / std::sqrt(2.0));
    }
    r.adjusted_p = r.p_value;
    return r;
}

/// Holm step-down adjustment; results are returned in input order.
inline std::vector<double> holm_adjust(std::span<const double> p)
{
    const std::size_t m = p.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return p[i] < p[j]; });
    std::vector<double> adj(m);
    double running = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double v = std::min(1.0, static_cast<double>(m - k) * p[order[k]]);
        running = std::max(running, v);
        adj[order[k]] = running;
    }
    return adj;
}

/// Runs one paired test per (a, b) comparison of a declared family and
/// fills in the Holm-adjusted p-values.
inline std::vector<PairedTestResult>
paired_test_family(std::span<const std::pair<std::vector<double>, std::vector<double>>> family)
{
    std::vector<PairedTestResult> out;
    std::vector<double> raw;
    for (const auto& [a, b] : family) {
        out.push_back(paired_test(a, b));
        raw.push_back(out.back().p_value);
    }
    const auto adj = holm_adjust(raw);
    for (std::size_t i = 0; i < out.size(); ++i) out[i].adjusted_p = adj[i];
    return out;
}

} // namespace sitadda
