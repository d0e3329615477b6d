#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "errors.hpp"
#include "image.hpp"
#include "rng.hpp"

namespace sitadda {

enum class Split { Train, Val, Test, All };
enum class DomainTag { Source, Target };

inline const char* to_string(Split s)
{
    switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::All: return "all";
    }
    return "?";
}

inline const char* to_string(DomainTag t) { return t == DomainTag::Source ? "source" : "target"; }

struct Sample {
    std::string id;
    Image input;
    std::optional<Image> target;
};

struct Dataset {
    std::vector<Sample> samples;
    Split split = Split::All;
    DomainTag tag = DomainTag::Source;

    [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
    [[nodiscard]] bool empty() const noexcept { return samples.empty(); }

    /// Ids unique; every source sample carries a target of the input's shape.
    void validate() const
    {
        std::set<std::string> ids;
        for (const auto& s : samples) {
            if (!ids.insert(s.id).second) throw DataError("duplicate sample id '" + s.id + "'");
            if (tag == DomainTag::Source && !s.target) throw DataError("source sample '" + s.id + "' has no target");
            if (s.target) require_same_shape(s.input, *s.target, ("sample " + s.id).c_str());
        }
    }

    [[nodiscard]] std::vector<Image> inputs() const
    {
        std::vector<Image> out;
        out.reserve(samples.size());
        for (const auto& s : samples) out.push_back(s.input);
        return out;
    }
};

/// Maps every raw image of a dataset into [-1, 1].
inline Dataset normalized(const Dataset& raw)
{
    Dataset out = raw;
    for (auto& s : out.samples) {
        if (s.input.domain == Domain::Raw0To255) s.input = normalize(s.input);
        if (s.target && s.target->domain == Domain::Raw0To255) s.target = normalize(*s.target);
    }
    return out;
}

struct SplitRatios {
    double train = 7.0;
    double val = 1.5;
    double test = 1.5;
};

struct SplitSizes {
    std::size_t train = 0, val = 0, test = 0;
};

/// Floor allocation: train = floor(n * r_train), val = floor(n * r_val), test
/// takes the rest (100 -> 70/15/15, 10 -> 7/1/2). Every split keeps at least
/// one sample; shortfalls are taken from train.
inline SplitSizes split_sizes(std::size_t n, const SplitRatios& r = {})
{
    if (n < 3) throw DataError("split_dataset needs at least 3 samples, got " + std::to_string(n));
    const double total = r.train + r.val + r.test;
    if (!(r.train > 0 && r.val > 0 && r.test > 0)) throw ConfigError("split ratios must be positive");
    auto portion = [&](double ratio) {
        return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio / total + 1e-9));
    };
    SplitSizes s;
    s.train = portion(r.train);
    s.val = std::max<std::size_t>(portion(r.val), 1);
    if (s.train + s.val >= n) s.train = n - s.val - 1;
    s.test = n - s.train - s.val;
    if (s.train == 0) {
        s.train = 1;
        --s.test;
    }
    return s;
}

struct DatasetSplits {
    Dataset train, val, test;
};

/// Seeded shuffle followed by the floor allocation above.
inline DatasetSplits split_dataset(const Dataset& all, std::uint64_t seed, const SplitRatios& ratios = {})
{
    const SplitSizes sz = split_sizes(all.size(), ratios);
    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(seed);
    shuffle(order.begin(), order.end(), rng);
    DatasetSplits out;
    out.train.split = Split::Train;
    out.val.split = Split::Val;
    out.test.split = Split::Test;
    out.train.tag = out.val.tag = out.test.tag = all.tag;
    for (std::size_t i = 0; i < order.size(); ++i) {
        Dataset& dst = i < sz.train ? out.train : (i < sz.train + sz.val ? out.val : out.test);
        dst.samples.push_back(all.samples[order[i]]);
    }
    return out;
}

} // namespace sitadda
