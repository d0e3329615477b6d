#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "adaptation.hpp"
#include "errors.hpp"
#include "image.hpp"
#include "model.hpp"

namespace sitadda {

struct EnsembleConfig {
    int k = 5;
    std::vector<std::uint64_t> seeds;
    double min_val_pearson = 0.1;

    void validate() const
    {
        if (k < 2) throw ConfigError("ensemble needs K >= 2");
        if (!seeds.empty()) {
            if (seeds.size() != static_cast<std::size_t>(k)) throw ConfigError("ensemble needs exactly K member seeds");
            if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
                throw ConfigError("ensemble member seeds must be distinct");
        }
    }

    /// Explicit seeds, or K seeds derived from `root`.
    [[nodiscard]] std::vector<std::uint64_t> member_seeds(std::uint64_t root) const
    {
        if (!seeds.empty()) return seeds;
        std::vector<std::uint64_t> out;
        for (int i = 0; i < k; ++i) out.push_back(substream_seed(root, "member", static_cast<std::uint64_t>(i)));
        return out;
    }
};

struct EnsembleStats {
    Image mean;
    Image std; // sample standard deviation, K-1 denominator
    double mean_std = 0.0;
};

/// Per-pixel sample mean and standard deviation over member predictions.
/// Spread is accumulated on differences from the first member, so members
/// that agree exactly at a pixel give exactly zero there.
inline EnsembleStats ensemble_predict(std::span<const GeneratorModel> models, const Image& x)
{
    if (models.size() < 2) throw ConfigError("ensemble_predict: need at least 2 models");
    for (const auto& m : models)
        if (!m.same_architecture(models[0])) throw ShapeError("ensemble_predict: architecture mismatch");

    std::vector<Image> preds;
    preds.reserve(models.size());
    for (const auto& m : models) preds.push_back(generator_forward(m, x));

    const double k = static_cast<double>(models.size());
    const std::size_t n = preds[0].values.size();
    EnsembleStats s{preds[0], preds[0], 0.0};
    double std_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double base = preds[0].values[i];
        double dsum = 0.0;
        for (const auto& p : preds) dsum += static_cast<double>(p.values[i]) - base;
        const double dmean = dsum / k;
        double ss = 0.0;
        for (const auto& p : preds) {
            const double d = static_cast<double>(p.values[i]) - base - dmean;
            ss += d * d;
        }
        const double sd = std::sqrt(ss / (k - 1.0));
        s.mean.values[i] = static_cast<float>(base + dmean);
        s.std.values[i] = static_cast<float>(sd);
        std_sum += sd;
    }
    s.mean_std = std_sum / static_cast<double>(n);
    return s;
}

/// Mean over images of the pixel-averaged ensemble standard deviation.
inline double uncertainty_score(std::span<const GeneratorModel> models, std::span<const Image> images)
{
    if (images.empty()) throw ConfigError("uncertainty_score: dataset is empty");
    double sum = 0.0;
    for (const auto& x : images) sum += ensemble_predict(models, x).mean_std;
    return sum / static_cast<double>(images.size());
}

// ---------------------------------------------------------------------------
// Selection
// ---------------------------------------------------------------------------

struct RankingRow {
    std::string candidate;
    FreezeSchedule schedule;
    double disc_lr = 0.0;
    double score = std::numeric_limits<double>::quiet_NaN();
    std::string status = "ok";
    std::size_t trainable_params = 0;
    std::size_t surviving_members = 0;
};

inline std::string candidate_label(const FreezeSchedule& s, double lr)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", lr);
    return to_string(s) + "@" + buf;
}

/// Surviving rows first, ordered by score, then trainable parameters, then
/// lr; excluded rows follow in their original order.
inline std::vector<RankingRow> rank_candidates(std::vector<RankingRow> rows)
{
    std::stable_sort(rows.begin(), rows.end(), [](const RankingRow& a, const RankingRow& b) {
        const bool ao = a.status == "ok", bo = b.status == "ok";
        if (ao != bo) return ao;
        if (!ao) return false;
        if (a.score != b.score) return a.score < b.score;
        if (a.trainable_params != b.trainable_params) return a.trainable_params < b.trainable_params;
        return a.disc_lr < b.disc_lr;
    });
    return rows;
}

inline const RankingRow& select_candidate(const std::vector<RankingRow>& ranked)
{
    if (ranked.empty() || ranked.front().status != "ok") throw SelectionError("all candidates were excluded");
    return ranked.front();
}

struct Selection {
    RankingRow chosen;
    std::vector<RankingRow> ranking;
    std::vector<SweepCell> cells;
    std::vector<std::size_t> members_used; // indices of source models that passed the exclusion rule
};

struct AutoSelectOptions {
    int jobs = 1;
    /// Extra per-cell hook (e.g. labelled test metrics); runs after scoring,
    /// while member models are still present.
    std::function<void(SweepCell&, RankingRow&)> evaluate;
};

/// Adapts every surviving source model under each candidate and picks the
/// candidate with the lowest ensemble uncertainty on the unlabeled target set.
/// A source model is dropped if its validation Pearson is undefined or below
/// the threshold; a candidate is excluded when fewer than two members
/// finished without diverging.
inline Selection auto_select(std::span<const GeneratorModel> source_models, std::span<const double> source_val_pearson,
                             const EnsembleConfig& ensemble, std::span<const std::uint64_t> member_seeds,
                             std::span<const Image> source_inputs, std::span<const Image> target_inputs,
                             std::span<const FreezeSchedule> schedules, std::span<const double> lrs,
                             const AdaptConfig& base, const AutoSelectOptions& options = {})
{
    if (source_models.size() != source_val_pearson.size() || source_models.size() != member_seeds.size())
        throw ConfigError("auto_select: need one validation score and one seed per source model");
    if (target_inputs.empty()) throw ConfigError("auto_select: target set is empty");

    Selection sel;
    std::vector<GeneratorModel> members;
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < source_models.size(); ++i)
        if (!std::isnan(source_val_pearson[i]) && source_val_pearson[i] >= ensemble.min_val_pearson) {
            sel.members_used.push_back(i);
            members.push_back(source_models[i]);
            seeds.push_back(member_seeds[i]);
        }
    if (members.size() < 2) throw SelectionError("fewer than two source models passed the exclusion rule");

    SweepOptions so;
    so.jobs = options.jobs;
    so.evaluate = [&](SweepCell& cell) {
        RankingRow row;
        row.schedule = cell.schedule;
        row.disc_lr = cell.disc_lr;
        row.candidate = candidate_label(cell.schedule, cell.disc_lr);
        row.trainable_params = cell.trainable_params;
        std::vector<GeneratorModel> ok;
        for (auto& m : cell.members)
            if (m.model) ok.push_back(*m.model);
        row.surviving_members = ok.size();
        if (cell.excluded) {
            row.status = "excluded";
        } else {
            row.score = uncertainty_score(ok, target_inputs);
        }
        if (options.evaluate) options.evaluate(cell, row);
        sel.ranking.push_back(std::move(row));
    };
    sel.cells = sweep(members, seeds, source_inputs, target_inputs, lrs, schedules, base, so, 2);
    sel.ranking = rank_candidates(std::move(sel.ranking));
    sel.chosen = select_candidate(sel.ranking);
    return sel;
}

} // namespace sitadda
