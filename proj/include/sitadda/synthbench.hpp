#pragma once

// End-to-end synthetic benchmark: generate paired blob scenes, train K source
// models, shift the test and target domains, adapt every candidate
// (schedule, critic lr) per member, evaluate against ground truth, and pick a
// candidate by ensemble uncertainty alone.

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "adaptation.hpp"
#include "dataset.hpp"
#include "metrics.hpp"
#include "perturbation.hpp"
#include "report.hpp"
#include "stats.hpp"
#include "synthetic.hpp"
#include "uncertainty.hpp"

namespace sitadda {

struct SynthBenchConfig {
    std::uint64_t seed = 0;
    int num_pairs = 300;
    int num_target = 0; // unlabeled target scenes; 0 = same as the train split
    SyntheticSceneSpec scene{};
    GeneratorConfig generator{.depth = 5, .base_channels = 8};
    SourceTrainConfig source{.epochs = 40, .batch_size = 8, .adam = {2e-4, 0.9, 0.999, 1e-8}, .decay = {20, 0.0}};
    EnsembleConfig ensemble{.k = 3};
    PerturbationSpec shift{PerturbationKind::Overexpose, 1.7};
    AdaptConfig adapt = default_adapt();
    std::vector<FreezeSchedule> schedules{FreezeSchedule::prefix(1), FreezeSchedule::prefix(2),
                                          FreezeSchedule::prefix(3), FreezeSchedule::prefix(10)};
    std::vector<double> lrs{1e-3, 1e-4, 1e-5};
    int jobs = 1;

    static AdaptConfig default_adapt()
    {
        AdaptConfig a;
        a.gen_lr = 1e-3;
        a.steps = 300;
        a.batch_size = 4;
        a.discriminator.num_layers = 3;
        a.discriminator.base_channels = 8;
        return a;
    }

    void validate() const
    {
        if (num_pairs < 3) throw ConfigError("synthbench needs at least 3 pairs");
        if (num_target < 0) throw ConfigError("num_target must be >= 0");
        scene.validate();
        source.validate();
        ensemble.validate();
        shift.validate();
        adapt.validate();
        if (schedules.empty() || lrs.empty()) throw ConfigError("synthbench needs nonempty candidate grids");
        // Fail before any training if a schedule or the scene size does not fit the model.
        const GeneratorModel probe(generator);
        probe.check_input(scene.height, scene.width);
        for (const auto& sch : schedules) (void)resolve_freeze(sch, probe.registry());
        if (jobs < 1) throw ConfigError("jobs must be >= 1");
    }
};

struct CandidateResult {
    RankingRow row;
    double test_pearson = std::numeric_limits<double>::quiet_NaN();
    double test_psnr = std::numeric_limits<double>::quiet_NaN();
    double test_ssim = std::numeric_limits<double>::quiet_NaN();
    std::vector<MemberOutcome> members; // models dropped
};

struct SynthBenchResult {
    std::vector<double> source_val_pearson;
    double clean_test_pearson = 0.0;
    double shifted_test_pearson = 0.0; // no-adaptation baseline on the shifted domain
    double degradation = 0.0;
    std::vector<CandidateResult> candidates; // grid order (lr-major)
    std::vector<RankingRow> ranking;
    std::string chosen;
    double chosen_test_pearson = std::numeric_limits<double>::quiet_NaN();
    std::string best_shallow; // best candidate with a trainable prefix of 1..3 blocks, by test Pearson
    double best_shallow_test_pearson = std::numeric_limits<double>::quiet_NaN();
    double recovery = std::numeric_limits<double>::quiet_NaN();
    double spearman_uncertainty_pearson = std::numeric_limits<double>::quiet_NaN();
    nlohmann::json summary;
    std::string curve_svg;
};

namespace detail {

struct TestScores {
    double pearson = 0.0, psnr = 0.0, ssim = 0.0;
};

/// Mean per-image scores of one model on raw (input, target) pairs.
inline TestScores score_model(const GeneratorModel& model, const std::vector<Sample>& test)
{
    TestScores t;
    const SsimConfig ssim_cfg{};
    for (const auto& s : test) {
        const ImageScores sc = score_prediction(*s.target, infer(model, s.input), ssim_cfg);
        t.pearson += sc.pearson;
        t.psnr += sc.psnr;
        t.ssim += sc.ssim;
    }
    const double n = static_cast<double>(test.size());
    return {t.pearson / n, t.psnr / n, t.ssim / n};
}

inline std::vector<Sample> shifted(const std::vector<Sample>& samples, const PerturbationSpec& p)
{
    std::vector<Sample> out;
    for (const auto& s : samples) {
        Sample t{s.id, apply(p, s.input), s.target};
        if (p.geometric() && t.target) t.target = apply(p, *t.target);
        out.push_back(std::move(t));
    }
    return out;
}

inline int shallow_prefix(const FreezeSchedule& s)
{
    return s.kind == FreezeKind::TrainablePrefix && s.k >= 1 && s.k <= 3 ? s.k : 0;
}

} // namespace detail

inline SynthBenchResult run_synthbench(const SynthBenchConfig& cfg,
                                       const std::function<void(const std::string&)>& log = {})
{
    cfg.validate();
    auto say = [&](const std::string& m) {
        if (log) log(m);
    };
    SynthBenchResult res;

    // Data.
    Dataset all;
    for (int i = 0; i < cfg.num_pairs; ++i) {
        SyntheticSceneSpec s = cfg.scene;
        s.seed = substream_seed(cfg.seed, "synth", static_cast<std::uint64_t>(i));
        auto p = generate_synthetic_pair(s);
        all.samples.push_back({"scene" + std::to_string(i), std::move(p.input), std::move(p.target)});
    }
    const DatasetSplits splits = split_dataset(all, substream_seed(cfg.seed, "split"));
    const Dataset train = normalized(splits.train), val = normalized(splits.val);
    const std::vector<Image> source_inputs = train.inputs();

    const int n_target = cfg.num_target > 0 ? cfg.num_target : static_cast<int>(splits.train.size());
    std::vector<Image> target_inputs;
    for (int i = 0; i < n_target; ++i) {
        SyntheticSceneSpec s = cfg.scene;
        s.seed = substream_seed(cfg.seed, "synth-target", static_cast<std::uint64_t>(i));
        target_inputs.push_back(normalize(apply(cfg.shift, generate_synthetic_pair(s).input)));
    }
    const std::vector<Sample> test_clean = splits.test.samples;
    const std::vector<Sample> test_shifted = detail::shifted(test_clean, cfg.shift);
    say("data: " + std::to_string(splits.train.size()) + "/" + std::to_string(splits.val.size()) + "/" +
        std::to_string(splits.test.size()) + " pairs, " + std::to_string(n_target) + " target scenes");

    // Stage 1: one source model per ensemble member.
    const auto seeds = cfg.ensemble.member_seeds(substream_seed(cfg.seed, "source-train"));
    std::vector<GeneratorModel> sources(seeds.size());
    std::vector<SourceTrainReport> reports(seeds.size());
    run_parallel(seeds.size(), cfg.jobs, [&](std::size_t k) {
        GeneratorModel g(cfg.generator);
        g.initialize(substream_seed(seeds[k], "init"));
        SourceTrainConfig sc = cfg.source;
        sc.seed = seeds[k];
        auto r = train_source(std::move(g), train, val, sc);
        sources[k] = std::move(r.model);
        reports[k] = std::move(r.report);
    });
    for (std::size_t k = 0; k < seeds.size(); ++k) {
        const double v = reports[k].status == RunStatus::Ok ? reports[k].best_val_pearson
                                                            : std::numeric_limits<double>::quiet_NaN();
        res.source_val_pearson.push_back(v);
        say("source member " + std::to_string(k) + ": val pearson " + format_number(v) + " (epoch " +
            std::to_string(reports[k].best_epoch) + ")");
    }

    // No-adaptation baseline over members that pass the exclusion rule.
    std::vector<std::size_t> kept;
    for (std::size_t k = 0; k < sources.size(); ++k)
        if (!std::isnan(res.source_val_pearson[k]) && res.source_val_pearson[k] >= cfg.ensemble.min_val_pearson)
            kept.push_back(k);
    if (kept.empty()) throw SelectionError("no source model passed the exclusion rule");
    for (std::size_t k : kept) {
        res.clean_test_pearson += detail::score_model(sources[k], test_clean).pearson / static_cast<double>(kept.size());
        res.shifted_test_pearson += detail::score_model(sources[k], test_shifted).pearson / static_cast<double>(kept.size());
    }
    res.degradation = res.clean_test_pearson - res.shifted_test_pearson;
    say("baseline: clean " + format_number(res.clean_test_pearson) + ", shifted " + format_number(res.shifted_test_pearson));

    // Stage 2 + selection.
    AutoSelectOptions opts;
    opts.jobs = cfg.jobs;
    opts.evaluate = [&](SweepCell& cell, RankingRow& row) {
        CandidateResult c;
        c.row = row;
        std::size_t n = 0;
        double p = 0, ps = 0, ss = 0;
        for (const auto& m : cell.members)
            if (m.model) {
                const auto t = detail::score_model(*m.model, test_shifted);
                p += t.pearson;
                ps += t.psnr;
                ss += t.ssim;
                ++n;
            }
        if (n > 0) {
            c.test_pearson = p / static_cast<double>(n);
            c.test_psnr = ps / static_cast<double>(n);
            c.test_ssim = ss / static_cast<double>(n);
        }
        for (const auto& m : cell.members) {
            MemberOutcome copy = m;
            copy.model.reset();
            c.members.push_back(std::move(copy));
        }
        say("candidate " + row.candidate + ": uncertainty " + format_number(row.score) + ", test pearson " +
            format_number(c.test_pearson) + " [" + row.status + "]");
        res.candidates.push_back(std::move(c));
    };
    const Selection sel = auto_select(sources, res.source_val_pearson, cfg.ensemble, seeds, source_inputs,
                                      target_inputs, cfg.schedules, cfg.lrs, cfg.adapt, opts);
    res.ranking = sel.ranking;
    res.chosen = sel.chosen.candidate;

    std::vector<double> unc, acc;
    for (auto& c : res.candidates) {
        if (c.row.candidate == res.chosen) c.row = sel.chosen, res.chosen_test_pearson = c.test_pearson;
        if (c.row.status != "ok") continue;
        unc.push_back(c.row.score);
        acc.push_back(c.test_pearson);
        if (detail::shallow_prefix(c.row.schedule) &&
            (res.best_shallow.empty() || c.test_pearson > res.best_shallow_test_pearson)) {
            res.best_shallow = c.row.candidate;
            res.best_shallow_test_pearson = c.test_pearson;
        }
    }
    if (res.degradation != 0.0 && !res.best_shallow.empty())
        res.recovery = (res.best_shallow_test_pearson - res.shifted_test_pearson) / res.degradation;
    if (unc.size() >= 2) {
        try {
            res.spearman_uncertainty_pearson = spearman(unc, acc);
        } catch (const DegenerateError&) {
        }
    }

    // Summary.
    nlohmann::json j = manifest_base("synthbench", cfg.seed);
    j["config"] = {{"num_pairs", cfg.num_pairs},
                   {"num_target", n_target},
                   {"split", {splits.train.size(), splits.val.size(), splits.test.size()}},
                   {"generator", to_json(cfg.generator)},
                   {"source", to_json(cfg.source)},
                   {"adapt", to_json(cfg.adapt)},
                   {"ensemble_k", cfg.ensemble.k},
                   {"min_val_pearson", cfg.ensemble.min_val_pearson},
                   {"shift", to_string(cfg.shift)}};
    nlohmann::json src = nlohmann::json::array();
    for (std::size_t k = 0; k < sources.size(); ++k) {
        nlohmann::json epochs = nlohmann::json::array();
        for (const auto& e : reports[k].epochs) epochs.push_back(to_json(e));
        src.push_back({{"member", k},
                       {"seed", seeds[k]},
                       {"status", to_string(reports[k].status)},
                       {"best_epoch", reports[k].best_epoch},
                       {"val_pearson", json_number(res.source_val_pearson[k])},
                       {"checksum", checksum_hex(parameter_checksum(sources[k]))},
                       {"epochs", epochs}});
    }
    j["source_models"] = src;
    j["baseline"] = {{"clean_test_pearson", json_number(res.clean_test_pearson)},
                     {"shifted_test_pearson", json_number(res.shifted_test_pearson)},
                     {"degradation", json_number(res.degradation)}};
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : res.candidates) {
        nlohmann::json members = nlohmann::json::array();
        for (const auto& m : c.members) {
            nlohmann::json losses = nlohmann::json::array();
            for (const auto& h : m.history) losses.push_back({json_number(h.disc_loss), json_number(h.gen_loss)});
            members.push_back({{"member", m.member},
                               {"seed", m.seed},
                               {"status", to_string(m.status)},
                               {"checksum", m.checksum},
                               {"losses", losses}});
        }
        cands.push_back({{"candidate", c.row.candidate},
                         {"schedule", to_string(c.row.schedule)},
                         {"disc_lr", c.row.disc_lr},
                         {"trainable_params", c.row.trainable_params},
                         {"status", c.row.status},
                         {"uncertainty", json_number(c.row.score)},
                         {"test_pearson", json_number(c.test_pearson)},
                         {"test_psnr", json_number(c.test_psnr)},
                         {"test_ssim", json_number(c.test_ssim)},
                         {"members", members}});
    }
    j["candidates"] = cands;
    nlohmann::json ranking = nlohmann::json::array();
    for (const auto& r : res.ranking) ranking.push_back(r.candidate);
    j["ranking"] = ranking;
    j["selection"] = {{"chosen", res.chosen}, {"test_pearson", json_number(res.chosen_test_pearson)}};
    j["best_shallow"] = {{"candidate", res.best_shallow},
                         {"test_pearson", json_number(res.best_shallow_test_pearson)},
                         {"recovery", json_number(res.recovery)}};
    j["spearman_uncertainty_vs_pearson"] = json_number(res.spearman_uncertainty_pearson);
    res.summary = std::move(j);

    // Test Pearson against trainable prefix depth, one curve per critic lr.
    PlotSpec plot{"Shifted-domain test Pearson by freeze schedule", "schedule", "test Pearson", false, {}};
    for (const auto& s : cfg.schedules) plot.x_tick_labels.push_back(to_string(s));
    std::vector<PlotSeries> series;
    for (std::size_t li = 0; li < cfg.lrs.size(); ++li) {
        PlotSeries ps{"lr " + format_number(cfg.lrs[li]), {}, {}};
        for (std::size_t si = 0; si < cfg.schedules.size(); ++si) {
            ps.x.push_back(static_cast<double>(si));
            ps.y.push_back(res.candidates[li * cfg.schedules.size() + si].test_pearson);
        }
        series.push_back(std::move(ps));
    }
    res.curve_svg = svg_line_plot(plot, series,
                                  {{"no adaptation", res.shifted_test_pearson}, {"clean domain", res.clean_test_pearson}});
    return res;
}

} // namespace sitadda
