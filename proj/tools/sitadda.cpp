// sitadda command-line driver.
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 divergence/exclusion.

#include <CLI11.hpp>
#include <json.hpp>

#include <sitadda/adaptation.hpp>
#include <sitadda/checkpoint.hpp>
#include <sitadda/config.hpp>
#include <sitadda/image_io.hpp>
#include <sitadda/metrics.hpp>
#include <sitadda/perturbation.hpp>
#include <sitadda/report.hpp>
#include <sitadda/run_config.hpp>
#include <sitadda/synthbench.hpp>
#include <sitadda/uncertainty.hpp>

#include <cstdio>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace sitadda;

namespace {

enum ExitCode : int { kOk = 0, kConfigError = 2, kDataError = 3, kExcluded = 4 };

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int jobs = 0;
    std::vector<std::string> overrides;
};

void info(const std::string& msg) { std::fprintf(stderr, "[sitadda] %s\n", msg.c_str()); }

RunConfig load_run_config(const GlobalOptions& g)
{
    nlohmann::json j = g.config.empty() ? nlohmann::json::object() : load_config(g.config);
    for (const auto& o : g.overrides) apply_override(j, o);
    RunConfig rc = run_config_from_json(j);
    if (g.seed) rc.seed = g.seed;
    if (!g.out.empty()) rc.paths.out = g.out;
    if (g.jobs > 0) rc.jobs = g.jobs;
    if (rc.jobs < 1) throw ConfigError("jobs must be >= 1");
    (void)rc.require_seed();
    return rc;
}

nlohmann::json history_json(const std::vector<StepRecord>& h)
{
    nlohmann::json a = nlohmann::json::array();
    for (const auto& r : h) a.push_back(to_json(r));
    return a;
}

Dataset load_source(const RunConfig& rc)
{
    RunConfig::require_path(rc.paths.source, "paths.source");
    Dataset ds = load_images(rc.paths.source, rc.image_size, DomainTag::Source);
    ds.validate();
    return ds;
}

std::vector<Image> load_target_inputs(const RunConfig& rc)
{
    RunConfig::require_path(rc.paths.target, "paths.target");
    Dataset ds = load_images(rc.paths.target, rc.image_size, DomainTag::Target);
    ds.validate();
    return normalized(ds).inputs();
}

std::string safe_name(std::string s)
{
    for (char& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-') c = '_';
    return s;
}

// ---------------------------------------------------------------------------

int cmd_train_source(const RunConfig& rc)
{
    const std::uint64_t seed = rc.require_seed();
    const Dataset all = load_source(rc);
    const DatasetSplits splits = split_dataset(all, substream_seed(seed, "split"));
    GeneratorModel model(rc.generator);
    const std::uint64_t train_seed = substream_seed(seed, "source-train");
    model.initialize(substream_seed(train_seed, "init"));
    SourceTrainConfig sc = rc.source;
    sc.seed = train_seed;
    info("training on " + std::to_string(splits.train.size()) + " pairs, validating on " + std::to_string(splits.val.size()));
    const SourceTrainResult res = train_source(std::move(model), normalized(splits.train), normalized(splits.val), sc);

    nlohmann::json m = manifest_base("train-source", seed);
    m["config"] = {{"generator", to_json(rc.generator)}, {"source", to_json(sc)}, {"image_size", rc.image_size}};
    m["seeds"] = {{"root", seed}, {"split", substream_seed(seed, "split")}, {"source_train", train_seed}};
    m["split"] = {splits.train.size(), splits.val.size(), splits.test.size()};
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : res.report.epochs) epochs.push_back(to_json(e));
    m["epochs"] = epochs;
    m["best_epoch"] = res.report.best_epoch;
    m["best_val_pearson"] = json_number(res.report.best_val_pearson);
    m["status"] = to_string(res.report.status);
    if (!res.report.message.empty()) m["message"] = res.report.message;
    m["checksums"] = {{"model", checksum_hex(parameter_checksum(res.model))}};
    if (res.report.status == RunStatus::Ok) {
        save_checkpoint(rc.paths.out / "source.ckpt", res.model, ModelStage::Source);
        m["checkpoint"] = "source.ckpt";
    }
    write_json(rc.paths.out / "train_source.json", m);
    if (res.report.status != RunStatus::Ok) {
        info(res.report.message);
        return kExcluded;
    }
    info("best epoch " + std::to_string(res.report.best_epoch) + ", val pearson " + format_number(res.report.best_val_pearson));
    return kOk;
}

int cmd_adapt(const RunConfig& rc)
{
    const std::uint64_t seed = rc.require_seed();
    RunConfig::require_path(rc.paths.checkpoint, "paths.checkpoint");
    const GeneratorModel source = load_checkpoint(rc.paths.checkpoint).model;
    const auto src_inputs = normalized(load_source(rc)).inputs();
    const auto tgt_inputs = load_target_inputs(rc);
    AdaptConfig ac = rc.adapt;
    ac.seed = substream_seed(seed, "adapt");
    const std::string before = checksum_hex(parameter_checksum(source));
    info("adapting with " + to_string(ac.schedule) + ", disc lr " + format_number(ac.disc_lr));
    AdaptationRun run = adapt(source, src_inputs, tgt_inputs, ac);

    nlohmann::json m = manifest_base("adapt", seed);
    m["config"] = to_json(ac);
    m["seeds"] = {{"root", seed}, {"adapt", ac.seed}};
    m["steps"] = history_json(run.history);
    m["trainable_params"] = run.trainable_params();
    m["status"] = to_string(run.status);
    if (!run.message.empty()) m["message"] = run.message;
    m["checksums"] = {{"source_before", before},
                      {"source_after", checksum_hex(parameter_checksum(run.source_model))},
                      {"adapted", checksum_hex(parameter_checksum(run.target_model))}};
    if (run.status == RunStatus::Ok) {
        save_checkpoint(rc.paths.out / "adapted.ckpt", run.target_model, ModelStage::Adapted);
        m["checkpoint"] = "adapted.ckpt";
    }
    write_json(rc.paths.out / "adapt.json", m);
    if (run.status != RunStatus::Ok) {
        info(run.message);
        return kExcluded;
    }
    return kOk;
}

int cmd_sweep(const RunConfig& rc)
{
    const std::uint64_t seed = rc.require_seed();
    RunConfig::require_path(rc.paths.checkpoint, "paths.checkpoint");
    const GeneratorModel source = load_checkpoint(rc.paths.checkpoint).model;
    const auto src_inputs = normalized(load_source(rc)).inputs();
    const auto tgt_inputs = load_target_inputs(rc);
    std::vector<FreezeSchedule> schedules = rc.schedules;
    if (schedules.empty())
        for (int k = 1; k <= static_cast<int>(source.block_count()); ++k) schedules.push_back(FreezeSchedule::prefix(k));
    const bool save = ConfigView(rc.raw).get<bool>("sweep.save_checkpoints", false);
    const std::vector<GeneratorModel> models{source};
    const std::vector<std::uint64_t> seeds{substream_seed(seed, "adapt")};

    SweepOptions so;
    so.jobs = rc.jobs;
    so.evaluate = [&](SweepCell& cell) {
        info("cell " + candidate_label(cell.schedule, cell.disc_lr) + ": " + cell.status);
        if (save && cell.members[0].model)
            save_checkpoint(rc.paths.out / "cells" / (safe_name(candidate_label(cell.schedule, cell.disc_lr)) + ".ckpt"),
                            *cell.members[0].model, ModelStage::Adapted);
    };
    const auto cells = sweep(models, seeds, src_inputs, tgt_inputs, rc.lrs, schedules, rc.adapt, so);

    CsvTable csv({"candidate", "disc_lr", "schedule", "status", "trainable_params", "final_disc_loss", "final_gen_loss", "checksum"});
    nlohmann::json m = manifest_base("sweep", seed);
    m["config"] = to_json(rc.adapt);
    m["seeds"] = {{"root", seed}, {"adapt", seeds[0]}};
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& c : cells) {
        const auto& mem = c.members[0];
        const double dl = mem.history.empty() ? std::nan("") : mem.history.back().disc_loss;
        const double gl = mem.history.empty() ? std::nan("") : mem.history.back().gen_loss;
        const std::string label = candidate_label(c.schedule, c.disc_lr);
        csv.add({label, format_number(c.disc_lr), to_string(c.schedule), c.status, std::to_string(c.trainable_params),
                 format_number(dl), format_number(gl), mem.checksum});
        rows.push_back({{"candidate", label},
                        {"status", c.status},
                        {"trainable_params", c.trainable_params},
                        {"checksum", mem.checksum},
                        {"steps", history_json(mem.history)}});
    }
    m["cells"] = rows;
    m["status"] = "ok";
    csv.save(rc.paths.out / "sweep.csv");
    write_json(rc.paths.out / "sweep.json", m);
    info(std::to_string(cells.size()) + " cells written to " + (rc.paths.out / "sweep.csv").string());
    return kOk;
}

int cmd_autoselect(const RunConfig& rc)
{
    const std::uint64_t seed = rc.require_seed();
    if (rc.paths.checkpoints.size() < 2) throw ConfigError("autoselect needs at least two checkpoints in paths.checkpoints");
    std::vector<GeneratorModel> sources;
    for (std::size_t i = 0; i < rc.paths.checkpoints.size(); ++i) {
        RunConfig::require_path(rc.paths.checkpoints[i], "paths.checkpoints");
        sources.push_back(load_checkpoint(rc.paths.checkpoints[i]).model);
    }
    const Dataset all = load_source(rc);
    const DatasetSplits splits = split_dataset(all, substream_seed(seed, "split"));
    const Dataset val = normalized(splits.val);
    std::vector<double> val_pearson;
    for (const auto& s : sources) val_pearson.push_back(mean_pearson(s, val));
    const auto src_inputs = normalized(all).inputs();
    const auto tgt_inputs = load_target_inputs(rc);

    EnsembleConfig ec = rc.ensemble;
    if (ec.seeds.empty()) ec.k = static_cast<int>(sources.size());
    ec.validate();
    const auto seeds = ec.member_seeds(substream_seed(seed, "adapt"));
    if (seeds.size() != sources.size()) throw ConfigError("ensemble.seeds must list one seed per checkpoint");
    std::vector<FreezeSchedule> schedules = rc.schedules;
    if (schedules.empty())
        for (int k = 1; k <= 4; ++k) schedules.push_back(FreezeSchedule::prefix(k));
    const bool save = ConfigView(rc.raw).get<bool>("autoselect.save_checkpoints", false);

    AutoSelectOptions opts;
    opts.jobs = rc.jobs;
    opts.evaluate = [&](SweepCell& cell, RankingRow& row) {
        info("candidate " + row.candidate + ": uncertainty " + format_number(row.score) + " [" + row.status + "]");
        if (!save) return;
        for (const auto& m : cell.members)
            if (m.model)
                save_checkpoint(rc.paths.out / "candidates" / safe_name(row.candidate) / ("member" + std::to_string(m.member) + ".ckpt"),
                                *m.model, ModelStage::Adapted);
    };
    nlohmann::json m = manifest_base("autoselect", seed);
    m["config"] = {{"adapt", to_json(rc.adapt)}, {"min_val_pearson", ec.min_val_pearson}, {"lrs", rc.lrs}};
    m["seeds"] = seeds;
    nlohmann::json vp = nlohmann::json::array();
    for (double v : val_pearson) vp.push_back(json_number(v));
    m["source_val_pearson"] = vp;
    Selection sel;
    try {
        sel = auto_select(sources, val_pearson, ec, seeds, src_inputs, tgt_inputs, schedules, rc.lrs, rc.adapt, opts);
    } catch (const SelectionError& e) {
        m["status"] = "selection-failed";
        m["message"] = e.what();
        write_json(rc.paths.out / "autoselect.json", m);
        throw;
    }
    CsvTable csv({"candidate", "score", "status", "trainable_params"});
    nlohmann::json ranking = nlohmann::json::array();
    for (const auto& r : sel.ranking) {
        csv.add({r.candidate, format_number(r.score), r.status, std::to_string(r.trainable_params)});
        ranking.push_back({{"candidate", r.candidate},
                           {"score", json_number(r.score)},
                           {"status", r.status},
                           {"trainable_params", r.trainable_params},
                           {"surviving_members", r.surviving_members}});
    }
    csv.save(rc.paths.out / "ranking.csv");
    m["ranking"] = ranking;
    m["chosen"] = {{"candidate", sel.chosen.candidate},
                   {"schedule", to_string(sel.chosen.schedule)},
                   {"disc_lr", sel.chosen.disc_lr},
                   {"score", json_number(sel.chosen.score)}};
    m["status"] = "ok";
    write_json(rc.paths.out / "autoselect.json", m);
    info("selected " + sel.chosen.candidate);
    return kOk;
}

int cmd_perturb(const RunConfig& rc)
{
    const std::uint64_t seed = rc.require_seed();
    RunConfig::require_path(rc.paths.input, "paths.input");
    rc.perturbation.validate();
    nlohmann::json files = nlohmann::json::array();
    for (const auto& p : list_images(rc.paths.input)) {
        const std::string stem = p.stem().string();
        const bool is_target = stem.size() > 7 && stem.ends_with("_target");
        const Image x = read_grayscale(p);
        // Intensity shifts only touch inputs; geometric ones move targets too.
        const Image y = (!is_target || rc.perturbation.geometric()) ? apply(rc.perturbation, x) : x;
        write_grayscale(rc.paths.out / p.filename(), y);
        files.push_back({{"file", p.filename().string()}, {"perturbed", !is_target || rc.perturbation.geometric()}});
    }
    nlohmann::json m = manifest_base("perturb", seed);
    m["config"] = {{"perturbation", to_string(rc.perturbation)}};
    m["files"] = files;
    m["status"] = "ok";
    write_json(rc.paths.out / "perturb.json", m);
    info("wrote " + std::to_string(files.size()) + " images");
    return kOk;
}

struct EvalRow {
    std::string id;
    double pearson, psnr, ssim, entropy;
};

std::string strip_role(const std::string& stem)
{
    for (const char* suf : {"_target", "_input", "_pred", "_prediction"}) {
        const std::string s(suf);
        if (stem.size() > s.size() && stem.ends_with(s)) return stem.substr(0, stem.size() - s.size());
    }
    return stem;
}

int cmd_evaluate(const RunConfig& rc)
{
    const std::uint64_t seed = rc.require_seed();
    std::vector<std::pair<std::string, std::pair<Image, Image>>> pairs; // id -> (truth, prediction)
    if (!rc.paths.predictions.empty()) {
        RunConfig::require_path(rc.paths.predictions, "paths.predictions");
        RunConfig::require_path(rc.paths.truth, "paths.truth");
        std::map<std::string, fs::path> truth;
        for (const auto& p : list_images(rc.paths.truth)) {
            const std::string stem = p.stem().string();
            if (stem.ends_with("_input")) continue;
            truth[strip_role(stem)] = p;
        }
        for (const auto& p : list_images(rc.paths.predictions)) {
            const std::string stem = p.stem().string();
            if (stem.ends_with("_input")) continue;
            const auto it = truth.find(strip_role(stem));
            if (it == truth.end()) throw DataError("prediction '" + p.string() + "' has no ground-truth image");
            pairs.push_back({it->first, {read_grayscale(it->second), read_grayscale(p)}});
        }
    } else {
        RunConfig::require_path(rc.paths.checkpoint, "paths.checkpoint");
        const GeneratorModel model = load_checkpoint(rc.paths.checkpoint).model;
        const Dataset ds = load_source(rc);
        for (const auto& s : ds.samples) {
            Image pred = infer(model, s.input);
            write_grayscale(rc.paths.out / "predictions" / (s.id + "_pred.png"), pred);
            pairs.push_back({s.id, {*s.target, std::move(pred)}});
        }
    }
    if (pairs.empty()) throw DataError("nothing to evaluate");

    const SsimConfig ssim_cfg{};
    std::vector<EvalRow> rows;
    CsvTable csv({"id", "pearson", "psnr", "ssim", "entropy"});
    for (const auto& [id, tp] : pairs) {
        EvalRow r{id, std::nan(""), std::nan(""), std::nan(""), shannon_entropy(tp.second)};
        try {
            const ImageScores s = score_prediction(tp.first, tp.second, ssim_cfg);
            r.pearson = s.pearson;
            r.psnr = s.psnr;
            r.ssim = s.ssim;
        } catch (const DegenerateError& e) {
            info("image " + id + ": " + e.what());
        }
        csv.add({r.id, format_number(r.pearson), format_number(r.psnr), format_number(r.ssim), format_number(r.entropy)});
        rows.push_back(r);
    }
    auto summary = [&](double EvalRow::*field) {
        std::vector<double> v;
        for (const auto& r : rows)
            if (!std::isnan(r.*field)) v.push_back(r.*field);
        if (v.empty()) return nlohmann::json{{"n", 0}};
        double mean = 0;
        for (double x : v) mean += x / static_cast<double>(v.size());
        double var = 0;
        if (std::isfinite(mean))
            for (double x : v) var += (x - mean) * (x - mean);
        const double sd = v.size() > 1 && std::isfinite(mean) ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
        return nlohmann::json{{"n", v.size()}, {"mean", json_number(mean)}, {"std", json_number(sd)}};
    };
    nlohmann::json m = manifest_base("evaluate", seed);
    m["count"] = rows.size();
    m["aggregate"] = {{"pearson", summary(&EvalRow::pearson)},
                      {"psnr", summary(&EvalRow::psnr)},
                      {"ssim", summary(&EvalRow::ssim)},
                      {"entropy", summary(&EvalRow::entropy)}};
    m["status"] = "ok";
    csv.save(rc.paths.out / "per_image.csv");
    write_json(rc.paths.out / "aggregate.json", m);

    PlotSeries ps{"pearson", {}, {}}, ss{"ssim", {}, {}};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        ps.x.push_back(static_cast<double>(i));
        ps.y.push_back(rows[i].pearson);
        ss.x.push_back(static_cast<double>(i));
        ss.y.push_back(rows[i].ssim);
    }
    write_text(rc.paths.out / "per_image.svg",
               svg_line_plot({"Per-image scores", "image index", "score", false, {}}, {ps, ss}));
    info("evaluated " + std::to_string(rows.size()) + " images");
    return kOk;
}

int cmd_synthbench(const RunConfig& rc)
{
    SynthBenchConfig cfg = rc.synthbench;
    cfg.seed = rc.require_seed();
    cfg.jobs = rc.jobs;
    const SynthBenchResult res = run_synthbench(cfg, info);
    write_json(rc.paths.out / "summary.json", res.summary);
    write_text(rc.paths.out / "curve.svg", res.curve_svg);
    CsvTable csv({"candidate", "score", "status", "trainable_params"});
    for (const auto& r : res.ranking)
        csv.add({r.candidate, format_number(r.score), r.status, std::to_string(r.trainable_params)});
    csv.save(rc.paths.out / "ranking.csv");
    info("chosen " + res.chosen + " (test pearson " + format_number(res.chosen_test_pearson) + ", baseline " +
         format_number(res.shifted_test_pearson) + ")");
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Selective-freezing adversarial domain adaptation for image-to-image translation"};
    app.require_subcommand(1);
    GlobalOptions g;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", g.config, "TOML-style config file");
        sub->add_option("--seed", g.seed, "root seed (overrides config)");
        sub->add_option("--out", g.out, "output directory (overrides paths.out)");
        sub->add_option("--jobs", g.jobs, "parallel workers for sweeps and ensembles");
        sub->add_option("--set", g.overrides, "override a config key, e.g. --set adapt.steps=50");
    };
    const std::map<std::string, std::pair<const char*, int (*)(const RunConfig&)>> commands{
        {"train-source", {"supervised training on paired source data", cmd_train_source}},
        {"adapt", {"adversarial adaptation of a source checkpoint", cmd_adapt}},
        {"sweep", {"grid of adaptations over critic lr x freeze schedule", cmd_sweep}},
        {"autoselect", {"pick (schedule, lr) by ensemble uncertainty", cmd_autoselect}},
        {"perturb", {"apply a zoom, overexposure or gradient shift to images", cmd_perturb}},
        {"evaluate", {"per-image and aggregate metrics with plots", cmd_evaluate}},
        {"synthbench", {"end-to-end synthetic benchmark", cmd_synthbench}},
    };
    std::map<CLI::App*, int (*)(const RunConfig&)> handlers;
    for (const auto& [name, entry] : commands) {
        CLI::App* sub = app.add_subcommand(name, entry.first);
        add_common(sub);
        handlers[sub] = entry.second;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    try {
        for (const auto& [sub, fn] : handlers)
            if (sub->parsed()) return fn(load_run_config(g));
    } catch (const SelectionError& e) {
        info(std::string("excluded: ") + e.what());
        return kExcluded;
    } catch (const DataError& e) {
        info(std::string("data error: ") + e.what());
        return kDataError;
    } catch (const DegenerateError& e) {
        info(std::string("data error: ") + e.what());
        return kDataError;
    } catch (const std::invalid_argument& e) { // ConfigError, ShapeError
        info(std::string("config error: ") + e.what());
        return kConfigError;
    } catch (const std::out_of_range& e) { // IndexError
        info(std::string("config error: ") + e.what());
        return kConfigError;
    } catch (const std::exception& e) {
        info(std::string("error: ") + e.what());
        return kDataError;
    }
    return kConfigError;
}
