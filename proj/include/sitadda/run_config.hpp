#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "adaptation.hpp"
#include "config.hpp"
#include "perturbation.hpp"
#include "synthbench.hpp"
#include "uncertainty.hpp"

namespace sitadda {

struct RunPaths {
    std::filesystem::path source;      // paired source images
    std::filesystem::path target;      // unlabeled target images
    std::filesystem::path out = "out"; // output directory
    std::filesystem::path checkpoint;  // single generator checkpoint
    std::vector<std::filesystem::path> checkpoints; // ensemble members
    std::filesystem::path input;       // images to perturb
    std::filesystem::path predictions; // evaluate: prediction images
    std::filesystem::path truth;       // evaluate: ground-truth images
};

struct RunConfig {
    std::optional<std::uint64_t> seed;
    RunPaths paths;
    int image_size = 1024; // 0 keeps native size
    GeneratorConfig generator{};
    SourceTrainConfig source{};
    AdaptConfig adapt{};
    EnsembleConfig ensemble{};
    std::vector<double> lrs{1e-3, 1e-4, 1e-5, 1e-6};
    std::vector<FreezeSchedule> schedules; // empty: command-specific default
    PerturbationSpec perturbation{};
    SynthBenchConfig synthbench{};
    int jobs = 1;
    nlohmann::json raw = nlohmann::json::object();

    [[nodiscard]] std::uint64_t require_seed() const
    {
        if (!seed) throw ConfigError("a seed is mandatory (config key 'seed' or --seed)");
        return *seed;
    }

    /// Every referenced path must exist.
    static void require_path(const std::filesystem::path& p, const char* key)
    {
        if (p.empty()) throw ConfigError(std::string("missing path '") + key + "'");
        if (!std::filesystem::exists(p)) throw ConfigError(std::string("path '") + key + "' does not exist: " + p.string());
    }

    /// Every prefix schedule 1..2*depth (the full sweep).
    [[nodiscard]] std::vector<FreezeSchedule> all_prefixes() const
    {
        std::vector<FreezeSchedule> out;
        for (int k = 1; k <= 2 * generator.depth; ++k) out.push_back(FreezeSchedule::prefix(k));
        return out;
    }
};

namespace detail {

inline void read_generator(const ConfigView& v, const std::string& prefix, GeneratorConfig& g)
{
    g.depth = v.get<int>(prefix + "depth", g.depth);
    g.base_channels = v.get<int>(prefix + "base_channels", g.base_channels);
    g.channel_cap = v.get<int>(prefix + "channel_cap", g.channel_cap);
    if (v.has(prefix + "norm")) g.norm = nn::norm_kind_from_string(v.require<std::string>(prefix + "norm"));
    g.norm_input_block = v.get<bool>(prefix + "norm_input_block", g.norm_input_block);
    g.norm_bottleneck = v.get<bool>(prefix + "norm_bottleneck", g.norm_bottleneck);
}

inline void read_source(const ConfigView& v, const std::string& prefix, SourceTrainConfig& s)
{
    s.epochs = v.get<int>(prefix + "epochs", s.epochs);
    s.batch_size = v.get<int>(prefix + "batch_size", s.batch_size);
    s.adam.lr = v.get<double>(prefix + "lr", s.adam.lr);
    s.adam.beta1 = v.get<double>(prefix + "beta1", s.adam.beta1);
    s.adam.beta2 = v.get<double>(prefix + "beta2", s.adam.beta2);
    s.decay.start_epoch = v.get<int>(prefix + "decay_start_epoch", s.decay.start_epoch);
    s.decay.final_factor = v.get<double>(prefix + "decay_final_factor", s.decay.final_factor);
}

inline void read_adapt(const ConfigView& v, const std::string& prefix, AdaptConfig& a)
{
    if (v.has(prefix + "schedule")) a.schedule = parse_schedule(v.require<std::string>(prefix + "schedule"));
    a.disc_lr = v.get<double>(prefix + "disc_lr", a.disc_lr);
    a.gen_lr = v.get<double>(prefix + "gen_lr", a.gen_lr);
    a.beta1 = v.get<double>(prefix + "beta1", a.beta1);
    a.beta2 = v.get<double>(prefix + "beta2", a.beta2);
    a.epochs = v.get<int>(prefix + "epochs", a.epochs);
    a.steps = v.get<int>(prefix + "steps", a.steps);
    a.batch_size = v.get<int>(prefix + "batch_size", a.batch_size);
    a.discriminator.num_layers = v.get<int>(prefix + "disc_layers", a.discriminator.num_layers);
    a.discriminator.base_channels = v.get<int>(prefix + "disc_base_channels", a.discriminator.base_channels);
    a.discriminator.channel_cap = v.get<int>(prefix + "disc_channel_cap", a.discriminator.channel_cap);
}

inline void read_ensemble(const ConfigView& v, const std::string& prefix, EnsembleConfig& e)
{
    e.k = v.get<int>(prefix + "k", e.k);
    e.seeds = v.get<std::vector<std::uint64_t>>(prefix + "seeds", e.seeds);
    e.min_val_pearson = v.get<double>(prefix + "min_val_pearson", e.min_val_pearson);
}

inline std::vector<FreezeSchedule> read_schedules(const ConfigView& v, const std::string& key)
{
    std::vector<FreezeSchedule> out;
    for (const auto& s : v.require<std::vector<std::string>>(key)) out.push_back(parse_schedule(s));
    return out;
}

} // namespace detail

/// Builds a RunConfig from a parsed config; unknown keys are ignored.
inline RunConfig run_config_from_json(const nlohmann::json& j)
{
    const ConfigView v(j);
    RunConfig rc;
    rc.raw = j;
    if (v.has("seed")) rc.seed = v.require<std::uint64_t>("seed");
    rc.jobs = v.get<int>("jobs", rc.jobs);
    rc.image_size = v.get<int>("data.image_size", rc.image_size);

    auto path = [&](const char* key, std::filesystem::path& dst) {
        if (v.has(key)) dst = v.require<std::string>(key);
    };
    path("paths.source", rc.paths.source);
    path("paths.target", rc.paths.target);
    path("paths.out", rc.paths.out);
    path("paths.checkpoint", rc.paths.checkpoint);
    path("paths.input", rc.paths.input);
    path("paths.predictions", rc.paths.predictions);
    path("paths.truth", rc.paths.truth);
    for (const auto& p : v.get<std::vector<std::string>>("paths.checkpoints", {})) rc.paths.checkpoints.emplace_back(p);

    detail::read_generator(v, "model.", rc.generator);
    detail::read_source(v, "source.", rc.source);
    detail::read_adapt(v, "adapt.", rc.adapt);
    detail::read_ensemble(v, "ensemble.", rc.ensemble);
    rc.lrs = v.get<std::vector<double>>("sweep.lrs", rc.lrs);
    if (v.has("sweep.schedules")) rc.schedules = detail::read_schedules(v, "sweep.schedules");

    if (v.has("perturb.kind"))
        rc.perturbation.kind = perturbation_kind_from_string(v.require<std::string>("perturb.kind"));
    rc.perturbation.magnitude = v.get<double>("perturb.magnitude", rc.perturbation.magnitude);

    auto& sb = rc.synthbench;
    sb.num_pairs = v.get<int>("synthbench.num_pairs", sb.num_pairs);
    sb.num_target = v.get<int>("synthbench.num_target", sb.num_target);
    sb.scene.height = sb.scene.width = v.get<int>("synthbench.image_size", sb.scene.height);
    sb.scene.num_blobs = v.get<int>("synthbench.num_blobs", sb.scene.num_blobs);
    sb.scene.noise_std = v.get<double>("synthbench.noise_std", sb.scene.noise_std);
    sb.scene.input_contrast = v.get<double>("synthbench.input_contrast", sb.scene.input_contrast);
    detail::read_generator(v, "synthbench.model.", sb.generator);
    detail::read_source(v, "synthbench.source.", sb.source);
    detail::read_adapt(v, "synthbench.adapt.", sb.adapt);
    detail::read_ensemble(v, "synthbench.ensemble.", sb.ensemble);
    sb.lrs = v.get<std::vector<double>>("synthbench.lrs", sb.lrs);
    if (v.has("synthbench.schedules")) sb.schedules = detail::read_schedules(v, "synthbench.schedules");
    if (v.has("synthbench.shift.kind"))
        sb.shift.kind = perturbation_kind_from_string(v.require<std::string>("synthbench.shift.kind"));
    sb.shift.magnitude = v.get<double>("synthbench.shift.magnitude", sb.shift.magnitude);
    return rc;
}

} // namespace sitadda
