#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "checkpoint.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace sitadda {

enum class RunStatus { Ok, ExcludedDivergent, ConfigError };

inline const char* to_string(RunStatus s)
{
    switch (s) {
    case RunStatus::Ok: return "ok";
    case RunStatus::ExcludedDivergent: return "excluded-divergent";
    case RunStatus::ConfigError: return "config-error";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Stage 1: supervised source training
// ---------------------------------------------------------------------------

/// Linear learning-rate decay: factor 1 until `start_epoch`, then linear
/// towards `final_factor` at the end of the budget.
struct LinearDecay {
    int start_epoch = 0;
    double final_factor = 0.0;

    [[nodiscard]] double factor(int epoch, int epochs) const
    {
        if (epoch < start_epoch) return 1.0;
        const int span = std::max(1, epochs - start_epoch);
        return 1.0 - (1.0 - final_factor) * static_cast<double>(epoch - start_epoch) / span;
    }
};

struct SourceTrainConfig {
    int epochs = 200;
    int batch_size = 8;
    nn::AdamSettings adam{2e-4, 0.9, 0.999, 1e-8};
    LinearDecay decay{};
    std::uint64_t seed = 0;

    void validate() const
    {
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be > 0");
    }
};

struct EpochRecord {
    int epoch = 0; // 1-based
    double train_loss = 0.0;
    double val_pearson = 0.0; // NaN when undefined
    double lr = 0.0;
};

struct SourceTrainReport {
    RunStatus status = RunStatus::Ok;
    std::string message;
    std::vector<EpochRecord> epochs;
    int best_epoch = 0; // 1-based, 0 when no epoch produced a defined score
    double best_val_pearson = std::numeric_limits<double>::quiet_NaN();
};

struct SourceTrainResult {
    GeneratorModel model;
    SourceTrainReport report;
};

/// Index of the first maximal defined score, or -1 if all are NaN.
inline int best_checkpoint_index(std::span<const double> scores)
{
    int best = -1;
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (!std::isnan(scores[i]) && (best < 0 || scores[i] > scores[best])) best = static_cast<int>(i);
    return best;
}

namespace detail {

inline void require_normalized(const Image& img, const char* what)
{
    if (img.domain != Domain::NormNeg1To1) throw ConfigError(std::string(what) + " must be normalized to [-1,1]");
}

} // namespace detail

/// Mean per-image Pearson of predictions on a labelled set (NaN if undefined everywhere).
inline double mean_pearson(const GeneratorModel& model, const Dataset& data)
{
    double sum = 0.0;
    int n = 0;
    for (const auto& s : data.samples) {
        const double p = pearson_or_nan(*s.target, generator_forward(model, s.input));
        if (!std::isnan(p)) {
            sum += p;
            ++n;
        }
    }
    return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

/// Trains on MSE and returns the epoch with the best validation Pearson.
inline SourceTrainResult train_source(GeneratorModel model, const Dataset& train, const Dataset& val,
                                      const SourceTrainConfig& cfg)
{
    cfg.validate();
    if (train.empty()) throw ConfigError("training split is empty");
    if (val.empty()) throw ConfigError("validation split is empty");
    for (const Dataset* ds : {&train, &val})
        for (const auto& s : ds->samples) {
            if (!s.target) throw DataError("source sample '" + s.id + "' has no target");
            detail::require_normalized(s.input, "source inputs");
            detail::require_normalized(*s.target, "source targets");
            model.check_input(s.input.height, s.input.width);
        }

    SourceTrainResult result{model, {}};
    Rng rng = make_rng(substream_seed(cfg.seed, "source-batches"));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    nn::AdamState adam(model.blocks());
    const std::vector<bool> all(model.block_count(), true);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle(order.begin(), order.end(), rng);
        const double lr = cfg.adam.lr * cfg.decay.factor(epoch, cfg.epochs);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            const double weight = 1.0 / static_cast<double>(end - start);
            auto grads = model.zero_grads();
            for (std::size_t b = start; b < end; ++b) {
                const Sample& s = train.samples[order[b]];
                GeneratorCache cache;
                nn::Tensor pred = model.forward(to_tensor(s.input), &cache);
                nn::Tensor grad(1, pred.height, pred.width);
                const double loss = nn::mse_loss(pred.data, s.target->values, grad.data, weight);
                if (!std::isfinite(loss)) {
                    result.report.status = RunStatus::ExcludedDivergent;
                    result.report.message = "divergence: non-finite training loss at epoch " + std::to_string(epoch + 1);
                    return result;
                }
                loss_sum += loss;
                model.backward(cache, grad, grads, all);
            }
            nn::adam_step(model.blocks(), grads, adam, cfg.adam, lr, all);
        }
        EpochRecord rec{epoch + 1, loss_sum / static_cast<double>(train.size()), mean_pearson(model, val), lr};
        result.report.epochs.push_back(rec);
        if (!std::isnan(rec.val_pearson) &&
            (std::isnan(result.report.best_val_pearson) || rec.val_pearson > result.report.best_val_pearson)) {
            result.report.best_val_pearson = rec.val_pearson;
            result.report.best_epoch = rec.epoch;
            result.model = model;
        }
    }
    if (result.report.best_epoch == 0) result.model = model;
    return result;
}

// ---------------------------------------------------------------------------
// Stage 2: adversarial adaptation under a freeze schedule
// ---------------------------------------------------------------------------

struct AdaptConfig {
    FreezeSchedule schedule = FreezeSchedule::prefix(3);
    double disc_lr = 1e-4;
    double gen_lr = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    int epochs = 1;
    int steps = 0; // 0: epochs x batches per pass over the smaller domain
    int batch_size = 4;
    DiscriminatorConfig discriminator{};
    std::uint64_t seed = 0;

    void validate() const
    {
        if (!(disc_lr >= 0.0) || !(gen_lr >= 0.0)) throw ConfigError("learning rates must be >= 0");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (steps < 0 || epochs < 0) throw ConfigError("steps/epochs must be >= 0");
    }

    [[nodiscard]] int resolved_steps(std::size_t n_source, std::size_t n_target) const
    {
        if (steps > 0) return steps;
        const std::size_t smaller = std::min(n_source, n_target);
        const auto per_epoch = static_cast<int>((smaller + batch_size - 1) / batch_size);
        return epochs * per_epoch;
    }
};

struct StepRecord {
    int step = 0; // 1-based
    double disc_loss = 0.0;
    double gen_loss = 0.0;
};

/// One Stage-2 run: the frozen source translator, the target translator
/// being adapted (initialized from the source), and the domain critic.
struct AdaptationRun {
    GeneratorModel source_model;
    GeneratorModel target_model;
    DiscriminatorModel discriminator;
    AdaptConfig config;
    std::vector<bool> trainable;
    std::vector<StepRecord> history;
    RunStatus status = RunStatus::Ok;
    std::string message;

    static AdaptationRun start(const GeneratorModel& source, const AdaptConfig& cfg)
    {
        cfg.validate();
        AdaptationRun run;
        run.source_model = source;
        run.target_model = source;
        run.discriminator = DiscriminatorModel(cfg.discriminator);
        run.discriminator.initialize(substream_seed(cfg.seed, "disc-init"));
        run.config = cfg;
        run.trainable = resolve_freeze(cfg.schedule, source.registry());
        return run;
    }

    [[nodiscard]] std::size_t trainable_params() const
    {
        std::size_t n = 0;
        for (std::size_t i = 0; i < trainable.size(); ++i)
            if (trainable[i]) n += nn::param_count(target_model.blocks()[i].params);
        return n;
    }
};

inline std::size_t trainable_param_count(const GeneratorModel& model, const FreezeSchedule& schedule)
{
    const auto mask = resolve_freeze(schedule, model.registry());
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) n += nn::param_count(model.blocks()[i].params);
    return n;
}

namespace detail {

/// Cycles through a seeded permutation, reshuffling at every wrap.
class EpochSampler {
public:
    EpochSampler(std::size_t n, Rng& rng) : order_(n), rng_(&rng)
    {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        shuffle(order_.begin(), order_.end(), *rng_);
    }
    std::size_t next()
    {
        if (pos_ == order_.size()) {
            shuffle(order_.begin(), order_.end(), *rng_);
            pos_ = 0;
        }
        return order_[pos_++];
    }

private:
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
    Rng* rng_;
};

} // namespace detail

/// Alternating critic / translator optimization.
///
/// Critic step (translator fixed): minimize BCE(D(F_S(x_S)), 1) + BCE(D(F_T(x_T)), 0),
/// i.e. maximize E[log D(F_S(x_S))] + E[log(1 - D(F_T(x_T)))].
/// Translator step (critic fixed): minimize BCE(D(F_T(x_T)), 1), the
/// non-saturating form of the same objective, updating only trainable blocks.
inline void adapt(AdaptationRun& run, std::span<const Image> source_inputs, std::span<const Image> target_inputs)
{
    if (source_inputs.empty() || target_inputs.empty()) throw ConfigError("adapt: both domains must be nonempty");
    for (const auto& x : source_inputs) {
        detail::require_normalized(x, "source inputs");
        run.source_model.check_input(x.height, x.width);
    }
    for (const auto& x : target_inputs) {
        detail::require_normalized(x, "target inputs");
        run.target_model.check_input(x.height, x.width);
    }

    const AdaptConfig& cfg = run.config;
    const int steps = cfg.resolved_steps(source_inputs.size(), target_inputs.size());
    Rng rng = make_rng(substream_seed(cfg.seed, "adapt-batches"));
    detail::EpochSampler src_sampler(source_inputs.size(), rng);
    detail::EpochSampler tgt_sampler(target_inputs.size(), rng);

    // F_S is frozen, so its outputs are computed once per source image.
    std::vector<std::optional<nn::Tensor>> source_out(source_inputs.size());
    const nn::AdamSettings adam{0.0, cfg.beta1, cfg.beta2, 1e-8};
    nn::AdamState disc_state(run.discriminator.blocks());
    nn::AdamState gen_state(run.target_model.blocks());
    const std::vector<bool> disc_all(run.discriminator.blocks().size(), true);
    const auto batch = static_cast<std::size_t>(cfg.batch_size);
    const double weight = 1.0 / static_cast<double>(batch);

    for (int step = 1; step <= steps; ++step) {
        std::vector<GeneratorCache> gen_cache(batch);
        std::vector<nn::Tensor> fake(batch);
        for (std::size_t b = 0; b < batch; ++b)
            fake[b] = run.target_model.forward(to_tensor(target_inputs[tgt_sampler.next()]), &gen_cache[b]);

        // Critic update.
        double disc_loss = 0.0;
        auto disc_grads = run.discriminator.zero_grads();
        for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t i = src_sampler.next();
            if (!source_out[i]) source_out[i] = run.source_model.forward(to_tensor(source_inputs[i]));
            DiscriminatorCache dc;
            nn::Tensor logits = run.discriminator.forward(*source_out[i], &dc);
            nn::Tensor g(logits.channels, logits.height, logits.width);
            disc_loss += weight * nn::bce_with_logits(logits.data, 1.0f, g.data, weight);
            run.discriminator.backward(dc, g, &disc_grads, false);
        }
        for (std::size_t b = 0; b < batch; ++b) {
            DiscriminatorCache dc;
            nn::Tensor logits = run.discriminator.forward(fake[b], &dc);
            nn::Tensor g(logits.channels, logits.height, logits.width);
            disc_loss += weight * nn::bce_with_logits(logits.data, 0.0f, g.data, weight);
            run.discriminator.backward(dc, g, &disc_grads, false);
        }
        nn::adam_step(run.discriminator.blocks(), disc_grads, disc_state, adam, cfg.disc_lr, disc_all);

        // Translator update against the refreshed critic.
        double gen_loss = 0.0;
        auto gen_grads = run.target_model.zero_grads();
        for (std::size_t b = 0; b < batch; ++b) {
            DiscriminatorCache dc;
            nn::Tensor logits = run.discriminator.forward(fake[b], &dc);
            nn::Tensor g(logits.channels, logits.height, logits.width);
            gen_loss += weight * nn::bce_with_logits(logits.data, 1.0f, g.data, weight);
            nn::Tensor dfake = run.discriminator.backward(dc, g, nullptr, true);
            run.target_model.backward(gen_cache[b], dfake, gen_grads, run.trainable);
        }

        run.history.push_back({step, disc_loss, gen_loss});
        if (!std::isfinite(disc_loss) || !std::isfinite(gen_loss)) {
            run.status = RunStatus::ExcludedDivergent;
            run.message = "divergence: non-finite adversarial loss at step " + std::to_string(step);
            return;
        }
        nn::adam_step(run.target_model.blocks(), gen_grads, gen_state, adam, cfg.gen_lr, run.trainable);
    }
}

/// Convenience wrapper: start a run and execute it.
inline AdaptationRun adapt(const GeneratorModel& source, std::span<const Image> source_inputs,
                           std::span<const Image> target_inputs, const AdaptConfig& cfg)
{
    AdaptationRun run = AdaptationRun::start(source, cfg);
    adapt(run, source_inputs, target_inputs);
    return run;
}

// ---------------------------------------------------------------------------
// Stage 3: inference
// ---------------------------------------------------------------------------

/// Translates one image. Raw inputs are normalized on the way in and the
/// prediction is returned in raw form; normalized inputs stay normalized.
inline Image infer(const GeneratorModel& model, const Image& x)
{
    if (x.domain == Domain::Raw0To255) return denormalize(generator_forward(model, normalize(x)));
    return generator_forward(model, x);
}

// ---------------------------------------------------------------------------
// Grid sweep over (critic learning rate, freeze schedule)
// ---------------------------------------------------------------------------

struct MemberOutcome {
    std::size_t member = 0;
    std::uint64_t seed = 0;
    RunStatus status = RunStatus::Ok;
    std::string message;
    std::vector<StepRecord> history;
    std::string checksum;
    std::optional<GeneratorModel> model; // dropped after evaluation unless kept
};

struct SweepCell {
    double disc_lr = 0.0;
    FreezeSchedule schedule;
    std::size_t trainable_params = 0;
    std::vector<MemberOutcome> members;
    bool excluded = false;
    std::string status = "ok";
};

struct SweepOptions {
    int jobs = 1;
    bool keep_models = false;
    /// Called once per cell after all members finished; may inspect
    /// `members[i].model` (present for non-divergent members).
    std::function<void(SweepCell&)> evaluate;
};

/// Runs `pool.size()` independent tasks on up to `jobs` threads.
inline void run_parallel(std::size_t count, int jobs, const std::function<void(std::size_t)>& task)
{
    const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, jobs)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w)
        threads.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < count;) {
                try {
                    task(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// Adapts every ensemble member under every (lr, schedule) cell, lr-major.
/// Member k always uses seed `member_seeds[k]`, so a one-cell grid is
/// identical to a direct adapt call with that configuration. Divergent
/// members are flagged; a cell with fewer than `min_members` survivors is
/// marked excluded. Nothing here is fatal per cell.
inline std::vector<SweepCell> sweep(std::span<const GeneratorModel> source_models,
                                    std::span<const std::uint64_t> member_seeds,
                                    std::span<const Image> source_inputs, std::span<const Image> target_inputs,
                                    std::span<const double> disc_lrs, std::span<const FreezeSchedule> schedules,
                                    const AdaptConfig& base, const SweepOptions& options = {},
                                    std::size_t min_members = 1)
{
    if (disc_lrs.empty() || schedules.empty()) throw ConfigError("sweep: learning-rate and schedule grids must be nonempty");
    if (source_models.empty() || source_models.size() != member_seeds.size())
        throw ConfigError("sweep: need one seed per source model");
    std::vector<SweepCell> cells;
    for (double lr : disc_lrs)
        for (const auto& sched : schedules) {
            SweepCell cell;
            cell.disc_lr = lr;
            cell.schedule = sched;
            cell.trainable_params = trainable_param_count(source_models[0], sched);
            cell.members.resize(source_models.size());
            run_parallel(source_models.size(), options.jobs, [&](std::size_t k) {
                AdaptConfig cfg = base;
                cfg.disc_lr = lr;
                cfg.schedule = sched;
                cfg.seed = member_seeds[k];
                AdaptationRun run = adapt(source_models[k], source_inputs, target_inputs, cfg);
                MemberOutcome& m = cell.members[k];
                m.member = k;
                m.seed = member_seeds[k];
                m.status = run.status;
                m.message = run.message;
                m.history = std::move(run.history);
                m.checksum = checksum_hex(parameter_checksum(run.target_model));
                if (run.status == RunStatus::Ok) m.model = std::move(run.target_model);
            });
            const auto ok = static_cast<std::size_t>(std::count_if(
                cell.members.begin(), cell.members.end(), [](const MemberOutcome& m) { return m.status == RunStatus::Ok; }));
            if (ok < min_members) {
                cell.excluded = true;
                cell.status = "excluded";
            }
            if (options.evaluate) options.evaluate(cell);
            if (!options.keep_models)
                for (auto& m : cell.members) m.model.reset();
            cells.push_back(std::move(cell));
        }
    return cells;
}

} // namespace sitadda
