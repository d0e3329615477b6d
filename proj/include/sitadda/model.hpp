#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "errors.hpp"
#include "image.hpp"
#include "nn.hpp"
#include "rng.hpp"

namespace sitadda {

// ---------------------------------------------------------------------------
// Layer registry and freeze schedules
// ---------------------------------------------------------------------------

struct RegistryEntry {
    std::string name;
    std::size_t param_count = 0;
    bool operator==(const RegistryEntry&) const = default;
};

/// Ordered conv blocks f1..fn in forward-pass order: encoder from the input
/// down to the bottleneck, then decoder from the bottleneck to the output.
struct LayerRegistry {
    std::vector<RegistryEntry> blocks;

    [[nodiscard]] std::size_t size() const noexcept { return blocks.size(); }
    [[nodiscard]] std::size_t total_params() const noexcept
    {
        std::size_t n = 0;
        for (const auto& b : blocks) n += b.param_count;
        return n;
    }
    bool operator==(const LayerRegistry&) const = default;
};

enum class FreezeKind { TrainablePrefix, TrainableSuffix, TrainableSingle, Mask };

/// Which registry blocks the adversarial stage may update.
///   TrainablePrefix(k): f1..fk trainable (k = n is conventional ADDA, k = 0 freezes all)
///   TrainableSuffix(k): the last k blocks trainable
///   TrainableSingle(k): only fk trainable (1-based)
///   Mask: explicit per-block flags
struct FreezeSchedule {
    FreezeKind kind = FreezeKind::TrainablePrefix;
    int k = 0;
    std::vector<bool> mask;

    static FreezeSchedule prefix(int k) { return {FreezeKind::TrainablePrefix, k, {}}; }
    static FreezeSchedule suffix(int k) { return {FreezeKind::TrainableSuffix, k, {}}; }
    static FreezeSchedule single(int k) { return {FreezeKind::TrainableSingle, k, {}}; }
    static FreezeSchedule explicit_mask(std::vector<bool> m) { return {FreezeKind::Mask, 0, std::move(m)}; }

    bool operator==(const FreezeSchedule&) const = default;
};

inline std::string to_string(const FreezeSchedule& s)
{
    switch (s.kind) {
    case FreezeKind::TrainablePrefix: return "prefix:" + std::to_string(s.k);
    case FreezeKind::TrainableSuffix: return "suffix:" + std::to_string(s.k);
    case FreezeKind::TrainableSingle: return "single:" + std::to_string(s.k);
    case FreezeKind::Mask: {
        std::string out = "mask:";
        for (bool b : s.mask) out += b ? '1' : '0';
        return out;
    }
    }
    return {};
}

/// Parses "prefix:3", "suffix:2", "single:5", "mask:1100..." or a bare
/// integer (shorthand for prefix).
inline FreezeSchedule parse_schedule(const std::string& text)
{
    const auto colon = text.find(':');
    const std::string head = colon == std::string::npos ? "prefix" : text.substr(0, colon);
    const std::string tail = colon == std::string::npos ? text : text.substr(colon + 1);
    if (head == "mask") {
        std::vector<bool> m;
        for (char c : tail) {
            if (c != '0' && c != '1') throw ConfigError("mask schedule must contain only 0/1: '" + text + "'");
            m.push_back(c == '1');
        }
        return FreezeSchedule::explicit_mask(std::move(m));
    }
    int k = 0;
    try {
        std::size_t used = 0;
        k = std::stoi(tail, &used);
        if (used != tail.size()) throw std::invalid_argument(tail);
    } catch (const std::exception&) {
        throw ConfigError("bad freeze schedule '" + text + "'");
    }
    if (head == "prefix") return FreezeSchedule::prefix(k);
    if (head == "suffix") return FreezeSchedule::suffix(k);
    if (head == "single") return FreezeSchedule::single(k);
    throw ConfigError("unknown freeze schedule kind '" + head + "'");
}

/// Resolves a schedule into a per-block trainability mask of length n.
inline std::vector<bool> resolve_freeze(const FreezeSchedule& schedule, const LayerRegistry& registry)
{
    const int n = static_cast<int>(registry.size());
    auto out_of_range = [&](const char* what) {
        return IndexError(std::string(what) + " index " + std::to_string(schedule.k) + " outside [0, " +
                          std::to_string(n) + "]");
    };
    std::vector<bool> mask(static_cast<std::size_t>(n), false);
    switch (schedule.kind) {
    case FreezeKind::TrainablePrefix:
        if (schedule.k < 0 || schedule.k > n) throw out_of_range("prefix");
        for (int i = 0; i < schedule.k; ++i) mask[i] = true;
        break;
    case FreezeKind::TrainableSuffix:
        if (schedule.k < 0 || schedule.k > n) throw out_of_range("suffix");
        for (int i = n - schedule.k; i < n; ++i) mask[i] = true;
        break;
    case FreezeKind::TrainableSingle:
        if (schedule.k < 1 || schedule.k > n) throw out_of_range("single");
        mask[schedule.k - 1] = true;
        break;
    case FreezeKind::Mask:
        if (schedule.mask.size() != mask.size())
            throw IndexError("mask length " + std::to_string(schedule.mask.size()) + " != registry length " +
                             std::to_string(n));
        mask = schedule.mask;
        break;
    }
    return mask;
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

struct GeneratorConfig {
    int depth = 8;
    int base_channels = 64;
    int channel_cap = 512;
    nn::NormKind norm = nn::NormKind::Instance;
    float leaky_slope = 0.2f;
    // The outermost input conv and the bottleneck conv carry no norm,
    // matching the usual U-Net translator layout.
    bool norm_input_block = false;
    bool norm_bottleneck = false;

    bool operator==(const GeneratorConfig&) const = default;
};

/// Forward activations of every block, kept for backpropagation.
struct GeneratorCache {
    std::vector<nn::BlockCache> blocks;
};

/// U-Net translator. blocks[0..depth) are the encoder (input -> bottleneck),
/// blocks[depth..2*depth) the decoder (bottleneck -> output). Decoder level
/// j >= 2 consumes [decoder j-1 output ; encoder depth-j+1 output].
class GeneratorModel {
public:
    GeneratorModel() = default;

    explicit GeneratorModel(const GeneratorConfig& cfg) : cfg_(cfg)
    {
        if (cfg.depth < 1) throw ConfigError("generator depth must be >= 1");
        if (cfg.base_channels < 1 || cfg.channel_cap < 1) throw ConfigError("generator channel counts must be >= 1");
        const int d = cfg.depth;
        std::vector<int> enc(static_cast<std::size_t>(d) + 1, 1);
        for (int i = 1; i <= d; ++i) {
            long ch = static_cast<long>(cfg.base_channels) << std::min(i - 1, 30);
            enc[i] = static_cast<int>(std::min<long>(ch, cfg.channel_cap));
        }
        const bool normed = cfg.norm != nn::NormKind::None;
        for (int i = 1; i <= d; ++i) {
            nn::BlockSpec s;
            s.kind = nn::ConvKind::Conv;
            s.in_channels = enc[i - 1];
            s.out_channels = enc[i];
            s.norm = normed && (i > 1 || cfg.norm_input_block) && (i < d || cfg.norm_bottleneck);
            s.activation = nn::Activation::LeakyRelu;
            s.leaky_slope = cfg.leaky_slope;
            blocks_.emplace_back(s);
            names_.push_back("enc" + std::to_string(i));
        }
        for (int j = 1; j <= d; ++j) {
            nn::BlockSpec s;
            s.kind = nn::ConvKind::Transposed;
            s.in_channels = j == 1 ? enc[d] : 2 * enc[d - j + 1];
            const bool last = j == d;
            s.out_channels = last ? 1 : enc[d - j];
            s.norm = normed && !last;
            s.activation = last ? nn::Activation::Tanh : nn::Activation::Relu;
            blocks_.emplace_back(s);
            names_.push_back("dec" + std::to_string(j));
        }
    }

    [[nodiscard]] const GeneratorConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] int depth() const noexcept { return cfg_.depth; }
    [[nodiscard]] int divisor() const noexcept { return 1 << cfg_.depth; }
    [[nodiscard]] std::size_t block_count() const noexcept { return blocks_.size(); }
    [[nodiscard]] const std::vector<nn::ConvBlock>& blocks() const noexcept { return blocks_; }
    std::vector<nn::ConvBlock>& blocks() noexcept { return blocks_; }
    [[nodiscard]] const std::vector<std::string>& block_names() const noexcept { return names_; }

    [[nodiscard]] LayerRegistry registry() const
    {
        LayerRegistry r;
        for (std::size_t i = 0; i < blocks_.size(); ++i) r.blocks.push_back({names_[i], nn::param_count(blocks_[i].params)});
        return r;
    }

    [[nodiscard]] std::size_t param_count() const
    {
        std::size_t n = 0;
        for (const auto& b : blocks_) n += nn::param_count(b.params);
        return n;
    }

    /// pix2pix-style init: conv weights N(0, 0.02), gamma N(1, 0.02), zero biases.
    void initialize(std::uint64_t seed)
    {
        Rng rng = make_rng(seed);
        for (auto& b : blocks_) {
            for (float& w : b.params[nn::kWeight]) w = static_cast<float>(normal(rng, 0.0, 0.02));
            std::fill(b.params[nn::kBias].begin(), b.params[nn::kBias].end(), 0.0f);
            for (float& g : b.params[nn::kGamma]) g = static_cast<float>(normal(rng, 1.0, 0.02));
            std::fill(b.params[nn::kBeta].begin(), b.params[nn::kBeta].end(), 0.0f);
        }
    }

    void check_input(int height, int width) const
    {
        const int div = divisor();
        if (height % div != 0 || width % div != 0)
            throw ShapeError("generator input " + std::to_string(height) + "x" + std::to_string(width) +
                             " must be divisible by " + std::to_string(div) + " (2^depth, depth=" +
                             std::to_string(cfg_.depth) + ")");
    }

    nn::Tensor forward(const nn::Tensor& x, GeneratorCache* cache = nullptr) const
    {
        if (x.channels != 1) throw ShapeError("generator expects a single-channel input");
        check_input(x.height, x.width);
        const int d = cfg_.depth;
        if (cache) cache->blocks.assign(blocks_.size(), {});
        auto slot = [&](std::size_t i) { return cache ? &cache->blocks[i] : nullptr; };

        std::vector<nn::Tensor> enc(static_cast<std::size_t>(d));
        const nn::Tensor* cur = &x;
        for (int i = 0; i < d; ++i) {
            enc[i] = nn::block_forward(blocks_[i], *cur, slot(i));
            cur = &enc[i];
        }
        nn::Tensor dec = nn::block_forward(blocks_[d], enc[d - 1], slot(d));
        for (int j = 2; j <= d; ++j) {
            nn::Tensor in = nn::concat(dec, enc[d - j]);
            dec = nn::block_forward(blocks_[d + j - 1], in, slot(d + j - 1));
        }
        return dec;
    }

    /// Back-propagates dL/doutput. Weight gradients are accumulated only for
    /// blocks flagged in `trainable`; data gradients are propagated only as
    /// far as some trainable block still needs them.
    void backward(const GeneratorCache& cache, const nn::Tensor& grad_out, std::vector<nn::ParamSet>& grads,
                  const std::vector<bool>& trainable) const
    {
        const int d = cfg_.depth;
        const int n = 2 * d;
        int first_trainable = n;
        for (int i = 0; i < n; ++i)
            if (trainable[i]) {
                first_trainable = i;
                break;
            }
        if (first_trainable == n) return;
        // Block r needs its input gradient iff some trainable block precedes it.
        auto needs_input = [&](int r) { return first_trainable < r; };

        std::vector<nn::Tensor> enc_grad(static_cast<std::size_t>(d));
        nn::Tensor g = grad_out;
        for (int j = d; j >= 1; --j) {
            const int r = d + j - 1;
            if (r < first_trainable) break;
            nn::Tensor gin = nn::block_backward(blocks_[r], cache.blocks[r], std::move(g),
                                                trainable[r] ? &grads[r] : nullptr, needs_input(r));
            if (!needs_input(r)) return;
            if (j == 1) {
                accumulate(enc_grad[d - 1], gin);
                break;
            }
            // Split [decoder j-1 ; encoder d-j+1] (0-based encoder index d-j).
            const int prev_ch = blocks_[r - 1].spec.out_channels;
            nn::Tensor prev(prev_ch, gin.height, gin.width);
            nn::Tensor skip(gin.channels - prev_ch, gin.height, gin.width);
            std::copy_n(gin.data.begin(), prev.size(), prev.data.begin());
            std::copy(gin.data.begin() + static_cast<std::ptrdiff_t>(prev.size()), gin.data.end(), skip.data.begin());
            accumulate(enc_grad[d - j], skip);
            g = std::move(prev);
        }
        for (int i = d - 1; i >= 0; --i) {
            if (i < first_trainable) break;
            nn::Tensor gin = nn::block_backward(blocks_[i], cache.blocks[i], std::move(enc_grad[i]),
                                                trainable[i] ? &grads[i] : nullptr, needs_input(i));
            if (i > 0 && needs_input(i)) accumulate(enc_grad[i - 1], gin);
        }
    }

    [[nodiscard]] std::vector<nn::ParamSet> zero_grads() const
    {
        std::vector<nn::ParamSet> g;
        for (const auto& b : blocks_) g.push_back(nn::zero_like(b.params));
        return g;
    }

    /// Same architecture (config and per-block specs).
    [[nodiscard]] bool same_architecture(const GeneratorModel& other) const
    {
        if (!(cfg_ == other.cfg_) || blocks_.size() != other.blocks_.size()) return false;
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            if (!(blocks_[i].spec == other.blocks_[i].spec)) return false;
        return true;
    }

    bool operator==(const GeneratorModel& o) const { return cfg_ == o.cfg_ && blocks_ == o.blocks_; }

private:
    static void accumulate(nn::Tensor& into, const nn::Tensor& add)
    {
        if (into.data.empty()) {
            into = add;
            return;
        }
        for (std::size_t i = 0; i < into.size(); ++i) into.data[i] += add.data[i];
    }

    GeneratorConfig cfg_;
    std::vector<nn::ConvBlock> blocks_;
    std::vector<std::string> names_;
};

inline GeneratorModel build_generator(int depth, int base_channels, nn::NormKind norm, int channel_cap = 512)
{
    GeneratorConfig cfg;
    cfg.depth = depth;
    cfg.base_channels = base_channels;
    cfg.channel_cap = channel_cap;
    cfg.norm = norm;
    return GeneratorModel(cfg);
}

inline nn::Tensor to_tensor(const Image& img)
{
    nn::Tensor t(1, img.height, img.width);
    t.data = img.values;
    return t;
}

inline Image to_image(const nn::Tensor& t, Domain domain)
{
    if (t.channels != 1) throw ShapeError("expected a single-channel tensor");
    return Image(t.height, t.width, domain, t.data);
}

/// Generator forward on a normalized image; output has the input's shape.
inline Image generator_forward(const GeneratorModel& model, const Image& x)
{
    if (x.domain != Domain::NormNeg1To1) throw ConfigError("generator input must be normalized to [-1,1]");
    return to_image(model.forward(to_tensor(x)), Domain::NormNeg1To1);
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

struct DiscriminatorConfig {
    int num_layers = 3;
    int base_channels = 64;
    int channel_cap = 512;
    nn::NormKind norm = nn::NormKind::Instance;
    float leaky_slope = 0.2f;
    bool norm_first_layer = false;

    bool operator==(const DiscriminatorConfig&) const = default;
};

struct DiscriminatorCache {
    std::vector<nn::BlockCache> blocks;
};

/// PatchGAN critic: `num_layers` stride-2 4x4 convs then a 1x1 head that
/// emits one logit per patch, an (H/2^L) x (W/2^L) map.
class DiscriminatorModel {
public:
    DiscriminatorModel() = default;

    explicit DiscriminatorModel(const DiscriminatorConfig& cfg) : cfg_(cfg)
    {
        if (cfg.num_layers < 1) throw ConfigError("discriminator needs at least one layer");
        if (cfg.base_channels < 1 || cfg.channel_cap < 1) throw ConfigError("discriminator channel counts must be >= 1");
        int in = 1;
        for (int l = 1; l <= cfg.num_layers; ++l) {
            nn::BlockSpec s;
            s.in_channels = in;
            s.out_channels =
                static_cast<int>(std::min<long>(static_cast<long>(cfg.base_channels) << std::min(l - 1, 30), cfg.channel_cap));
            s.norm = cfg.norm != nn::NormKind::None && (l > 1 || cfg.norm_first_layer);
            s.activation = nn::Activation::LeakyRelu;
            s.leaky_slope = cfg.leaky_slope;
            blocks_.emplace_back(s);
            in = s.out_channels;
        }
        nn::BlockSpec head;
        head.in_channels = in;
        head.out_channels = 1;
        head.kernel = 1;
        head.stride = 1;
        head.pad = 0;
        blocks_.emplace_back(head);
    }

    [[nodiscard]] const DiscriminatorConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] const std::vector<nn::ConvBlock>& blocks() const noexcept { return blocks_; }
    std::vector<nn::ConvBlock>& blocks() noexcept { return blocks_; }
    [[nodiscard]] int divisor() const noexcept { return 1 << cfg_.num_layers; }

    void initialize(std::uint64_t seed)
    {
        Rng rng = make_rng(seed);
        for (auto& b : blocks_) {
            for (float& w : b.params[nn::kWeight]) w = static_cast<float>(normal(rng, 0.0, 0.02));
            std::fill(b.params[nn::kBias].begin(), b.params[nn::kBias].end(), 0.0f);
            for (float& g : b.params[nn::kGamma]) g = static_cast<float>(normal(rng, 1.0, 0.02));
            std::fill(b.params[nn::kBeta].begin(), b.params[nn::kBeta].end(), 0.0f);
        }
    }

    nn::Tensor forward(const nn::Tensor& y, DiscriminatorCache* cache = nullptr) const
    {
        if (y.channels != 1) throw ShapeError("discriminator expects a single-channel input");
        const int div = divisor();
        if (y.height % div != 0 || y.width % div != 0)
            throw ShapeError("discriminator input " + std::to_string(y.height) + "x" + std::to_string(y.width) +
                             " must be divisible by " + std::to_string(div) + " (2^num_layers)");
        if (cache) cache->blocks.assign(blocks_.size(), {});
        nn::Tensor cur = y;
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            cur = nn::block_forward(blocks_[i], cur, cache ? &cache->blocks[i] : nullptr);
        return cur;
    }

    /// Back-propagates dL/dlogits. Parameter gradients go to `grads` when
    /// non-null; returns dL/dinput when `want_input_grad`.
    nn::Tensor backward(const DiscriminatorCache& cache, const nn::Tensor& grad_out, std::vector<nn::ParamSet>* grads,
                        bool want_input_grad) const
    {
        nn::Tensor g = grad_out;
        for (std::size_t i = blocks_.size(); i-- > 0;) {
            const bool need_in = i > 0 || want_input_grad;
            g = nn::block_backward(blocks_[i], cache.blocks[i], std::move(g), grads ? &(*grads)[i] : nullptr, need_in);
            if (!need_in) break;
        }
        return want_input_grad ? g : nn::Tensor{};
    }

    [[nodiscard]] std::vector<nn::ParamSet> zero_grads() const
    {
        std::vector<nn::ParamSet> g;
        for (const auto& b : blocks_) g.push_back(nn::zero_like(b.params));
        return g;
    }

    bool operator==(const DiscriminatorModel& o) const { return cfg_ == o.cfg_ && blocks_ == o.blocks_; }

private:
    DiscriminatorConfig cfg_;
    std::vector<nn::ConvBlock> blocks_;
};

/// Raw per-patch logits of the critic on an image.
inline nn::Tensor discriminator_forward(const DiscriminatorModel& model, const Image& y)
{
    return model.forward(to_tensor(y));
}

} // namespace sitadda
