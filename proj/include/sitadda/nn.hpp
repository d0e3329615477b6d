#pragma once

// Minimal CPU building blocks for the translator and the critic: strided
// convolutions, transposed convolutions, instance normalization, pointwise
// activations, the two training losses and Adam. Everything works on one
// sample at a time (CHW); batches are formed by accumulating gradients.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace sitadda::nn {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Dense CHW activation tensor for a single sample.
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    Tensor() = default;
    Tensor(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill)
    {
    }

    [[nodiscard]] int plane() const noexcept { return height * width; }
    [[nodiscard]] std::size_t size() const noexcept { return data.size(); }
    float* channel(int c) noexcept { return data.data() + static_cast<std::size_t>(c) * plane(); }
    [[nodiscard]] const float* channel(int c) const noexcept
    {
        return data.data() + static_cast<std::size_t>(c) * plane();
    }
};

/// Channel-wise concatenation [a; b].
inline Tensor concat(const Tensor& a, const Tensor& b)
{
    Tensor out(a.channels + b.channels, a.height, a.width);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

enum class Activation { None, LeakyRelu, Relu, Tanh };
enum class NormKind { None, Instance };

inline const char* to_string(NormKind k) { return k == NormKind::Instance ? "instance" : "none"; }
inline NormKind norm_kind_from_string(const std::string& s)
{
    if (s == "instance") return NormKind::Instance;
    if (s == "none") return NormKind::None;
    throw ConfigError("unknown norm kind '" + s + "' (expected instance|none)");
}

enum class ConvKind { Conv, Transposed };

struct BlockSpec {
    ConvKind kind = ConvKind::Conv;
    int in_channels = 1;
    int out_channels = 1;
    int kernel = 4;
    int stride = 2;
    int pad = 1;
    bool norm = false;
    Activation activation = Activation::None;
    float leaky_slope = 0.2f;

    [[nodiscard]] int out_size(int in) const noexcept
    {
        return kind == ConvKind::Conv ? (in + 2 * pad - kernel) / stride + 1 : (in - 1) * stride - 2 * pad + kernel;
    }
    [[nodiscard]] std::size_t weight_count() const noexcept
    {
        return static_cast<std::size_t>(in_channels) * out_channels * kernel * kernel;
    }
    bool operator==(const BlockSpec&) const = default;
};

enum ParamSlot : std::size_t { kWeight = 0, kBias = 1, kGamma = 2, kBeta = 3 };
inline constexpr std::size_t kParamSlots = 4;
inline constexpr std::array<const char*, kParamSlots> kParamNames{"weight", "bias", "gamma", "beta"};

/// Parameter (or gradient, or optimizer moment) storage of one block.
/// Conv weights are laid out (out, in, k, k); transposed-conv weights
/// (in, out, k, k). gamma/beta are empty when the block has no norm.
using ParamSet = std::array<std::vector<float>, kParamSlots>;

inline ParamSet zero_like(const ParamSet& p)
{
    ParamSet z;
    for (std::size_t i = 0; i < kParamSlots; ++i) z[i].assign(p[i].size(), 0.0f);
    return z;
}

inline std::size_t param_count(const ParamSet& p)
{
    std::size_t n = 0;
    for (const auto& v : p) n += v.size();
    return n;
}

struct ConvBlock {
    BlockSpec spec;
    ParamSet params;

    ConvBlock() = default;
    explicit ConvBlock(const BlockSpec& s) : spec(s)
    {
        params[kWeight].assign(s.weight_count(), 0.0f);
        params[kBias].assign(static_cast<std::size_t>(s.out_channels), 0.0f);
        if (s.norm) {
            params[kGamma].assign(static_cast<std::size_t>(s.out_channels), 1.0f);
            params[kBeta].assign(static_cast<std::size_t>(s.out_channels), 0.0f);
        }
    }
    bool operator==(const ConvBlock&) const = default;
};

/// Values kept from a training-mode forward pass for the backward pass.
struct BlockCache {
    std::vector<float> lowered; // im2col(input) for Conv, raw input for Transposed
    int in_height = 0;
    int in_width = 0;
    std::vector<float> xhat;    // normalized pre-affine values
    std::vector<float> inv_std; // per channel
    Tensor out;                 // post-activation
};

namespace detail {

/// im2col for a (C,H,W) input: rows are (c, ky, kx), columns output positions.
inline void im2col(const float* x, int channels, int h, int w, int kernel, int stride, int pad, int out_h,
                   int out_w, float* cols)
{
    const int positions = out_h * out_w;
    for (int c = 0; c < channels; ++c) {
        const float* plane = x + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                float* row = cols + (static_cast<std::size_t>(c) * kernel * kernel + ky * kernel + kx) * positions;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    float* dst = row + static_cast<std::size_t>(oy) * out_w;
                    if (iy < 0 || iy >= h) {
                        std::fill_n(dst, out_w, 0.0f);
                        continue;
                    }
                    const float* src = plane + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatters columns back onto a zeroed (C,H,W) buffer.
inline void col2im(const float* cols, int channels, int h, int w, int kernel, int stride, int pad, int out_h,
                   int out_w, float* x)
{
    std::fill_n(x, static_cast<std::size_t>(channels) * h * w, 0.0f);
    const int positions = out_h * out_w;
    for (int c = 0; c < channels; ++c) {
        float* plane = x + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                const float* row =
                    cols + (static_cast<std::size_t>(c) * kernel * kernel + ky * kernel + kx) * positions;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    const float* src = row + static_cast<std::size_t>(oy) * out_w;
                    float* dst = plane + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

inline float activate(Activation a, float v, float slope)
{
    switch (a) {
    case Activation::LeakyRelu: return v > 0.0f ? v : slope * v;
    case Activation::Relu: return v > 0.0f ? v : 0.0f;
    case Activation::Tanh: return std::tanh(v);
    case Activation::None: break;
    }
    return v;
}

/// Derivative expressed through the activation output.
inline float activate_grad(Activation a, float out, float slope)
{
    switch (a) {
    case Activation::LeakyRelu: return out > 0.0f ? 1.0f : slope;
    case Activation::Relu: return out > 0.0f ? 1.0f : 0.0f;
    case Activation::Tanh: return 1.0f - out * out;
    case Activation::None: break;
    }
    return 1.0f;
}

inline constexpr double kNormEps = 1e-5;

} // namespace detail

/// Convolution (or transposed convolution) plus optional norm and activation.
/// When `cache` is non-null everything needed by block_backward is kept.
inline Tensor block_forward(const ConvBlock& block, const Tensor& x, BlockCache* cache = nullptr)
{
    const BlockSpec& s = block.spec;
    if (x.channels != s.in_channels)
        throw ShapeError("block expects " + std::to_string(s.in_channels) + " input channels, got " +
                         std::to_string(x.channels));
    const int oh = s.out_size(x.height);
    const int ow = s.out_size(x.width);
    if (oh <= 0 || ow <= 0) throw ShapeError("input too small for block: spatial size would be zero");

    Tensor z(s.out_channels, oh, ow);
    const int k2 = s.kernel * s.kernel;
    std::vector<float> lowered;
    if (s.kind == ConvKind::Conv) {
        lowered.resize(static_cast<std::size_t>(s.in_channels) * k2 * oh * ow);
        detail::im2col(x.data.data(), x.channels, x.height, x.width, s.kernel, s.stride, s.pad, oh, ow,
                       lowered.data());
        ConstMatrixMap w(block.params[kWeight].data(), s.out_channels, s.in_channels * k2);
        ConstMatrixMap cols(lowered.data(), s.in_channels * k2, oh * ow);
        MatrixMap out(z.data.data(), s.out_channels, oh * ow);
        out.noalias() = w * cols;
    } else {
        ConstMatrixMap w(block.params[kWeight].data(), s.in_channels, s.out_channels * k2);
        ConstMatrixMap in(x.data.data(), s.in_channels, x.height * x.width);
        RowMatrix cols = w.transpose() * in;
        detail::col2im(cols.data(), s.out_channels, oh, ow, s.kernel, s.stride, s.pad, x.height, x.width,
                       z.data.data());
        if (cache) lowered = x.data;
    }

    const int plane = z.plane();
    std::vector<float> xhat;
    std::vector<float> inv_std;
    if (s.norm) {
        if (cache) {
            xhat.resize(z.size());
            inv_std.resize(static_cast<std::size_t>(s.out_channels));
        }
        for (int c = 0; c < s.out_channels; ++c) {
            float* p = z.channel(c);
            const float b = block.params[kBias][c];
            double sum = 0.0;
            for (int i = 0; i < plane; ++i) {
                p[i] += b;
                sum += p[i];
            }
            const double mean = sum / plane;
            double var = 0.0;
            for (int i = 0; i < plane; ++i) {
                const double d = p[i] - mean;
                var += d * d;
            }
            const double istd = 1.0 / std::sqrt(var / plane + detail::kNormEps);
            const float g = block.params[kGamma][c];
            const float be = block.params[kBeta][c];
            for (int i = 0; i < plane; ++i) {
                const auto h = static_cast<float>((p[i] - mean) * istd);
                if (cache) xhat[static_cast<std::size_t>(c) * plane + i] = h;
                p[i] = g * h + be;
            }
            if (cache) inv_std[c] = static_cast<float>(istd);
        }
    } else {
        for (int c = 0; c < s.out_channels; ++c) {
            float* p = z.channel(c);
            const float b = block.params[kBias][c];
            for (int i = 0; i < plane; ++i) p[i] += b;
        }
    }

    if (s.activation != Activation::None)
        for (float& v : z.data) v = detail::activate(s.activation, v, s.leaky_slope);

    if (cache) {
        cache->lowered = std::move(lowered);
        cache->in_height = x.height;
        cache->in_width = x.width;
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
        cache->out = z;
    }
    return z;
}

/// Back-propagates `grad_out` through a block. Parameter gradients are
/// accumulated into `grads` when it is non-null; the input gradient is
/// returned only when `want_input_grad` is set (otherwise an empty tensor).
inline Tensor block_backward(const ConvBlock& block, const BlockCache& cache, Tensor grad_out, ParamSet* grads,
                             bool want_input_grad)
{
    const BlockSpec& s = block.spec;
    const int plane = grad_out.plane();
    const int oh = grad_out.height, ow = grad_out.width;

    if (s.activation != Activation::None) {
        const auto& out = cache.out.data;
        for (std::size_t i = 0; i < grad_out.size(); ++i)
            grad_out.data[i] *= detail::activate_grad(s.activation, out[i], s.leaky_slope);
    }

    if (s.norm) {
        for (int c = 0; c < s.out_channels; ++c) {
            float* g = grad_out.channel(c);
            const float* h = cache.xhat.data() + static_cast<std::size_t>(c) * plane;
            double sum_g = 0.0, sum_gh = 0.0;
            for (int i = 0; i < plane; ++i) {
                sum_g += g[i];
                sum_gh += static_cast<double>(g[i]) * h[i];
            }
            if (grads) {
                (*grads)[kGamma][c] += static_cast<float>(sum_gh);
                (*grads)[kBeta][c] += static_cast<float>(sum_g);
            }
            // d/dz of gamma * (z - mean) * istd, with dxhat = g * gamma.
            const double gamma = block.params[kGamma][c];
            const double scale = gamma * cache.inv_std[c] / plane;
            for (int i = 0; i < plane; ++i)
                g[i] = static_cast<float>(scale * (plane * static_cast<double>(g[i]) - sum_g - h[i] * sum_gh));
        }
    }

    const int k2 = s.kernel * s.kernel;
    if (s.kind == ConvKind::Conv) {
        ConstMatrixMap dz(grad_out.data.data(), s.out_channels, plane);
        if (grads) {
            ConstMatrixMap cols(cache.lowered.data(), s.in_channels * k2, plane);
            MatrixMap dw((*grads)[kWeight].data(), s.out_channels, s.in_channels * k2);
            dw.noalias() += dz * cols.transpose();
            for (int c = 0; c < s.out_channels; ++c) {
                const float* g = grad_out.channel(c);
                double acc = 0.0;
                for (int i = 0; i < plane; ++i) acc += g[i];
                (*grads)[kBias][c] += static_cast<float>(acc);
            }
        }
        if (!want_input_grad) return {};
        ConstMatrixMap w(block.params[kWeight].data(), s.out_channels, s.in_channels * k2);
        RowMatrix dcols = w.transpose() * dz;
        Tensor dx(s.in_channels, cache.in_height, cache.in_width);
        detail::col2im(dcols.data(), s.in_channels, cache.in_height, cache.in_width, s.kernel, s.stride, s.pad, oh,
                       ow, dx.data.data());
        return dx;
    }

    // Transposed: forward was col2im(W^T x), so the adjoint lowers grad_out.
    const int in_plane = cache.in_height * cache.in_width;
    std::vector<float> lowered(static_cast<std::size_t>(s.out_channels) * k2 * in_plane);
    detail::im2col(grad_out.data.data(), s.out_channels, oh, ow, s.kernel, s.stride, s.pad, cache.in_height,
                   cache.in_width, lowered.data());
    ConstMatrixMap dcols(lowered.data(), s.out_channels * k2, in_plane);
    if (grads) {
        ConstMatrixMap in(cache.lowered.data(), s.in_channels, in_plane);
        MatrixMap dw((*grads)[kWeight].data(), s.in_channels, s.out_channels * k2);
        dw.noalias() += in * dcols.transpose();
        for (int c = 0; c < s.out_channels; ++c) {
            const float* g = grad_out.channel(c);
            double acc = 0.0;
            for (int i = 0; i < plane; ++i) acc += g[i];
            (*grads)[kBias][c] += static_cast<float>(acc);
        }
    }
    if (!want_input_grad) return {};
    ConstMatrixMap w(block.params[kWeight].data(), s.in_channels, s.out_channels * k2);
    Tensor dx(s.in_channels, cache.in_height, cache.in_width);
    MatrixMap dxm(dx.data.data(), s.in_channels, in_plane);
    dxm.noalias() = w * dcols;
    return dx;
}

/// Mean squared error over all pixels; writes dL/dpred into `grad` (scaled by `weight`).
inline double mse_loss(std::span<const float> pred, std::span<const float> target, std::span<float> grad,
                       double weight = 1.0)
{
    const double n = static_cast<double>(pred.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - target[i];
        acc += d * d;
        if (!grad.empty()) grad[i] = static_cast<float>(weight * 2.0 * d / n);
    }
    return acc / n;
}

/// Binary cross-entropy on logits against a constant label, mean over the
/// map; writes dL/dlogit into `grad` (scaled by `weight`) when non-empty.
inline double bce_with_logits(std::span<const float> logits, float label, std::span<float> grad,
                              double weight = 1.0)
{
    const double n = static_cast<double>(logits.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double z = logits[i];
        acc += std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
        if (!grad.empty()) {
            const double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
            grad[i] = static_cast<float>(weight * (sig - label) / n);
        }
    }
    return acc / n;
}

struct AdamSettings {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam moments for a list of blocks.
struct AdamState {
    std::vector<ParamSet> m;
    std::vector<ParamSet> v;
    long step = 0;

    AdamState() = default;
    explicit AdamState(const std::vector<ConvBlock>& blocks)
    {
        for (const auto& b : blocks) {
            m.push_back(zero_like(b.params));
            v.push_back(zero_like(b.params));
        }
    }
};

/// One Adam update over the blocks whose `trainable` flag is set. Frozen
/// blocks are never written. `lr` overrides the settings' learning rate.
inline void adam_step(std::vector<ConvBlock>& blocks, const std::vector<ParamSet>& grads, AdamState& state,
                      const AdamSettings& settings, double lr, const std::vector<bool>& trainable)
{
    ++state.step;
    const double bc1 = 1.0 - std::pow(settings.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(settings.beta2, static_cast<double>(state.step));
    const auto b1 = static_cast<float>(settings.beta1);
    const auto b2 = static_cast<float>(settings.beta2);
    const auto step_size = static_cast<float>(lr / bc1);
    const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
    const auto eps = static_cast<float>(settings.eps);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (!trainable[b]) continue;
        for (std::size_t slot = 0; slot < kParamSlots; ++slot) {
            auto& p = blocks[b].params[slot];
            const auto& g = grads[b][slot];
            auto& m = state.m[b][slot];
            auto& v = state.v[b][slot];
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = b1 * m[i] + (1.0f - b1) * g[i];
                v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
                p[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
            }
        }
    }
}

} // namespace sitadda::nn
