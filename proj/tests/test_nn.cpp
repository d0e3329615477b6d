// Finite-difference checks of the hand-written backward passes.

#include <catch_amalgamated.hpp>

#include <sitadda/model.hpp>
#include <sitadda/nn.hpp>
#include <sitadda/rng.hpp>

#include <cmath>
#include <functional>

using namespace sitadda;

namespace {

void fill_normal(std::vector<float>& v, Rng& rng, double sd)
{
    for (float& x : v) x = static_cast<float>(normal(rng, 0.0, sd));
}

nn::Tensor random_tensor(int c, int h, int w, Rng& rng, double sd = 1.0)
{
    nn::Tensor t(c, h, w);
    fill_normal(t.data, rng, sd);
    return t;
}

double dot(const std::vector<float>& a, const std::vector<float>& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

// Central difference of `loss` w.r.t. *value.
double numeric_grad(float* value, const std::function<double()>& loss, float eps = 1e-2f)
{
    const float saved = *value;
    *value = saved + eps;
    const double up = loss();
    *value = saved - eps;
    const double down = loss();
    *value = saved;
    return (up - down) / (2.0 * eps);
}

void require_close(double analytic, double numeric)
{
    INFO("analytic " << analytic << " numeric " << numeric);
    REQUIRE(std::abs(analytic - numeric) <= 2e-2 * std::max(1.0, std::abs(numeric)));
}

struct BlockCase {
    nn::BlockSpec spec;
    int size;
};

} // namespace

TEST_CASE("block backward matches finite differences", "[nn][grad]")
{
    Rng rng = make_rng(7);
    std::vector<BlockCase> cases;
    {
        nn::BlockSpec s;
        s.in_channels = 2;
        s.out_channels = 3;
        s.activation = nn::Activation::Tanh;
        cases.push_back({s, 6});
        s.norm = true;
        cases.push_back({s, 6});
        s.kind = nn::ConvKind::Transposed;
        cases.push_back({s, 3});
        s.norm = false;
        s.activation = nn::Activation::LeakyRelu;
        cases.push_back({s, 3});
        nn::BlockSpec head;
        head.in_channels = 3;
        head.out_channels = 1;
        head.kernel = 1;
        head.stride = 1;
        head.pad = 0;
        cases.push_back({head, 4});
    }

    for (const auto& c : cases) {
        nn::ConvBlock block(c.spec);
        fill_normal(block.params[nn::kWeight], rng, 0.5);
        fill_normal(block.params[nn::kBias], rng, 0.1);
        for (float& g : block.params[nn::kGamma]) g = static_cast<float>(1.0 + normal(rng, 0.0, 0.2));
        fill_normal(block.params[nn::kBeta], rng, 0.1);
        nn::Tensor x = random_tensor(c.spec.in_channels, c.size, c.size, rng);

        nn::BlockCache cache;
        nn::Tensor y = nn::block_forward(block, x, &cache);
        std::vector<float> w(y.size());
        fill_normal(w, rng, 1.0);
        auto loss = [&] { return dot(nn::block_forward(block, x).data, w); };

        nn::Tensor gout(y.channels, y.height, y.width);
        gout.data = w;
        nn::ParamSet grads = nn::zero_like(block.params);
        nn::Tensor gin = nn::block_backward(block, cache, gout, &grads, true);

        for (std::size_t i = 0; i < x.size(); i += 3) require_close(gin.data[i], numeric_grad(&x.data[i], loss));
        for (std::size_t slot = 0; slot < nn::kParamSlots; ++slot)
            for (std::size_t i = 0; i < block.params[slot].size(); i += 2)
                require_close(grads[slot][i], numeric_grad(&block.params[slot][i], loss));
    }
}

TEST_CASE("generator backward matches finite differences", "[nn][grad]")
{
    GeneratorConfig cfg;
    cfg.depth = 3;
    cfg.base_channels = 2;
    cfg.channel_cap = 4;
    GeneratorModel g(cfg);
    g.initialize(3);
    Rng rng = make_rng(11);
    for (auto& b : g.blocks()) fill_normal(b.params[nn::kWeight], rng, 0.4);

    nn::Tensor x = random_tensor(1, 8, 8, rng);
    nn::Tensor target = random_tensor(1, 8, 8, rng, 0.5);
    auto loss = [&] {
        nn::Tensor y = g.forward(x);
        return nn::mse_loss(y.data, target.data, {});
    };

    GeneratorCache cache;
    nn::Tensor y = g.forward(x, &cache);
    nn::Tensor gy(1, 8, 8);
    nn::mse_loss(y.data, target.data, gy.data);
    std::vector<bool> all(g.block_count(), true);
    auto grads = g.zero_grads();
    g.backward(cache, gy, grads, all);

    for (std::size_t b = 0; b < g.block_count(); ++b)
        for (std::size_t slot = 0; slot < nn::kParamSlots; ++slot) {
            auto& p = g.blocks()[b].params[slot];
            for (std::size_t i = 0; i < p.size(); i += 5) require_close(grads[b][slot][i], numeric_grad(&p[i], loss));
        }

    SECTION("frozen blocks receive no gradient and trainable ones match the full pass")
    {
        std::vector<bool> first_two(g.block_count(), false);
        first_two[0] = first_two[1] = true;
        auto partial = g.zero_grads();
        g.backward(cache, gy, partial, first_two);
        REQUIRE(partial[0] == grads[0]);
        REQUIRE(partial[1] == grads[1]);
        for (std::size_t b = 2; b < g.block_count(); ++b) REQUIRE(partial[b] == g.zero_grads()[b]);
    }
}

TEST_CASE("discriminator input gradient matches finite differences", "[nn][grad]")
{
    DiscriminatorConfig cfg;
    cfg.num_layers = 2;
    cfg.base_channels = 2;
    DiscriminatorModel d(cfg);
    d.initialize(5);
    Rng rng = make_rng(13);
    for (auto& b : d.blocks()) fill_normal(b.params[nn::kWeight], rng, 0.5);
    nn::Tensor y = random_tensor(1, 8, 8, rng);
    auto loss = [&] {
        nn::Tensor logits = d.forward(y);
        return nn::bce_with_logits(logits.data, 1.0f, {});
    };
    DiscriminatorCache cache;
    nn::Tensor logits = d.forward(y, &cache);
    nn::Tensor gl(logits.channels, logits.height, logits.width);
    nn::bce_with_logits(logits.data, 1.0f, gl.data);
    auto grads = d.zero_grads();
    nn::Tensor gy = d.backward(cache, gl, &grads, true);
    for (std::size_t i = 0; i < y.size(); i += 2) require_close(gy.data[i], numeric_grad(&y.data[i], loss, 1e-2f));
    for (std::size_t b = 0; b < d.blocks().size(); ++b) {
        auto& w = d.blocks()[b].params[nn::kWeight];
        for (std::size_t i = 0; i < w.size(); i += 3) require_close(grads[b][nn::kWeight][i], numeric_grad(&w[i], loss));
    }
}

TEST_CASE("losses", "[nn]")
{
    std::vector<float> p{0.5f, -0.5f}, t{0.5f, 0.5f}, g(2);
    REQUIRE(nn::mse_loss(p, t, g) == Catch::Approx(0.5));
    REQUIRE(g[0] == 0.0f);
    REQUIRE(g[1] == Catch::Approx(-1.0));

    std::vector<float> z{0.0f};
    std::vector<float> gz(1);
    REQUIRE(nn::bce_with_logits(z, 1.0f, gz) == Catch::Approx(std::log(2.0)));
    REQUIRE(gz[0] == Catch::Approx(-0.5));
    // Large logits stay finite.
    std::vector<float> big{80.0f, -80.0f};
    REQUIRE(std::isfinite(nn::bce_with_logits(big, 0.0f, {})));
}

TEST_CASE("adam with zero learning rate leaves parameters bit-identical", "[nn]")
{
    nn::BlockSpec s;
    s.in_channels = 1;
    s.out_channels = 2;
    s.norm = true;
    std::vector<nn::ConvBlock> blocks{nn::ConvBlock(s)};
    Rng rng = make_rng(1);
    fill_normal(blocks[0].params[nn::kWeight], rng, 1.0);
    auto before = blocks;
    std::vector<nn::ParamSet> grads{nn::zero_like(blocks[0].params)};
    fill_normal(grads[0][nn::kWeight], rng, 1.0);
    nn::AdamState state(blocks);
    nn::adam_step(blocks, grads, state, {}, 0.0, {true});
    REQUIRE(blocks == before);
    nn::adam_step(blocks, grads, state, {}, 1e-3, {false});
    REQUIRE(blocks == before);
    nn::adam_step(blocks, grads, state, {}, 1e-3, {true});
    REQUIRE_FALSE(blocks == before);
}
