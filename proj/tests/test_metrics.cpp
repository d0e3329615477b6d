#include <catch_amalgamated.hpp>

#include <sitadda/metrics.hpp>
#include <sitadda/stats.hpp>

#include "oracles.hpp"

using namespace sitadda;
using Catch::Approx;

namespace {

Image raw(int h, int w, std::vector<float> v) { return Image(h, w, Domain::Raw0To255, std::move(v)); }

Image constant(int h, int w, float v) { return Image(h, w, Domain::Raw0To255, std::vector<float>(h * w, v)); }

} // namespace

TEST_CASE("pearson examples and errors")
{
    const Image y = raw(1, 3, {1, 2, 3});
    CHECK(pearson(y, raw(1, 3, {1, 3, 2})) == Approx(0.5).margin(1e-12));
    CHECK(pearson(y, y) == Approx(1.0).margin(1e-12));
    CHECK_THROWS_AS(pearson(y, constant(1, 3, 4)), DegenerateError);
    CHECK(std::isnan(pearson_or_nan(y, constant(1, 3, 4))));
    CHECK_THROWS_AS(pearson(y, constant(3, 1, 4)), ShapeError);
}

TEST_CASE("pearson affine invariance and antisymmetry")
{
    std::mt19937_64 rng(11);
    for (int t = 0; t < 20; ++t) {
        auto [a, b] = oracle::random_pair(rng, 16, 16);
        Image scaled = b, negated = b;
        for (float& v : scaled.values) v = 3.0f * v + 7.0f;
        for (float& v : negated.values) v = -v;
        const double r = pearson(a, b);
        CHECK(pearson(a, scaled) == Approx(r).margin(1e-6));
        CHECK(pearson(a, negated) == Approx(-r).margin(1e-12));
        CHECK(r >= -1.0);
        CHECK(r <= 1.0);
    }
}

TEST_CASE("psnr examples")
{
    const Image y = constant(4, 4, 0);
    CHECK(std::isinf(psnr(y, y, 255)));
    CHECK(psnr(y, constant(4, 4, 255), 255) == Approx(0.0).margin(1e-12));
    CHECK(psnr(y, constant(4, 4, 1), 255) == Approx(48.13).margin(0.01));
    CHECK_THROWS_AS(psnr(y, y, 0), ConfigError);
    CHECK(dynamic_range(Domain::Raw0To255) == 255.0);
    CHECK(dynamic_range(Domain::NormNeg1To1) == 2.0);
}

TEST_CASE("ssim examples")
{
    std::mt19937_64 rng(5);
    auto [a, b] = oracle::random_pair(rng, 24, 24);
    CHECK(ssim(a, a) == Approx(1.0).margin(1e-12));
    CHECK(ssim(constant(16, 16, 0), constant(16, 16, 0)) == Approx(1.0).margin(1e-12));
    const SsimConfig cfg;
    const double ca = 40, cb = 90;
    const double expected = (2 * ca * cb + cfg.c1()) / (ca * ca + cb * cb + cfg.c1());
    CHECK(ssim(constant(16, 16, 40), constant(16, 16, 90)) == Approx(expected).margin(1e-9));
    CHECK_THROWS_AS(ssim(constant(8, 8, 0), constant(8, 8, 0)), ShapeError);
    SsimConfig even;
    even.window = 10;
    CHECK_THROWS_AS(ssim(a, b, even), ConfigError);
    const double s = ssim(a, b);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
}

TEST_CASE("metrics agree with brute-force references")
{
    std::mt19937_64 rng(2024);
    for (int t = 0; t < 12; ++t) {
        auto [a, b] = oracle::random_pair(rng, 32, 32);
        CHECK(pearson(a, b) == Approx(oracle::pearson(a, b)).margin(1e-6));
        CHECK(psnr(a, b, 255) == Approx(oracle::psnr(a, b, 255)).margin(1e-6));
        CHECK(ssim(a, b) == Approx(oracle::ssim(a, b)).margin(1e-6));
        CHECK(histogram_match(b, a) == oracle::histogram_match(b, a));
        CHECK(shannon_entropy(b) == Approx(oracle::entropy(b)).margin(1e-6));
        const auto s = sharpness_stats(b);
        const auto o = oracle::sharpness(b);
        CHECK(s.laplacian_variance == Approx(o.first).margin(1e-6));
        CHECK(s.rms_contrast == Approx(o.second).margin(1e-6));
    }
}

TEST_CASE("histogram matching")
{
    const Image x = raw(1, 3, {0, 10, 20});
    CHECK(histogram_match(x, x) == x);
    CHECK(histogram_match(x, raw(1, 3, {5, 5, 9})).values == std::vector<float>{5, 5, 9});
    CHECK(histogram_match(raw(1, 3, {20, 0, 10}), raw(1, 3, {9, 5, 7})).values == std::vector<float>{9, 5, 7});
    // Ties keep raster order.
    CHECK(histogram_match(raw(1, 4, {3, 3, 1, 3}), raw(1, 4, {1, 2, 3, 4})).values == std::vector<float>{2, 3, 1, 4});
    CHECK_THROWS_AS(histogram_match(x, raw(1, 2, {1, 2})), ShapeError);

    std::mt19937_64 rng(3);
    auto [a, b] = oracle::random_pair(rng, 20, 20);
    const Image m = histogram_match(b, a);
    CHECK(histogram_match(m, a) == m);
    CHECK(intensity_histogram(m) == intensity_histogram(a));
}

TEST_CASE("entropy examples and bounds")
{
    CHECK(shannon_entropy(constant(4, 4, 7)) == 0.0);
    CHECK(shannon_entropy(raw(1, 4, {0, 0, 255, 255})) == Approx(1.0).margin(1e-12));
    std::vector<float> all(256);
    for (int i = 0; i < 256; ++i) all[i] = static_cast<float>(i);
    CHECK(shannon_entropy(raw(16, 16, all)) == Approx(8.0).margin(1e-12));
    // Normalized images are mapped onto the 8-bit grid first.
    CHECK(shannon_entropy(normalize(raw(1, 4, {0, 0, 255, 255}))) == Approx(1.0).margin(1e-12));
    std::mt19937_64 rng(9);
    for (int t = 0; t < 10; ++t) {
        const double h = shannon_entropy(oracle::random_pair(rng, 8, 8).first);
        CHECK(h >= 0.0);
        CHECK(h <= 8.0);
    }
}

TEST_CASE("sharpness statistics")
{
    const auto c = sharpness_stats(constant(5, 5, 100));
    CHECK(c.laplacian_variance == 0.0);
    CHECK(c.rms_contrast == 0.0);

    Image checker(6, 6, Domain::Raw0To255);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) checker.at(y, x) = (x + y) % 2 ? 255.0f : 0.0f;
    const auto s = sharpness_stats(checker);
    // Interior responses alternate between +1020 and -1020.
    CHECK(s.laplacian_variance == Approx(1020.0 * 1020.0));
    CHECK(s.laplacian_variance == Approx(oracle::sharpness(checker).first));

    CHECK(sharpness_stats(raw(3, 4, {0, 0, 255, 255, 0, 0, 255, 255, 0, 0, 255, 255})).rms_contrast == Approx(127.5));
    CHECK_THROWS_AS(sharpness_stats(constant(2, 5, 0)), ShapeError);
}

TEST_CASE("cosine similarity")
{
    std::mt19937_64 rng(1);
    auto [a, b] = oracle::random_pair(rng, 40, 40);
    CHECK(cosine_similarity(a, a) == Approx(1.0).margin(1e-12));
    const std::vector<double> e{1, -2, 3}, neg{-1, 2, -3}, x{1, 0, 0}, y{0, 1, 0};
    CHECK(cosine_similarity(std::span<const double>(e), std::span<const double>(neg)) == Approx(-1.0).margin(1e-12));
    CHECK(cosine_similarity(std::span<const double>(x), std::span<const double>(y)) == 0.0);
    const std::vector<double> zero{0, 0, 0};
    CHECK_THROWS_AS(cosine_similarity(std::span<const double>(x), std::span<const double>(zero)), DegenerateError);
    CHECK(downsample_embedding(a).size() == 32u * 32u);
    const std::vector<Image> refs{a, b};
    const std::vector<Image> tests{a};
    CHECK(mean_max_similarity(tests, refs) == Approx(1.0).margin(1e-12));
    const Embedder custom = [](const Image& img) { return std::vector<double>{img.values[0] + 1.0, 1.0}; };
    CHECK(cosine_similarity(a, a, custom) == Approx(1.0).margin(1e-12));
}

TEST_CASE("score_prediction matches before PSNR and SSIM")
{
    std::mt19937_64 rng(8);
    auto [truth, pred] = oracle::random_pair(rng, 16, 16);
    const auto s = score_prediction(truth, pred, SsimConfig{});
    const Image matched = histogram_match(pred, truth);
    CHECK(s.pearson == Approx(pearson(truth, pred)));
    CHECK(s.psnr == Approx(psnr(truth, matched, 255)));
    CHECK(s.ssim == Approx(ssim(truth, matched)));
    CHECK(std::isinf(score_prediction(truth, truth, SsimConfig{}).psnr));
}

// ---------------------------------------------------------------------------

TEST_CASE("paired signed-rank test")
{
    const std::vector<double> a{1, 2, 3, 4, 5};
    CHECK_THROWS_AS(paired_test(a, a), DegenerateError);
    CHECK_THROWS_AS(paired_test(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 2, 3, 5}), ConfigError);
    CHECK_THROWS_AS(paired_test(a, std::vector<double>{1, 2}), ShapeError);

    std::vector<double> b(10), c(10);
    for (int i = 0; i < 10; ++i) b[i] = i * 1.7, c[i] = b[i] + 0.5;
    const auto r = paired_test(c, b);
    CHECK(r.exact);
    CHECK(r.p_value == Approx(2.0 / 1024.0).margin(1e-12));
    CHECK(r.statistic == Approx(55.0));
    CHECK(r.adjusted_p == r.p_value);

    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd(0, 1);
    for (int t = 0; t < 10; ++t) {
        std::vector<double> x(12), y(12);
        for (int i = 0; i < 12; ++i) x[i] = nd(rng), y[i] = nd(rng) + 0.3;
        const auto f = paired_test(x, y), g = paired_test(y, x);
        CHECK(f.statistic == -g.statistic);
        CHECK(f.p_value == Approx(g.p_value).margin(1e-15));
        CHECK(f.p_value > 0.0);
        CHECK(f.p_value <= 1.0);
    }
}

TEST_CASE("signed-rank exact p-value matches enumeration")
{
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> d(-4, 4);
    for (int t = 0; t < 20; ++t) {
        std::vector<double> a(9), b(9, 0.0);
        for (double& v : a) {
            do v = d(rng);
            while (v == 0);
        }
        const auto r = paired_test(a, b);
        // Brute force over all 2^9 sign flips of the observed magnitudes.
        std::vector<double> mags(9);
        for (int i = 0; i < 9; ++i) mags[i] = std::abs(a[i]);
        const auto ranks = average_ranks(mags);
        int extreme = 0;
        for (int mask = 0; mask < 512; ++mask) {
            double s = 0;
            for (int i = 0; i < 9; ++i) s += (mask >> i & 1) ? ranks[i] : -ranks[i];
            if (std::abs(s) >= std::abs(r.statistic) - 1e-9) ++extreme;
        }
        CHECK(r.p_value == Approx(extreme / 512.0).margin(1e-12));
    }
}

TEST_CASE("normal approximation above the exact limit")
{
    std::vector<double> a(40), b(40, 0.0);
    for (int i = 0; i < 40; ++i) a[i] = (i % 3 == 0 ? -1.0 : 1.0) * (i + 1);
    const auto r = paired_test(a, b);
    CHECK_FALSE(r.exact);
    double sum_sq = 0;
    for (int i = 1; i <= 40; ++i) sum_sq += double(i) * i;
    CHECK(r.p_value == Approx(std::erfc(std::abs(r.statistic) / std::sqrt(sum_sq) / std::sqrt(2.0))));
}

TEST_CASE("holm adjustment")
{
    const std::vector<double> one{0.03};
    CHECK(holm_adjust(one) == one);
    const auto adj = holm_adjust(std::vector<double>{0.01, 0.04, 0.03, 0.5});
    CHECK(adj[0] == Approx(0.04));
    CHECK(adj[2] == Approx(0.09));
    CHECK(adj[1] == Approx(0.09)); // monotone: max(0.08, 0.09)
    CHECK(adj[3] == Approx(0.5));

    std::vector<std::pair<std::vector<double>, std::vector<double>>> fam;
    std::vector<double> x{1, 2, 3, 4, 5, 6}, y{2, 3, 4, 5, 6, 8}, z{1.5, 1, 3.5, 3, 6, 5};
    fam.push_back({x, y});
    fam.push_back({x, z});
    const auto res = paired_test_family(fam);
    REQUIRE(res.size() == 2);
    for (const auto& r : res) CHECK(r.adjusted_p >= r.p_value);
}

TEST_CASE("spearman and ranks")
{
    CHECK(average_ranks(std::vector<double>{10, 20, 20, 5}) == std::vector<double>{2, 3.5, 3.5, 1});
    CHECK(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{10, 30, 50, 70}) == Approx(1.0));
    CHECK(spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{4, 3, 2, 1}) == Approx(-1.0));
    CHECK_THROWS_AS(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DegenerateError);
}
