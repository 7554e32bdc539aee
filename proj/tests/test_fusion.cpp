#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fusenet/fusion.hpp"
#include "support/oracles.hpp"

using fusenet::channel_softmax;
using fusenet::fuse;
using fusenet::FusionStrategy;
using fusenet::parse_strategy;
using fusenet::PhiKind;
using fusenet::Rng;
using fusenet::sfnn_weights;
using fusenet::Tensor;
using testsupport::random_tensor;

TEST_CASE("channel softmax values") {
    // two channels, single pixel each case
    Tensor<double> equal({2, 1, 1}, {0.0, 0.0});
    const auto s1 = channel_softmax(equal);
    CHECK(s1[0] == Catch::Approx(0.5).margin(1e-15));
    CHECK(s1[1] == Catch::Approx(0.5).margin(1e-15));

    Tensor<double> ln2({2, 1, 1}, {std::log(2.0), 0.0});
    const auto s2 = channel_softmax(ln2);
    CHECK(s2[0] == Catch::Approx(2.0 / 3.0).margin(1e-12));
    CHECK(s2[1] == Catch::Approx(1.0 / 3.0).margin(1e-12));

    // shift invariance
    Rng rng(31);
    const auto f = random_tensor<double>({4, 3, 3}, rng);
    Tensor<double> shifted = f;
    for (std::size_t p = 0; p < 9; ++p)
        for (std::size_t c = 0; c < 4; ++c) shifted[c * 9 + p] += 7.25;
    const auto sf = channel_softmax(f);
    const auto ss = channel_softmax(shifted);
    for (std::size_t i = 0; i < sf.numel(); ++i) CHECK(ss[i] == Catch::Approx(sf[i]).margin(1e-12));

    // per-pixel channel sums are 1
    for (std::size_t p = 0; p < 9; ++p) {
        double total = 0.0;
        for (std::size_t c = 0; c < 4; ++c) total += sf[c * 9 + p];
        CHECK(total == Catch::Approx(1.0).margin(1e-6));
    }

    Tensor<double> bad({1, 1, 2}, {1.0, std::nan("")});
    CHECK_THROWS_AS(channel_softmax(bad), fusenet::NumericError);
}

TEST_CASE("identical inputs fuse with exact (0.5, 0.5) weights") {
    Rng rng(32);
    const auto f = random_tensor<float>({6, 8, 8}, rng);
    for (PhiKind phi : {PhiKind::max, PhiKind::mean, PhiKind::sum, PhiKind::max_sq}) {
        const auto w = sfnn_weights(f, f, phi);
        CHECK(w.w1 == 0.5);
        CHECK(w.w2 == 0.5);
        CHECK_FALSE(w.degenerate);
    }
}

TEST_CASE("weights normalize, swap exactly, and keep mean == sum") {
    Rng rng(33);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t c = 2 + rng.index(4), h = 4 + rng.index(5), w = 4 + rng.index(5);
        const auto f1 = random_tensor<float>({c, h, w}, rng, -2.0, 2.0);
        const auto f2 = random_tensor<float>({c, h, w}, rng, -2.0, 2.0);

        const auto wts = sfnn_weights(f1, f2, PhiKind::max);
        CHECK(std::abs(wts.w1 + wts.w2 - 1.0) <= 1e-12);
        CHECK(wts.w1 >= 0.0);
        CHECK(wts.w2 >= 0.0);

        const auto swapped = sfnn_weights(f2, f1, PhiKind::max);
        CHECK(swapped.w1 == wts.w2);
        CHECK(swapped.w2 == wts.w1);

        const auto mean_w = sfnn_weights(f1, f2, PhiKind::mean);
        const auto sum_w = sfnn_weights(f1, f2, PhiKind::sum);
        CHECK(std::abs(mean_w.w1 - sum_w.w1) <= 1e-12);

        // squared variants renormalize the squared aggregates
        const auto sq = sfnn_weights(f1, f2, PhiKind::max_sq);
        const double expect = wts.w1 * wts.w1 / (wts.w1 * wts.w1 + wts.w2 * wts.w2);
        CHECK(sq.w1 == Catch::Approx(expect).margin(1e-9));
    }
}

TEST_CASE("sfnn weights match a hand-composed oracle") {
    // f1: both channels all zero. f2: channel 0 = [[t,0],[0,t]], channel 1 =
    // -channel 0, with t large. The oracle composes softmax by hand, Eigen
    // singular values, and phi = max in wide precision.
    const double t = 40.0;
    Tensor<double> f1({2, 2, 2}, 0.0);
    Tensor<double> f2({2, 2, 2}, {t, 0.0, 0.0, t, -t, 0.0, 0.0, -t});

    auto softmax2 = [](double a, double b) {
        const double m = std::max(a, b);
        const double ea = std::exp(a - m), eb = std::exp(b - m);
        return std::pair<double, double>{ea / (ea + eb), eb / (ea + eb)};
    };
    auto aggregate = [&](const Tensor<double>& f) {
        Tensor<double> ch0({2, 2}), ch1({2, 2});
        for (std::size_t p = 0; p < 4; ++p) {
            const auto [s0, s1] = softmax2(f[p], f[4 + p]);
            ch0[p] = s0;
            ch1[p] = s1;
        }
        return std::max(testsupport::nuclear_norm_reference(ch0), testsupport::nuclear_norm_reference(ch1));
    };
    const double a1 = aggregate(f1), a2 = aggregate(f2);
    const double w1_expect = a1 / (a1 + a2);

    const auto wts = sfnn_weights(f1, f2, PhiKind::max);
    REQUIRE(wts.w1 == Catch::Approx(w1_expect).margin(1e-9));
    REQUIRE(wts.w2 == Catch::Approx(1.0 - w1_expect).margin(1e-9));

    // the fused map matches w1*f1 + w2*f2 built from the oracle weights
    const auto fused = fuse(f1, f2, {fusenet::FusionRule::sfnn, PhiKind::max});
    for (std::size_t i = 0; i < fused.numel(); ++i) {
        REQUIRE(fused[i] == Catch::Approx(w1_expect * f1[i] + (1.0 - w1_expect) * f2[i]).margin(1e-9));
    }

    // sanity against the analytic limit: a1 = 1 (constant 0.5 maps), a2 = 2
    CHECK(a1 == Catch::Approx(1.0).margin(1e-9));
    CHECK(a2 == Catch::Approx(2.0).margin(1e-6));
}

TEST_CASE("fuse is idempotent on identical inputs for every strategy") {
    Rng rng(34);
    const auto f = random_tensor<float>({4, 6, 6}, rng);
    for (const auto& [name, strategy] : fusenet::strategy_table()) {
        const auto fused = fuse(f, f, strategy);
        for (std::size_t i = 0; i < f.numel(); ++i) REQUIRE(fused[i] == f[i]);
    }
}

TEST_CASE("average of f and -f vanishes; max picks the larger entry") {
    Rng rng(35);
    const auto f = random_tensor<float>({3, 5, 5}, rng);
    Tensor<float> neg = f;
    for (std::size_t i = 0; i < neg.numel(); ++i) neg[i] = -neg[i];

    const auto avg = fuse(f, neg, parse_strategy("average"));
    for (std::size_t i = 0; i < avg.numel(); ++i) CHECK(avg[i] == 0.0f);

    const auto mx = fuse(f, neg, parse_strategy("max"));
    for (std::size_t i = 0; i < mx.numel(); ++i) CHECK(mx[i] == std::max(f[i], neg[i]));
}

TEST_CASE("sfnn and average stay inside the elementwise envelope") {
    Rng rng(36);
    for (int trial = 0; trial < 10; ++trial) {
        const auto f1 = random_tensor<float>({3, 6, 6}, rng, -3.0, 3.0);
        const auto f2 = random_tensor<float>({3, 6, 6}, rng, -3.0, 3.0);
        for (const char* name : {"sfnn-max", "sfnn-mean2", "average"}) {
            const auto fused = fuse(f1, f2, parse_strategy(name));
            for (std::size_t i = 0; i < fused.numel(); ++i) {
                CHECK(fused[i] >= std::min(f1[i], f2[i]) - 1e-5f);
                CHECK(fused[i] <= std::max(f1[i], f2[i]) + 1e-5f);
            }
        }
    }
}

TEST_CASE("fuse exchange symmetry") {
    Rng rng(37);
    const auto f1 = random_tensor<float>({4, 8, 8}, rng);
    const auto f2 = random_tensor<float>({4, 8, 8}, rng);
    const auto ab = fuse(f1, f2, parse_strategy("sfnn-max"));
    const auto ba = fuse(f2, f1, parse_strategy("sfnn-max"));
    for (std::size_t i = 0; i < ab.numel(); ++i) REQUIRE(ab[i] == Catch::Approx(ba[i]).margin(1e-6));
}

TEST_CASE("strategy grammar covers the CLI selectors") {
    for (const char* name :
         {"sfnn-max", "sfnn-mean", "sfnn-sum", "sfnn-max2", "sfnn-mean2", "sfnn-sum2", "average", "max"}) {
        CHECK_NOTHROW(parse_strategy(name));
    }
    CHECK_THROWS_AS(parse_strategy("foo"), fusenet::UsageError);
    CHECK_THROWS_WITH(parse_strategy("foo"), Catch::Matchers::ContainsSubstring("sfnn-max2"));
}

TEST_CASE("shape mismatches are rejected") {
    Tensor<float> a({2, 4, 4}), b({2, 4, 5});
    CHECK_THROWS_AS(sfnn_weights(a, b, PhiKind::max), fusenet::ShapeError);
    CHECK_THROWS_AS(fuse(a, b, parse_strategy("average")), fusenet::ShapeError);
}
