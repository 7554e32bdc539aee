#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fusenet/optim.hpp"
#include "support/oracles.hpp"

using fusenet::AdamOptimizer;
using fusenet::Rng;
using fusenet::Tensor;
using fusenet::Variable;

TEST_CASE("zero gradients leave parameters unchanged") {
    auto p = Variable<double>::param(Tensor<double>({4}, {1.0, -2.0, 3.0, 0.5}));
    AdamOptimizer<double> adam({p}, 0.01);
    const Tensor<double> before = p.value();
    for (int i = 0; i < 5; ++i) adam.step();
    for (std::size_t i = 0; i < 4; ++i) CHECK(p.value()[i] == before[i]);
}

TEST_CASE("first step moves each coordinate by about lr in the gradient direction") {
    auto p = Variable<double>::param(Tensor<double>({3}, {0.0, 0.0, 0.0}));
    AdamOptimizer<double> adam({p}, 1e-3);
    auto& g = p.ensure_grad();
    g[0] = 0.7;
    g[1] = -2.5;
    g[2] = 1e-3;
    adam.step();
    // bias correction makes mhat/sqrt(vhat) = sign(g) up to eps
    CHECK(p.value()[0] == Catch::Approx(-1e-3).epsilon(1e-6));
    CHECK(p.value()[1] == Catch::Approx(1e-3).epsilon(1e-6));
    CHECK(p.value()[2] == Catch::Approx(-1e-3).epsilon(1e-4));
}

TEST_CASE("identical seeds give identical trajectories") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        auto p = Variable<double>::param(testsupport::random_tensor<double>({8}, rng));
        AdamOptimizer<double> adam({p}, 0.05);
        for (int step = 0; step < 25; ++step) {
            adam.zero_grad();
            // gradient of sum(p^2)
            auto loss = fusenet::sum(fusenet::mul(p, p));
            fusenet::backward(loss);
            adam.step();
        }
        return p.value();
    };
    const auto a = run(123), b = run(123);
    for (std::size_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
}

TEST_CASE("adam drives a quadratic toward its minimum") {
    auto p = Variable<double>::param(Tensor<double>({2}, {1.5, -2.0}));
    AdamOptimizer<double> adam({p}, 0.05);
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 200; ++step) {
        adam.zero_grad();
        auto loss = fusenet::sum(fusenet::mul(p, p));
        fusenet::backward(loss);
        if (step == 0) first = loss.value()[0];
        last = loss.value()[0];
        adam.step();
    }
    CHECK(last < first / 100.0);
}

TEST_CASE("mismatched gradient shape is a shape error") {
    auto p = Variable<double>::param(Tensor<double>({4}, 1.0));
    AdamOptimizer<double> adam({p}, 0.01);
    p.node()->grad = Tensor<double>({2}, 0.0);  // corrupt the buffer deliberately
    CHECK_THROWS_AS(adam.step(), fusenet::ShapeError);
}
