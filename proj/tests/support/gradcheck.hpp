// Central finite-difference verification of reverse-mode gradients.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "fusenet/autodiff.hpp"
#include "fusenet/common.hpp"
#include "fusenet/tensor.hpp"

namespace testsupport {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
    bool passed = true;
};

/// Compares analytic gradients of sum(r .* forward()) against central finite
/// differences at step h for each selected coordinate of each leaf. forward()
/// must rebuild its graph from the leaves' current values on every call.
/// Passing coords_per_leaf = 0 checks every coordinate.
template <class Forward>
GradCheckReport gradcheck(Forward&& forward, std::vector<fusenet::Variable<double>> leaves, fusenet::Rng& rng,
                          double tol = 1e-3, double h = 1e-4, std::size_t coords_per_leaf = 0) {
    using fusenet::Tensor;
    using fusenet::Variable;

    // Fixed random projection makes the output scalar.
    const Tensor<double> out0 = forward().value();
    Tensor<double> proj(out0.shape());
    for (std::size_t i = 0; i < proj.numel(); ++i) proj[i] = rng.uniform(-1.0, 1.0);
    const Variable<double> proj_const = Variable<double>::constant(proj);

    auto loss_value = [&]() -> double {
        return fusenet::sum(fusenet::mul(forward(), proj_const)).value()[0];
    };
    auto loss_backward = [&]() {
        for (auto& leaf : leaves) {
            leaf.ensure_grad();
            leaf.zero_grad();
        }
        fusenet::backward(fusenet::sum(fusenet::mul(forward(), proj_const)));
    };

    loss_backward();
    std::vector<Tensor<double>> analytic;
    analytic.reserve(leaves.size());
    for (auto& leaf : leaves) analytic.push_back(leaf.grad());

    GradCheckReport report;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& leaf = leaves[li];
        std::vector<std::size_t> coords;
        if (coords_per_leaf == 0 || coords_per_leaf >= leaf.numel()) {
            coords.resize(leaf.numel());
            for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
        } else {
            for (std::size_t k = 0; k < coords_per_leaf; ++k) coords.push_back(rng.index(leaf.numel()));
        }
        for (std::size_t i : coords) {
            const double saved = leaf.value()[i];
            leaf.value()[i] = saved + h;
            const double up = loss_value();
            leaf.value()[i] = saved - h;
            const double down = loss_value();
            leaf.value()[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double exact = analytic[li][i];
            const double err = std::abs(exact - numeric);
            const double rel = err / std::max({std::abs(exact), std::abs(numeric), 1e-12});
            if (err > 1e-8 && rel > tol) report.passed = false;
            report.max_rel_error = std::max(report.max_rel_error, err <= 1e-8 ? 0.0 : rel);
            ++report.coords_checked;
        }
    }
    return report;
}

}  // namespace testsupport
