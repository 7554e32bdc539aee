// Fixed (parameter-free) fusion strategies for pairs of feature maps.
//
// The softmax/nuclear-norm family works per input j as: softmax across
// channels at every pixel, nuclear norm of each channel's HxW matrix (C
// activity scalars), aggregate with phi, then normalize the two aggregates
// to weights summing to 1. The fused map is w1*f1 + w2*f2.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fusenet/common.hpp"
#include "fusenet/linalg.hpp"
#include "fusenet/tensor.hpp"

namespace fusenet {

enum class PhiKind { max, mean, sum, max_sq, mean_sq, sum_sq };

struct FusionWeights {
    double w1 = 0.5;
    double w2 = 0.5;
    bool degenerate = false;  // both aggregates were zero; fell back to (0.5, 0.5)
};

enum class FusionRule { sfnn, average, elementwise_max };

struct FusionStrategy {
    FusionRule rule = FusionRule::sfnn;
    PhiKind phi = PhiKind::max;
};

inline const std::vector<std::pair<std::string, FusionStrategy>>& strategy_table() {
    static const std::vector<std::pair<std::string, FusionStrategy>> table = {
        {"sfnn-max", {FusionRule::sfnn, PhiKind::max}},
        {"sfnn-mean", {FusionRule::sfnn, PhiKind::mean}},
        {"sfnn-sum", {FusionRule::sfnn, PhiKind::sum}},
        {"sfnn-max2", {FusionRule::sfnn, PhiKind::max_sq}},
        {"sfnn-mean2", {FusionRule::sfnn, PhiKind::mean_sq}},
        {"sfnn-sum2", {FusionRule::sfnn, PhiKind::sum_sq}},
        {"average", {FusionRule::average, PhiKind::max}},
        {"max", {FusionRule::elementwise_max, PhiKind::max}},
    };
    return table;
}

inline std::string strategy_grammar() {
    std::string out;
    for (const auto& [name, s] : strategy_table()) {
        if (!out.empty()) out += " | ";
        out += name;
    }
    return out;
}

inline FusionStrategy parse_strategy(const std::string& name) {
    for (const auto& [key, s] : strategy_table()) {
        if (key == name) return s;
    }
    throw UsageError("unknown fusion strategy '" + name + "'; valid options: " + strategy_grammar());
}

/// Softmax across the channel axis at every pixel, computed with
/// max-subtraction. Output channels are positive and sum to 1 per pixel.
template <class S>
Tensor<S> channel_softmax(const Tensor<S>& f) {
    if (f.ndim() != 3) throw ShapeError("channel_softmax needs CxHxW, got " + shape_str(f.shape()));
    if (!f.all_finite()) throw NumericError("channel_softmax: non-finite input");
    const std::size_t c = f.size(0), h = f.size(1), w = f.size(2);
    const std::size_t plane = h * w;
    Tensor<S> out(f.shape());
    for (std::size_t p = 0; p < plane; ++p) {
        S m = f[p];
        for (std::size_t ci = 1; ci < c; ++ci) m = std::max(m, f[ci * plane + p]);
        S denom = S(0);
        for (std::size_t ci = 0; ci < c; ++ci) {
            const S e = std::exp(f[ci * plane + p] - m);
            out[ci * plane + p] = e;
            denom += e;
        }
        for (std::size_t ci = 0; ci < c; ++ci) out[ci * plane + p] /= denom;
    }
    return out;
}

inline double phi_aggregate(const std::vector<double>& norms, PhiKind phi) {
    double base = 0.0;
    switch (phi) {
        case PhiKind::max:
        case PhiKind::max_sq:
            base = *std::max_element(norms.begin(), norms.end());
            break;
        case PhiKind::mean:
        case PhiKind::mean_sq: {
            for (double n : norms) base += n;
            base /= static_cast<double>(norms.size());
            break;
        }
        case PhiKind::sum:
        case PhiKind::sum_sq: {
            for (double n : norms) base += n;
            break;
        }
    }
    if (phi == PhiKind::max_sq || phi == PhiKind::mean_sq || phi == PhiKind::sum_sq) base *= base;
    return base;
}

namespace detail {

/// phi over the per-channel nuclear norms of the channel-softmaxed map.
template <class S>
double sfnn_aggregate(const Tensor<S>& f, PhiKind phi) {
    const Tensor<S> soft = channel_softmax(f);
    const std::size_t c = soft.size(0);
    std::vector<double> norms(c, 0.0);
#pragma omp parallel for schedule(static)
    for (std::size_t ci = 0; ci < c; ++ci) {
        norms[ci] = nuclear_norm(soft.slice_channels(ci, ci + 1).reshape({soft.size(1), soft.size(2)}));
    }
    return phi_aggregate(norms, phi);
}

}  // namespace detail

template <class S>
FusionWeights sfnn_weights(const Tensor<S>& f1, const Tensor<S>& f2, PhiKind phi) {
    if (!f1.same_shape(f2)) {
        throw ShapeError("sfnn_weights: shape mismatch " + shape_str(f1.shape()) + " vs " + shape_str(f2.shape()));
    }
    const double a1 = detail::sfnn_aggregate(f1, phi);
    const double a2 = detail::sfnn_aggregate(f2, phi);
    const double denom = a1 + a2;
    if (denom <= 0.0) return {0.5, 0.5, true};
    return {a1 / denom, a2 / denom, false};
}

template <class S>
Tensor<S> fuse(const Tensor<S>& f1, const Tensor<S>& f2, const FusionStrategy& strategy,
               FusionWeights* weights_out = nullptr) {
    if (!f1.same_shape(f2)) {
        throw ShapeError("fuse: shape mismatch " + shape_str(f1.shape()) + " vs " + shape_str(f2.shape()));
    }
    Tensor<S> out(f1.shape());
    switch (strategy.rule) {
        case FusionRule::sfnn: {
            const FusionWeights w = sfnn_weights(f1, f2, strategy.phi);
            if (weights_out) *weights_out = w;
            const S w1 = static_cast<S>(w.w1), w2 = static_cast<S>(w.w2);
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] = w1 * f1[i] + w2 * f2[i];
            break;
        }
        case FusionRule::average: {
            if (weights_out) *weights_out = {0.5, 0.5, false};
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] = S(0.5) * f1[i] + S(0.5) * f2[i];
            break;
        }
        case FusionRule::elementwise_max: {
            if (weights_out) *weights_out = {0.5, 0.5, false};
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::max(f1[i], f2[i]);
            break;
        }
    }
    return out;
}

}  // namespace fusenet
