// The learnable architecture: residual attention blocks, the pyramid
// attention block, the dilated multi-scale extractor, and the reconstructor.
//
// Residual attention computes (1 + S(x)) * T(x) with a two-conv trunk T and a
// pool/conv/upsample/sigmoid soft mask S. Pyramid attention computes
// (1 + P1(P2(P3(x)))) * C(x) at full resolution, where CBi stacks i 3x3
// convolutions. The extractor wires: 1x1-entry residual attention (1->64
// shallow map) -> dilated {1,3,5} branches, channel concat, 1x1 merge,
// pyramid attention -> bridge residual attention -> plus the shallow map as
// a global skip.
#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fusenet/autodiff.hpp"
#include "fusenet/common.hpp"
#include "fusenet/image.hpp"
#include "fusenet/tensor.hpp"

namespace fusenet {

inline constexpr std::size_t kFeatureChannels = 64;

template <class S>
using NamedParams = std::vector<std::pair<std::string, Variable<S>>>;

template <class S>
struct Conv2dLayer {
    ConvSpec spec;
    Variable<S> w, b;

    explicit Conv2dLayer(ConvSpec sp = {}) : spec(sp) {}

    /// Kaiming-uniform fan-in weights (the torch conv default, a = sqrt(5),
    /// so bound = 1/sqrt(fan_in)), zero biases. The attention blocks multiply
    /// activations by (1 + mask), so the pure-ReLU-gain variant overshoots
    /// and saturates the reconstructor's sigmoid.
    void init(Rng& rng) {
        const std::size_t fan_in = spec.in_channels * spec.kernel_h * spec.kernel_w;
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor<S> wt({spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w});
        for (std::size_t i = 0; i < wt.numel(); ++i) wt[i] = static_cast<S>(rng.uniform(-bound, bound));
        w = Variable<S>::param(std::move(wt));
        b = Variable<S>::param(Tensor<S>::zeros({spec.out_channels}));
    }

    Variable<S> operator()(const Variable<S>& x) const { return conv2d(x, w, b, spec); }

    void collect(NamedParams<S>& out, const std::string& prefix) const {
        out.emplace_back(prefix + ".w", w);
        out.emplace_back(prefix + ".b", b);
    }
};

template <class S>
struct ResidualAttentionBlock {
    std::optional<Conv2dLayer<S>> entry;  // 1x1, only when the channel count changes
    Conv2dLayer<S> trunk1, trunk2, mask_conv;

    ResidualAttentionBlock(std::size_t in_ch, std::size_t ch) {
        if (in_ch != ch) entry.emplace(ConvSpec::same(in_ch, ch, 1));
        trunk1 = Conv2dLayer<S>(ConvSpec::same(ch, ch, 3));
        trunk2 = Conv2dLayer<S>(ConvSpec::same(ch, ch, 3));
        mask_conv = Conv2dLayer<S>(ConvSpec::same(ch, ch, 3));
    }

    void init(Rng& rng) {
        if (entry) entry->init(rng);
        trunk1.init(rng);
        trunk2.init(rng);
        mask_conv.init(rng);
    }

    struct Detail {
        Variable<S> out, trunk, mask;
    };

    /// Exposes the trunk and soft-mask branches alongside the composed
    /// output so the (1 + S) * T identity can be instrumented.
    Detail forward_detail(const Variable<S>& x) const {
        const std::size_t h = x.shape()[1], w = x.shape()[2];
        if (h % 2 != 0 || w % 2 != 0) {
            throw ShapeError("residual attention needs even spatial extents for the soft-mask pooling, got " +
                             shape_str(x.shape()));
        }
        const Variable<S> hmap = entry ? (*entry)(x) : x;
        const Variable<S> trunk = relu(trunk2(relu(trunk1(hmap))));
        const Variable<S> mask = sigmoid(upsample_bilinear(mask_conv(maxpool2(hmap)), h, w));
        return {compose(trunk, mask), trunk, mask};
    }

    Variable<S> operator()(const Variable<S>& x) const { return forward_detail(x).out; }

    /// (1 + mask) * trunk
    static Variable<S> compose(const Variable<S>& trunk, const Variable<S>& mask) {
        return mul(add_scalar(mask, S(1)), trunk);
    }

    void collect(NamedParams<S>& out, const std::string& prefix) const {
        if (entry) entry->collect(out, prefix + ".entry");
        trunk1.collect(out, prefix + ".trunk1");
        trunk2.collect(out, prefix + ".trunk2");
        mask_conv.collect(out, prefix + ".mask");
    }
};

template <class S>
struct PyramidAttentionBlock {
    Conv2dLayer<S> cb1_0;                // one 3x3
    Conv2dLayer<S> cb2_0, cb2_1;         // two stacked 3x3, 5x5 receptive field
    Conv2dLayer<S> cb3_0, cb3_1, cb3_2;  // three stacked 3x3, 7x7 receptive field
    Conv2dLayer<S> skip_conv;

    explicit PyramidAttentionBlock(std::size_t ch)
        : cb1_0(ConvSpec::same(ch, ch, 3)),
          cb2_0(ConvSpec::same(ch, ch, 3)),
          cb2_1(ConvSpec::same(ch, ch, 3)),
          cb3_0(ConvSpec::same(ch, ch, 3)),
          cb3_1(ConvSpec::same(ch, ch, 3)),
          cb3_2(ConvSpec::same(ch, ch, 3)),
          skip_conv(ConvSpec::same(ch, ch, 3)) {}

    void init(Rng& rng) {
        cb1_0.init(rng);
        cb2_0.init(rng);
        cb2_1.init(rng);
        cb3_0.init(rng);
        cb3_1.init(rng);
        cb3_2.init(rng);
        skip_conv.init(rng);
    }

    struct Detail {
        Variable<S> out, chain, skip;
    };

    Detail forward_detail(const Variable<S>& x) const {
        if (x.shape()[0] != kFeatureChannels) {
            throw ShapeError("pyramid attention expects " + std::to_string(kFeatureChannels) +
                             " channels, got " + shape_str(x.shape()));
        }
        Variable<S> p = relu(cb3_2(relu(cb3_1(relu(cb3_0(x))))));
        p = relu(cb2_1(relu(cb2_0(p))));
        p = relu(cb1_0(p));
        const Variable<S> skip = skip_conv(x);
        return {mul(add_scalar(p, S(1)), skip), p, skip};
    }

    Variable<S> operator()(const Variable<S>& x) const { return forward_detail(x).out; }

    void collect(NamedParams<S>& out, const std::string& prefix) const {
        cb1_0.collect(out, prefix + ".cb1_0");
        cb2_0.collect(out, prefix + ".cb2_0");
        cb2_1.collect(out, prefix + ".cb2_1");
        cb3_0.collect(out, prefix + ".cb3_0");
        cb3_1.collect(out, prefix + ".cb3_1");
        cb3_2.collect(out, prefix + ".cb3_2");
        skip_conv.collect(out, prefix + ".skip");
    }
};

/// Dilated multi-scale stage: three 3x3 branches at dilations 1/3/5 extract
/// multi-scale features without downsampling, concatenate to 192 channels,
/// merge back to 64 through a 1x1 conv, then pass through pyramid attention.
template <class S>
struct Dilran {
    Conv2dLayer<S> branch_d1, branch_d3, branch_d5;
    Conv2dLayer<S> merge;
    PyramidAttentionBlock<S> pyramid;

    Dilran()
        : branch_d1(ConvSpec::same(kFeatureChannels, kFeatureChannels, 3, 1)),
          branch_d3(ConvSpec::same(kFeatureChannels, kFeatureChannels, 3, 3)),
          branch_d5(ConvSpec::same(kFeatureChannels, kFeatureChannels, 3, 5)),
          merge(ConvSpec::same(3 * kFeatureChannels, kFeatureChannels, 1)),
          pyramid(kFeatureChannels) {}

    void init(Rng& rng) {
        branch_d1.init(rng);
        branch_d3.init(rng);
        branch_d5.init(rng);
        merge.init(rng);
        pyramid.init(rng);
    }

    Variable<S> operator()(const Variable<S>& x) const {
        const std::vector<Variable<S>> branches{relu(branch_d1(x)), relu(branch_d3(x)), relu(branch_d5(x))};
        return pyramid(merge(concat_channels(branches)));
    }

    void collect(NamedParams<S>& out, const std::string& prefix) const {
        branch_d1.collect(out, prefix + ".branch_d1");
        branch_d3.collect(out, prefix + ".branch_d3");
        branch_d5.collect(out, prefix + ".branch_d5");
        merge.collect(out, prefix + ".merge");
        pyramid.collect(out, prefix + ".pyramid");
    }
};

template <class S>
struct FeatureExtractor {
    ResidualAttentionBlock<S> head;    // 1x1 entry, 1 -> 64 shallow map
    Dilran<S> body;
    ResidualAttentionBlock<S> bridge;  // 64 -> 64 between shallow and deep features

    FeatureExtractor() : head(1, kFeatureChannels), bridge(kFeatureChannels, kFeatureChannels) {}

    void init(Rng& rng) {
        head.init(rng);
        body.init(rng);
        bridge.init(rng);
    }

    Variable<S> operator()(const Variable<S>& x) const {
        const Variable<S> shallow = head(x);
        const Variable<S> deep = body(shallow);
        return add(bridge(deep), shallow);  // global residual
    }

    void collect(NamedParams<S>& out, const std::string& prefix) const {
        head.collect(out, prefix + ".head");
        body.collect(out, prefix + ".dilran");
        bridge.collect(out, prefix + ".bridge");
    }
};

/// Three 3x3 convolutions narrowing 64 -> 32 -> 1; ReLU after the first two,
/// sigmoid after the last, so outputs live in (0,1).
template <class S>
struct Reconstructor {
    Conv2dLayer<S> conv1, conv2, conv3;

    Reconstructor()
        : conv1(ConvSpec::same(kFeatureChannels, 64, 3)),
          conv2(ConvSpec::same(64, 32, 3)),
          conv3(ConvSpec::same(32, 1, 3)) {}

    void init(Rng& rng) {
        conv1.init(rng);
        conv2.init(rng);
        conv3.init(rng);
    }

    Variable<S> operator()(const Variable<S>& f) const {
        if (f.shape()[0] != kFeatureChannels) {
            throw ShapeError("reconstructor expects " + std::to_string(kFeatureChannels) + " channels, got " +
                             shape_str(f.shape()));
        }
        return sigmoid(conv3(relu(conv2(relu(conv1(f))))));
    }

    void collect(NamedParams<S>& out, const std::string& prefix) const {
        conv1.collect(out, prefix + ".conv1");
        conv2.collect(out, prefix + ".conv2");
        conv3.collect(out, prefix + ".conv3");
    }
};

template <class S>
struct FusionModel {
    FeatureExtractor<S> extractor;
    Reconstructor<S> reconstructor;

    explicit FusionModel(std::uint64_t seed = 0) { init(seed); }

    void init(std::uint64_t seed) {
        Rng rng(seed);
        extractor.init(rng);
        reconstructor.init(rng);
    }

    NamedParams<S> named_parameters() const {
        NamedParams<S> out;
        extractor.collect(out, "extractor");
        reconstructor.collect(out, "recon");
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [name, p] : named_parameters()) n += p.numel();
        return n;
    }
};

template <class S>
void check_extractor_input(std::size_t h, std::size_t w) {
    if (h % 4 != 0 || w % 4 != 0) {
        throw ShapeError("feature extraction needs height and width divisible by 4, got " +
                         std::to_string(h) + "x" + std::to_string(w));
    }
}

/// Deep 64-channel semantic features for an image, without building a graph.
template <class S>
Tensor<S> extract_features(const FusionModel<S>& model, const Image& img) {
    check_extractor_input<S>(img.height, img.width);
    return model.extractor(Variable<S>::constant(image_to_tensor<S>(img))).value();
}

/// Fused/extracted features back to a single-channel image.
template <class S>
Image reconstruct(const FusionModel<S>& model, const Tensor<S>& features, std::string source_id = {}) {
    return tensor_to_image(model.reconstructor(Variable<S>::constant(features)).value(), std::move(source_id));
}

}  // namespace fusenet
