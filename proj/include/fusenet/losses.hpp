// Composite reconstruction loss: unnormalized Frobenius MSE and
// forward-difference gradient terms, plus a perceptual term computed by a
// frozen VGG16-style feature stack. Total:
//   L = (MSE + lambda1 * GRAD) / (W*H) + lambda2 * PERCEP
#pragma once

#include <cstdint>
#include <type_traits>
#include <string>
#include <vector>

#include "fusenet/autodiff.hpp"
#include "fusenet/checkpoint.hpp"
#include "fusenet/common.hpp"
#include "fusenet/network.hpp"

namespace fusenet {

struct LossConfig {
    double lambda1 = 0.2;     // gradient-loss weight
    double lambda2 = 0.2;     // perceptual-loss weight
    int percep_layer = 3;     // feature stage: 1, 2, or 3 (last conv of that block)
    bool ablate_to_mse = false;
};

/// Frozen convolutional feature pyramid with VGG16-style blocks for
/// single-channel input. Stage i is the ReLU activation of the last
/// convolution of block i (two pools sit before block 3, so inputs must have
/// spatial extents divisible by 4 when stage 3 is requested).
template <class S>
class PerceptualFeatureNet {
public:
    /// Seeded-random instance; genuine pretrained weights can be converted
    /// into the checkpoint format and loaded instead.
    explicit PerceptualFeatureNet(std::uint64_t seed = 1337) {
        build();
        Rng rng(seed);
        for (auto& layer : layers_) layer.init(rng);
        freeze();
    }

    explicit PerceptualFeatureNet(const std::string& checkpoint_path) {
        build();
        Rng rng(0);  // allocates parameter storage; every tensor is overwritten below
        for (auto& layer : layers_) layer.init(rng);
        const Checkpoint ckpt = load_checkpoint(checkpoint_path);
        NamedParams<S> params = named_parameters();
        for (auto& [name, p] : params) {
            const Tensor<float>* t = ckpt.find(name);
            if (t == nullptr) throw ConfigError("perceptual weights are missing tensor '" + name + "'");
            if (t->shape() != p.value().shape()) {
                throw ConfigError("perceptual weight '" + name + "' has shape " + shape_str(t->shape()) +
                                  " but the architecture needs " + shape_str(p.value().shape()));
            }
            Variable<S> dst = p;
            dst.value() = t->template cast<S>();
        }
        freeze();
    }

    /// Feature map of the requested stage (1-based).
    Variable<S> features(const Variable<S>& image, int stage) const {
        if (stage < 1 || stage > 3) {
            throw ConfigError("perceptual stage must be 1, 2, or 3; got " + std::to_string(stage));
        }
        const std::size_t h = image.shape()[1], w = image.shape()[2];
        const std::size_t need = stage >= 3 ? 4 : (stage == 2 ? 2 : 1);
        if (h % need != 0 || w % need != 0) {
            throw ShapeError("perceptual stage " + std::to_string(stage) + " needs extents divisible by " +
                             std::to_string(need) + ", got " + std::to_string(h) + "x" + std::to_string(w));
        }
        Variable<S> x = relu(layers_[1](relu(layers_[0](image))));
        if (stage == 1) return x;
        x = relu(layers_[3](relu(layers_[2](maxpool2(x)))));
        if (stage == 2) return x;
        return relu(layers_[6](relu(layers_[5](relu(layers_[4](maxpool2(x)))))));
    }

    NamedParams<S> named_parameters() const {
        NamedParams<S> out;
        static const char* names[] = {"vgg.conv1_1", "vgg.conv1_2", "vgg.conv2_1", "vgg.conv2_2",
                                      "vgg.conv3_1", "vgg.conv3_2", "vgg.conv3_3"};
        for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(out, names[i]);
        return out;
    }

    void save(const std::string& path) const {
        Checkpoint ckpt;
        for (const auto& [name, p] : named_parameters()) {
            ckpt.tensors.emplace_back(name, p.value().template cast<float>());
        }
        save_checkpoint(ckpt, path);
    }

private:
    void build() {
        layers_.clear();
        layers_.emplace_back(ConvSpec::same(1, 64, 3));
        layers_.emplace_back(ConvSpec::same(64, 64, 3));
        layers_.emplace_back(ConvSpec::same(64, 128, 3));
        layers_.emplace_back(ConvSpec::same(128, 128, 3));
        layers_.emplace_back(ConvSpec::same(128, 256, 3));
        layers_.emplace_back(ConvSpec::same(256, 256, 3));
        layers_.emplace_back(ConvSpec::same(256, 256, 3));
    }

    void freeze() {
        // Parameters stay plain constants: gradients flow through the net to
        // its input but never into the weights.
        for (auto& layer : layers_) {
            layer.w = layer.w.detach();
            layer.b = layer.b.detach();
        }
    }

    std::vector<Conv2dLayer<S>> layers_;
};

namespace detail {
template <class S>
void check_image_like(const Variable<S>& out, const std::vector<Variable<S>>& refs, const char* op) {
    if (out.shape().size() != 3) throw ShapeError(std::string(op) + ": output must be CxHxW");
    if (refs.empty()) throw ShapeError(std::string(op) + ": need at least one reference image");
    for (const auto& r : refs) {
        if (r.shape() != out.shape()) {
            throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(out.shape()) + " vs " +
                             shape_str(r.shape()));
        }
    }
}
}  // namespace detail

/// Sum over references of the squared Frobenius distance (no normalization;
/// total_loss divides by the pixel count).
template <class S>
Variable<S> mse_loss(const Variable<S>& out, const std::vector<Variable<S>>& refs) {
    detail::check_image_like(out, refs, "mse_loss");
    Variable<S> total;
    for (const auto& r : refs) {
        const Variable<S> d = sub(out, r);
        const Variable<S> term = sum(mul(d, d));
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

/// Sum over references of the squared distance between forward-difference
/// image gradients in x and y; boundary column/row drop out of the stencil.
template <class S>
Variable<S> gradient_loss(const Variable<S>& out, const std::vector<Variable<S>>& refs) {
    detail::check_image_like(out, refs, "gradient_loss");
    const Variable<S> gx = diff_x(out), gy = diff_y(out);
    Variable<S> total;
    for (const auto& r : refs) {
        const Variable<S> dx = sub(gx, diff_x(r));
        const Variable<S> dy = sub(gy, diff_y(r));
        const Variable<S> term = add(sum(mul(dx, dx)), sum(mul(dy, dy)));
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

/// Mean-normalized squared feature distance at the given stage, summed over
/// references: 1/(C*Wi*Hi) * sum_j ||f(out) - f(ref_j)||^2.
template <class S>
Variable<S> perceptual_loss(const Variable<S>& out, const std::vector<Variable<S>>& refs,
                            const PerceptualFeatureNet<S>& net, int stage) {
    detail::check_image_like(out, refs, "perceptual_loss");
    const Variable<S> fo = net.features(out, stage);
    const auto& fs = fo.shape();
    const double denom = static_cast<double>(fs[0] * fs[1] * fs[2]);
    Variable<S> total;
    for (const auto& r : refs) {
        const Variable<S> fr = net.features(r.detach(), stage);
        const Variable<S> d = sub(fo, fr);
        const Variable<S> term = sum(mul(d, d));
        total = total.defined() ? add(total, term) : term;
    }
    return mul_scalar(total, static_cast<S>(1.0 / denom));
}

template <class S>
Variable<S> total_loss(const Variable<S>& out, const std::vector<Variable<S>>& refs, const LossConfig& cfg,
                       const PerceptualFeatureNet<std::type_identity_t<S>>* net = nullptr) {
    detail::check_image_like(out, refs, "total_loss");
    const double inv_pixels = 1.0 / static_cast<double>(out.shape()[1] * out.shape()[2]);
    if (cfg.ablate_to_mse) {
        return mul_scalar(mse_loss(out, refs), static_cast<S>(inv_pixels));
    }
    Variable<S> pixel_terms = mse_loss(out, refs);
    if (cfg.lambda1 != 0.0) {
        pixel_terms = add(pixel_terms, mul_scalar(gradient_loss(out, refs), static_cast<S>(cfg.lambda1)));
    }
    Variable<S> total = mul_scalar(pixel_terms, static_cast<S>(inv_pixels));
    if (cfg.lambda2 != 0.0) {
        if (net == nullptr) {
            throw ConfigError("total_loss: lambda2 is nonzero but no perceptual feature net was provided");
        }
        total = add(total, mul_scalar(perceptual_loss(out, refs, *net, cfg.percep_layer),
                                      static_cast<S>(cfg.lambda2)));
    }
    return total;
}

}  // namespace fusenet
