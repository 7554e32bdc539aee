// Reverse-mode autodiff over the handful of ops the fusion networks need:
// dilated convolution, ReLU/sigmoid, 2x2 max pooling, bilinear upsampling,
// channel concatenation, forward differences, and elementwise arithmetic.
//
// A Variable is a shared handle to a graph node. Ops on Variables compute the
// value eagerly and, when any input requires gradients, record a backward
// closure; otherwise the result is a detached constant so inference passes
// retain no graph. backward(loss) runs the closures in reverse topological
// order and accumulates into each parameter's grad until zero_grad().
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fusenet/common.hpp"
#include "fusenet/gemm.hpp"
#include "fusenet/tensor.hpp"

namespace fusenet {

template <class S>
class Variable;

template <class S>
struct VarNode {
    Tensor<S> value;
    Tensor<S> grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<Variable<S>> parents;
    std::function<void(VarNode<S>&)> backward_fn;

    Tensor<S>& ensure_grad() {
        if (grad.numel() != value.numel()) grad = Tensor<S>::zeros(value.shape());
        return grad;
    }
};

template <class S>
class Variable {
public:
    Variable() = default;

    /// Detached constant.
    static Variable constant(Tensor<S> value) {
        Variable v;
        v.node_ = std::make_shared<VarNode<S>>();
        v.node_->value = std::move(value);
        return v;
    }

    /// Trainable leaf.
    static Variable param(Tensor<S> value) {
        Variable v = constant(std::move(value));
        v.node_->requires_grad = true;
        return v;
    }

    bool defined() const { return node_ != nullptr; }
    const Tensor<S>& value() const { return node_->value; }
    Tensor<S>& value() { return node_->value; }
    const Tensor<S>& grad() const { return node_->grad; }
    Tensor<S>& ensure_grad() { return node_->ensure_grad(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    const std::vector<std::size_t>& shape() const { return node_->value.shape(); }
    std::size_t numel() const { return node_->value.numel(); }

    void zero_grad() {
        if (node_ && node_->grad.numel()) std::fill(node_->grad.vec().begin(), node_->grad.vec().end(), S(0));
    }

    Variable detach() const { return constant(node_->value); }

    VarNode<S>* node() const { return node_.get(); }

    static Variable result(Tensor<S> value, std::vector<Variable> parents,
                           std::function<void(VarNode<S>&)> backward_fn) {
        bool needs = false;
        for (const auto& p : parents) needs = needs || p.requires_grad();
        Variable v = constant(std::move(value));
        if (needs) {
            v.node_->requires_grad = true;
            v.node_->parents = std::move(parents);
            v.node_->backward_fn = std::move(backward_fn);
        }
        return v;
    }

private:
    std::shared_ptr<VarNode<S>> node_;
};

/// Populates grads of everything 'loss' depends on. 'scale' seeds d(loss)/d(loss),
/// letting callers accumulate per-sample gradients as loss_i / batch_size.
template <class S>
void backward(const Variable<S>& loss, S scale = S(1)) {
    if (!loss.defined() || loss.numel() != 1) {
        throw UsageError("backward needs a scalar loss");
    }
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS over parents.
    std::vector<VarNode<S>*> order;
    std::unordered_set<VarNode<S>*> seen;
    std::vector<std::pair<VarNode<S>*, std::size_t>> stack{{loss.node(), 0}};
    seen.insert(loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            VarNode<S>* p = node->parents[next++].node();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad()[0] += scale;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
}

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

namespace detail {
template <class S>
void check_same_shape(const Variable<S>& a, const Variable<S>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}
}  // namespace detail

template <class S>
Variable<S> add(Variable<S> a, Variable<S> b) {
    detail::check_same_shape(a, b, "add");
    Tensor<S> out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
    return Variable<S>::result(std::move(out), {a, b}, [a, b](VarNode<S>& n) mutable {
        if (a.requires_grad()) {
            auto& ga = a.ensure_grad();
            for (std::size_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i];
        }
        if (b.requires_grad()) {
            auto& gb = b.ensure_grad();
            for (std::size_t i = 0; i < n.grad.numel(); ++i) gb[i] += n.grad[i];
        }
    });
}

template <class S>
Variable<S> sub(Variable<S> a, Variable<S> b) {
    detail::check_same_shape(a, b, "sub");
    Tensor<S> out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
    return Variable<S>::result(std::move(out), {a, b}, [a, b](VarNode<S>& n) mutable {
        if (a.requires_grad()) {
            auto& ga = a.ensure_grad();
            for (std::size_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i];
        }
        if (b.requires_grad()) {
            auto& gb = b.ensure_grad();
            for (std::size_t i = 0; i < n.grad.numel(); ++i) gb[i] -= n.grad[i];
        }
    });
}

template <class S>
Variable<S> mul(Variable<S> a, Variable<S> b) {
    detail::check_same_shape(a, b, "mul");
    Tensor<S> out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
    return Variable<S>::result(std::move(out), {a, b}, [a, b](VarNode<S>& n) mutable {
        if (a.requires_grad()) {
            auto& ga = a.ensure_grad();
            for (std::size_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i] * b.value()[i];
        }
        if (b.requires_grad()) {
            auto& gb = b.ensure_grad();
            for (std::size_t i = 0; i < n.grad.numel(); ++i) gb[i] += n.grad[i] * a.value()[i];
        }
    });
}

template <class S>
Variable<S> add_scalar(Variable<S> a, S c) {
    Tensor<S> out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += c;
    return Variable<S>::result(std::move(out), {a}, [a](VarNode<S>& n) mutable {
        auto& ga = a.ensure_grad();
        for (std::size_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i];
    });
}

template <class S>
Variable<S> mul_scalar(Variable<S> a, S c) {
    Tensor<S> out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
    return Variable<S>::result(std::move(out), {a}, [a, c](VarNode<S>& n) mutable {
        auto& ga = a.ensure_grad();
        for (std::size_t i = 0; i < n.grad.numel(); ++i) ga[i] += n.grad[i] * c;
    });
}

template <class S>
Variable<S> relu(Variable<S> x) {
    Tensor<S> out = x.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = out[i] > S(0) ? out[i] : S(0);
    return Variable<S>::result(std::move(out), {x}, [x](VarNode<S>& n) mutable {
        auto& gx = x.ensure_grad();
        for (std::size_t i = 0; i < n.grad.numel(); ++i)
            if (x.value()[i] > S(0)) gx[i] += n.grad[i];
    });
}

template <class S>
Variable<S> sigmoid(Variable<S> x) {
    Tensor<S> out = x.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = S(1) / (S(1) + std::exp(-out[i]));
    Tensor<S> saved = out;
    return Variable<S>::result(std::move(out), {x}, [x, saved = std::move(saved)](VarNode<S>& n) mutable {
        auto& gx = x.ensure_grad();
        for (std::size_t i = 0; i < n.grad.numel(); ++i) gx[i] += n.grad[i] * saved[i] * (S(1) - saved[i]);
    });
}

template <class S>
Variable<S> sum(Variable<S> x) {
    Tensor<S> out({1});
    S acc = S(0);
    for (std::size_t i = 0; i < x.numel(); ++i) acc += x.value()[i];
    out[0] = acc;
    return Variable<S>::result(std::move(out), {x}, [x](VarNode<S>& n) mutable {
        auto& gx = x.ensure_grad();
        const S g = n.grad[0];
        for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
}

/// out[c,h,w] = x[c,h,w+1] - x[c,h,w]; drops the last column.
template <class S>
Variable<S> diff_x(Variable<S> x) {
    const auto& v = x.value();
    if (v.ndim() != 3 || v.size(2) < 2) throw ShapeError("diff_x needs CxHxW with W>=2, got " + shape_str(v.shape()));
    const std::size_t c = v.size(0), h = v.size(1), w = v.size(2);
    Tensor<S> out({c, h, w - 1});
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t hi = 0; hi < h; ++hi)
            for (std::size_t wi = 0; wi + 1 < w; ++wi) out.at(ci, hi, wi) = v.at(ci, hi, wi + 1) - v.at(ci, hi, wi);
    return Variable<S>::result(std::move(out), {x}, [x, c, h, w](VarNode<S>& n) mutable {
        auto& gx = x.ensure_grad();
        for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t hi = 0; hi < h; ++hi)
                for (std::size_t wi = 0; wi + 1 < w; ++wi) {
                    const S g = n.grad.at(ci, hi, wi);
                    gx.at(ci, hi, wi + 1) += g;
                    gx.at(ci, hi, wi) -= g;
                }
    });
}

/// out[c,h,w] = x[c,h+1,w] - x[c,h,w]; drops the last row.
template <class S>
Variable<S> diff_y(Variable<S> x) {
    const auto& v = x.value();
    if (v.ndim() != 3 || v.size(1) < 2) throw ShapeError("diff_y needs CxHxW with H>=2, got " + shape_str(v.shape()));
    const std::size_t c = v.size(0), h = v.size(1), w = v.size(2);
    Tensor<S> out({c, h - 1, w});
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t hi = 0; hi + 1 < h; ++hi)
            for (std::size_t wi = 0; wi < w; ++wi) out.at(ci, hi, wi) = v.at(ci, hi + 1, wi) - v.at(ci, hi, wi);
    return Variable<S>::result(std::move(out), {x}, [x, c, h, w](VarNode<S>& n) mutable {
        auto& gx = x.ensure_grad();
        for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t hi = 0; hi + 1 < h; ++hi)
                for (std::size_t wi = 0; wi < w; ++wi) {
                    const S g = n.grad.at(ci, hi, wi);
                    gx.at(ci, hi + 1, wi) += g;
                    gx.at(ci, hi, wi) -= g;
                }
    });
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

struct ConvSpec {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_h = 3;
    std::size_t kernel_w = 3;
    std::size_t dilation = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;  // per side, both axes

    /// Shape-preserving spec for odd kernels at stride 1:
    /// pad = dilation * (k - 1) / 2 per side.
    static ConvSpec same(std::size_t in_ch, std::size_t out_ch, std::size_t k, std::size_t dilation = 1) {
        if (k % 2 == 0) throw ShapeError("'same' padding rule needs an odd kernel");
        return ConvSpec{in_ch, out_ch, k, k, dilation, 1, dilation * (k - 1) / 2};
    }

    std::size_t out_extent(std::size_t in) const {
        const std::size_t eff = dilation * (kernel_h - 1) + 1;
        if (in + 2 * padding < eff) {
            throw ShapeError("conv input extent " + std::to_string(in) + " smaller than effective kernel " +
                             std::to_string(eff));
        }
        return (in + 2 * padding - eff) / stride + 1;
    }
};

namespace detail {

template <class S>
void im2col(const Tensor<S>& x, const ConvSpec& sp, std::size_t oh, std::size_t ow, S* col) {
    const std::size_t cin = x.size(0), h = x.size(1), w = x.size(2);
    const std::size_t kh = sp.kernel_h, kw = sp.kernel_w;
    const std::size_t rows = cin * kh * kw;
#pragma omp parallel for schedule(static)
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t c = r / (kh * kw);
        const std::size_t ki = (r / kw) % kh;
        const std::size_t kj = r % kw;
        S* dst = col + r * (oh * ow);
        for (std::size_t i = 0; i < oh; ++i) {
            const long ih = static_cast<long>(i * sp.stride + ki * sp.dilation) - static_cast<long>(sp.padding);
            if (ih < 0 || ih >= static_cast<long>(h)) {
                for (std::size_t j = 0; j < ow; ++j) dst[i * ow + j] = S(0);
                continue;
            }
            const S* src = x.data() + (c * h + static_cast<std::size_t>(ih)) * w;
            for (std::size_t j = 0; j < ow; ++j) {
                const long iw = static_cast<long>(j * sp.stride + kj * sp.dilation) - static_cast<long>(sp.padding);
                dst[i * ow + j] = (iw < 0 || iw >= static_cast<long>(w)) ? S(0) : src[iw];
            }
        }
    }
}

template <class S>
void col2im_accumulate(const S* col, const ConvSpec& sp, std::size_t oh, std::size_t ow, Tensor<S>& dx) {
    const std::size_t cin = dx.size(0), h = dx.size(1), w = dx.size(2);
    const std::size_t kh = sp.kernel_h, kw = sp.kernel_w;
    const std::size_t rows = cin * kh * kw;
    // Sequential: distinct rows may scatter into the same input pixel.
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t c = r / (kh * kw);
        const std::size_t ki = (r / kw) % kh;
        const std::size_t kj = r % kw;
        const S* src = col + r * (oh * ow);
        for (std::size_t i = 0; i < oh; ++i) {
            const long ih = static_cast<long>(i * sp.stride + ki * sp.dilation) - static_cast<long>(sp.padding);
            if (ih < 0 || ih >= static_cast<long>(h)) continue;
            S* dst = dx.data() + (c * h + static_cast<std::size_t>(ih)) * w;
            for (std::size_t j = 0; j < ow; ++j) {
                const long iw = static_cast<long>(j * sp.stride + kj * sp.dilation) - static_cast<long>(sp.padding);
                if (iw >= 0 && iw < static_cast<long>(w)) dst[iw] += src[i * ow + j];
            }
        }
    }
}

}  // namespace detail

/// Cross-correlation with zero padding:
/// out extent = (in + 2*pad - dilation*(k-1) - 1)/stride + 1 per axis.
template <class S>
Variable<S> conv2d(Variable<S> x, Variable<S> w, Variable<S> b, const ConvSpec& sp) {
    const auto& xv = x.value();
    const auto& wv = w.value();
    const auto& bv = b.value();
    if (xv.ndim() != 3 || xv.size(0) != sp.in_channels) {
        throw ShapeError("conv2d: input " + shape_str(xv.shape()) + " does not match spec in_channels " +
                         std::to_string(sp.in_channels));
    }
    if (wv.ndim() != 4 || wv.size(0) != sp.out_channels || wv.size(1) != sp.in_channels ||
        wv.size(2) != sp.kernel_h || wv.size(3) != sp.kernel_w) {
        throw ShapeError("conv2d: weights " + shape_str(wv.shape()) + " do not match spec " +
                         shape_str({sp.out_channels, sp.in_channels, sp.kernel_h, sp.kernel_w}));
    }
    if (bv.ndim() != 1 || bv.size(0) != sp.out_channels) {
        throw ShapeError("conv2d: bias " + shape_str(bv.shape()) + " does not match out_channels " +
                         std::to_string(sp.out_channels));
    }

    const std::size_t oh = sp.out_extent(xv.size(1));
    const std::size_t ow_ = [&] {
        const std::size_t eff = sp.dilation * (sp.kernel_w - 1) + 1;
        if (xv.size(2) + 2 * sp.padding < eff) {
            throw ShapeError("conv input extent " + std::to_string(xv.size(2)) +
                             " smaller than effective kernel " + std::to_string(eff));
        }
        return (xv.size(2) + 2 * sp.padding - eff) / sp.stride + 1;
    }();

    const std::size_t ckk = sp.in_channels * sp.kernel_h * sp.kernel_w;
    const std::size_t npix = oh * ow_;

    std::vector<S> col(ckk * npix);
    detail::im2col(xv, sp, oh, ow_, col.data());

    Tensor<S> out({sp.out_channels, oh, ow_});
    detail::gemm_nn(sp.out_channels, ckk, npix, wv.data(), col.data(), out.data());
    for (std::size_t c = 0; c < sp.out_channels; ++c) {
        S* row = out.data() + c * npix;
        const S bias = bv[c];
        for (std::size_t i = 0; i < npix; ++i) row[i] += bias;
    }

    // The im2col buffer is recomputed in backward instead of being captured;
    // keeping it alive would dominate graph memory.
    return Variable<S>::result(
        std::move(out), {x, w, b}, [x, w, b, sp, oh, ow_, ckk, npix](VarNode<S>& n) mutable {
            const S* dy = n.grad.data();
            if (b.requires_grad()) {
                auto& gb = b.ensure_grad();
                for (std::size_t c = 0; c < sp.out_channels; ++c) {
                    S acc = S(0);
                    for (std::size_t i = 0; i < npix; ++i) acc += dy[c * npix + i];
                    gb[c] += acc;
                }
            }
            if (w.requires_grad()) {
                std::vector<S> col(ckk * npix);
                detail::im2col(x.value(), sp, oh, ow_, col.data());
                detail::gemm_nt(sp.out_channels, npix, ckk, dy, col.data(), w.ensure_grad().data());
            }
            if (x.requires_grad()) {
                std::vector<S> wt(ckk * sp.out_channels);
                const S* wd = w.value().data();
                for (std::size_t c = 0; c < sp.out_channels; ++c)
                    for (std::size_t r = 0; r < ckk; ++r) wt[r * sp.out_channels + c] = wd[c * ckk + r];
                std::vector<S> dcol(ckk * npix, S(0));
                detail::gemm_nn(ckk, sp.out_channels, npix, wt.data(), dy, dcol.data());
                detail::col2im_accumulate(dcol.data(), sp, oh, ow_, x.ensure_grad());
            }
        });
}

// ---------------------------------------------------------------------------
// Pooling / resampling / concatenation
// ---------------------------------------------------------------------------

/// Non-overlapping 2x2 max pooling. Requires even spatial extents.
template <class S>
Variable<S> maxpool2(Variable<S> x) {
    const auto& v = x.value();
    if (v.ndim() != 3) throw ShapeError("maxpool2 needs CxHxW, got " + shape_str(v.shape()));
    const std::size_t c = v.size(0), h = v.size(1), w = v.size(2);
    if (h % 2 != 0 || w % 2 != 0) {
        throw ShapeError("maxpool2 needs even spatial extents, got " + shape_str(v.shape()));
    }
    const std::size_t oh = h / 2, ow = w / 2;
    Tensor<S> out({c, oh, ow});
    auto argmax = std::make_shared<std::vector<std::size_t>>(c * oh * ow);
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                std::size_t best = (ci * h + 2 * i) * w + 2 * j;
                S bv = v[best];
                const std::size_t cands[3] = {best + 1, best + w, best + w + 1};
                for (std::size_t k = 0; k < 3; ++k) {
                    if (v[cands[k]] > bv) {
                        bv = v[cands[k]];
                        best = cands[k];
                    }
                }
                out.at(ci, i, j) = bv;
                (*argmax)[(ci * oh + i) * ow + j] = best;
            }
        }
    }
    return Variable<S>::result(std::move(out), {x}, [x, argmax](VarNode<S>& n) mutable {
        auto& gx = x.ensure_grad();
        for (std::size_t i = 0; i < n.grad.numel(); ++i) gx[(*argmax)[i]] += n.grad[i];
    });
}

/// Bilinear resize with corner-aligned sampling.
template <class S>
Variable<S> upsample_bilinear(Variable<S> x, std::size_t target_h, std::size_t target_w) {
    const auto& v = x.value();
    if (v.ndim() != 3) throw ShapeError("upsample_bilinear needs CxHxW, got " + shape_str(v.shape()));
    const std::size_t c = v.size(0), h = v.size(1), w = v.size(2);
    if (target_h == 0 || target_w == 0) throw ShapeError("upsample_bilinear: zero target extent");

    struct Tap {
        std::size_t lo, hi;
        S frac;
    };
    auto make_taps = [](std::size_t in, std::size_t out) {
        std::vector<Tap> taps(out);
        for (std::size_t i = 0; i < out; ++i) {
            const double src = out == 1 ? 0.0 : static_cast<double>(i) * (in - 1) / (out - 1);
            const auto lo = static_cast<std::size_t>(src);
            taps[i] = {lo, std::min(lo + 1, in - 1), static_cast<S>(src - static_cast<double>(lo))};
        }
        return taps;
    };
    auto ytaps = std::make_shared<std::vector<Tap>>(make_taps(h, target_h));
    auto xtaps = std::make_shared<std::vector<Tap>>(make_taps(w, target_w));

    Tensor<S> out({c, target_h, target_w});
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t i = 0; i < target_h; ++i) {
            const Tap& ty = (*ytaps)[i];
            for (std::size_t j = 0; j < target_w; ++j) {
                const Tap& tx = (*xtaps)[j];
                const S v00 = v.at(ci, ty.lo, tx.lo), v01 = v.at(ci, ty.lo, tx.hi);
                const S v10 = v.at(ci, ty.hi, tx.lo), v11 = v.at(ci, ty.hi, tx.hi);
                const S top = v00 + (v01 - v00) * tx.frac;
                const S bot = v10 + (v11 - v10) * tx.frac;
                out.at(ci, i, j) = top + (bot - top) * ty.frac;
            }
        }
    }
    return Variable<S>::result(
        std::move(out), {x}, [x, ytaps, xtaps, c, target_h, target_w](VarNode<S>& n) mutable {
            auto& gx = x.ensure_grad();
            for (std::size_t ci = 0; ci < c; ++ci) {
                for (std::size_t i = 0; i < target_h; ++i) {
                    const Tap& ty = (*ytaps)[i];
                    for (std::size_t j = 0; j < target_w; ++j) {
                        const Tap& tx = (*xtaps)[j];
                        const S g = n.grad.at(ci, i, j);
                        const S fy = ty.frac, fx = tx.frac;
                        gx.at(ci, ty.lo, tx.lo) += g * (S(1) - fy) * (S(1) - fx);
                        gx.at(ci, ty.lo, tx.hi) += g * (S(1) - fy) * fx;
                        gx.at(ci, ty.hi, tx.lo) += g * fy * (S(1) - fx);
                        gx.at(ci, ty.hi, tx.hi) += g * fy * fx;
                    }
                }
            }
        });
}

/// Stacks CxHxW tensors along the channel axis in argument order.
template <class S>
Variable<S> concat_channels(std::vector<Variable<S>> xs) {
    std::vector<Tensor<S>> values;
    values.reserve(xs.size());
    for (const auto& x : xs) values.push_back(x.value());
    Tensor<S> out = concat_channels_values(values);
    std::vector<Variable<S>> parents = xs;
    return Variable<S>::result(std::move(out), std::move(parents), [xs](VarNode<S>& n) mutable {
        std::size_t offset = 0;
        for (auto& x : xs) {
            const std::size_t count = x.numel();
            if (x.requires_grad()) {
                auto& gx = x.ensure_grad();
                for (std::size_t i = 0; i < count; ++i) gx[i] += n.grad[offset + i];
            }
            offset += count;
        }
    });
}

}  // namespace fusenet
