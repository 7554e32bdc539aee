// Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8).
#pragma once

#include <cmath>
#include <vector>

#include "fusenet/autodiff.hpp"
#include "fusenet/common.hpp"
#include "fusenet/tensor.hpp"

namespace fusenet {

template <class S>
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Variable<S>> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto& p : params_) {
            m_.push_back(Tensor<S>::zeros(p.value().shape()));
            v_.push_back(Tensor<S>::zeros(p.value().shape()));
            p.ensure_grad();
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& p = params_[k];
            const Tensor<S>& g = p.grad();
            if (g.numel() != p.numel()) {
                throw ShapeError("adam: gradient shape does not match parameter shape");
            }
            Tensor<S>& m = m_[k];
            Tensor<S>& v = v_[k];
            Tensor<S>& value = p.value();
            for (std::size_t i = 0; i < value.numel(); ++i) {
                const double gi = static_cast<double>(g[i]);
                const double mi = beta1_ * static_cast<double>(m[i]) + (1.0 - beta1_) * gi;
                const double vi = beta2_ * static_cast<double>(v[i]) + (1.0 - beta2_) * gi * gi;
                m[i] = static_cast<S>(mi);
                v[i] = static_cast<S>(vi);
                const double mhat = mi / bc1;
                const double vhat = vi / bc2;
                value[i] = static_cast<S>(static_cast<double>(value[i]) - lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    long step_count() const { return t_; }

private:
    std::vector<Variable<S>> params_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Tensor<S>> m_, v_;
};

}  // namespace fusenet
