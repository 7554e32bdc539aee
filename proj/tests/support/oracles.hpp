// Independent reference implementations the library is checked against.
// These deliberately avoid the library's computation paths: convolution is a
// literal nested loop and singular values come from Eigen.
#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <vector>

#include "fusenet/autodiff.hpp"
#include "fusenet/tensor.hpp"

namespace testsupport {

/// Direct nested-loop cross-correlation with zero padding.
inline fusenet::Tensor<double> conv2d_reference(const fusenet::Tensor<double>& x,
                                                const fusenet::Tensor<double>& w,
                                                const fusenet::Tensor<double>& b,
                                                const fusenet::ConvSpec& sp) {
    const long h = static_cast<long>(x.size(1)), wid = static_cast<long>(x.size(2));
    const long kh = static_cast<long>(sp.kernel_h), kw = static_cast<long>(sp.kernel_w);
    const long oh = static_cast<long>((h + 2 * sp.padding - sp.dilation * (kh - 1) - 1) / sp.stride + 1);
    const long ow = static_cast<long>((wid + 2 * sp.padding - sp.dilation * (kw - 1) - 1) / sp.stride + 1);
    fusenet::Tensor<double> out({sp.out_channels, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
    for (std::size_t oc = 0; oc < sp.out_channels; ++oc) {
        for (long i = 0; i < oh; ++i) {
            for (long j = 0; j < ow; ++j) {
                double acc = b[oc];
                for (std::size_t ic = 0; ic < sp.in_channels; ++ic) {
                    for (long ki = 0; ki < kh; ++ki) {
                        for (long kj = 0; kj < kw; ++kj) {
                            const long ii = i * static_cast<long>(sp.stride) - static_cast<long>(sp.padding) +
                                            ki * static_cast<long>(sp.dilation);
                            const long jj = j * static_cast<long>(sp.stride) - static_cast<long>(sp.padding) +
                                            kj * static_cast<long>(sp.dilation);
                            if (ii < 0 || ii >= h || jj < 0 || jj >= wid) continue;
                            acc += x.at(ic, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj)) *
                                   w[((oc * sp.in_channels + ic) * sp.kernel_h + static_cast<std::size_t>(ki)) *
                                         sp.kernel_w +
                                     static_cast<std::size_t>(kj)];
                        }
                    }
                }
                out.at(oc, static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = acc;
            }
        }
    }
    return out;
}

template <class S>
std::vector<double> singular_values_reference(const fusenet::Tensor<S>& m) {
    Eigen::MatrixXd a(m.size(0), m.size(1));
    for (std::size_t i = 0; i < m.size(0); ++i)
        for (std::size_t j = 0; j < m.size(1); ++j) a(static_cast<long>(i), static_cast<long>(j)) = m.at(i, j);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    std::vector<double> out(svd.singularValues().size());
    for (long i = 0; i < svd.singularValues().size(); ++i) out[static_cast<std::size_t>(i)] = svd.singularValues()(i);
    return out;
}

template <class S>
double nuclear_norm_reference(const fusenet::Tensor<S>& m) {
    double sum = 0.0;
    for (double s : singular_values_reference(m)) sum += s;
    return sum;
}

template <class S>
fusenet::Tensor<S> random_tensor(std::vector<std::size_t> shape, fusenet::Rng& rng, double lo = -1.0,
                                 double hi = 1.0) {
    fusenet::Tensor<S> t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(rng.uniform(lo, hi));
    return t;
}

}  // namespace testsupport
