// Singular values and nuclear norm for small dense matrices.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "fusenet/common.hpp"
#include "fusenet/tensor.hpp"

namespace fusenet {

namespace detail {

/// Singular values of an m x n row-major matrix by one-sided (Hestenes)
/// Jacobi rotations, descending order. Always runs in double; one-sided
/// Jacobi delivers high relative accuracy, comfortably inside the 1e-9
/// contract for matrices up to 512x512.
inline std::vector<double> jacobi_singular_values(std::size_t m, std::size_t n, const double* a) {
    // Operate on columns of the taller orientation.
    std::size_t rows = m, cols = n;
    std::vector<double> w;
    if (m >= n) {
        w.assign(a, a + m * n);
    } else {
        rows = n;
        cols = m;
        w.resize(m * n);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) w[j * cols + i] = a[i * n + j];
    }

    const double tol = 1e-14;
    const int max_sweeps = 60;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < cols; ++p) {
            for (std::size_t q = p + 1; q < cols; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < rows; ++i) {
                    const double wp = w[i * cols + p], wq = w[i * cols + q];
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < rows; ++i) {
                    const double wp = w[i * cols + p], wq = w[i * cols + q];
                    w[i * cols + p] = c * wp - s * wq;
                    w[i * cols + q] = s * wp + c * wq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<double> sigma(cols, 0.0);
    for (std::size_t j = 0; j < cols; ++j) {
        double norm2 = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
            const double v = w[i * cols + j];
            norm2 += v * v;
        }
        sigma[j] = std::sqrt(norm2);
    }
    std::sort(sigma.begin(), sigma.end(), std::greater<double>());
    return sigma;
}

}  // namespace detail

/// Singular values of a 2-D tensor, descending.
template <class S>
std::vector<double> singular_values(const Tensor<S>& m) {
    if (m.ndim() != 2) throw ShapeError("singular_values needs a 2-D tensor, got " + shape_str(m.shape()));
    if (!m.all_finite()) throw NumericError("singular_values: non-finite entry");
    std::vector<double> a(m.numel());
    for (std::size_t i = 0; i < m.numel(); ++i) a[i] = static_cast<double>(m[i]);
    return detail::jacobi_singular_values(m.size(0), m.size(1), a.data());
}

/// Sum of singular values.
template <class S>
double nuclear_norm(const Tensor<S>& m) {
    const auto sigma = singular_values(m);
    double sum = 0.0;
    for (double s : sigma) sum += s;
    return sum;
}

template <class S>
double frobenius_norm(const Tensor<S>& m) {
    double sum = 0.0;
    for (std::size_t i = 0; i < m.numel(); ++i) {
        const double v = static_cast<double>(m[i]);
        sum += v * v;
    }
    return std::sqrt(sum);
}

template <class S>
double spectral_norm(const Tensor<S>& m) {
    const auto sigma = singular_values(m);
    return sigma.empty() ? 0.0 : sigma.front();
}

}  // namespace fusenet
