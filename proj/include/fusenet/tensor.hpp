// Dense row-major N-D tensor of real values.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "fusenet/common.hpp"

namespace fusenet {

/// Value-semantic tensor. Shape and storage only; gradients live on the
/// autodiff graph (see autodiff.hpp). Scalar is float for training numerics
/// and double for wide-precision verification.
template <class S>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, S fill = S(0))
        : shape_(std::move(shape)), data_(checked_numel(shape_), fill) {}

    Tensor(std::vector<std::size_t> shape, std::vector<S> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_numel(shape_) != data_.size()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
        }
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, S value) { return Tensor(std::move(shape), value); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t size(std::size_t axis) const { return shape_.at(axis); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }
    std::vector<S>& vec() { return data_; }
    const std::vector<S>& vec() const { return data_; }

    S& operator[](std::size_t i) { return data_[i]; }
    const S& operator[](std::size_t i) const { return data_[i]; }

    // 2-D (h,w) and 3-D (c,h,w) element access.
    S& at(std::size_t h, std::size_t w) { return data_[h * shape_[1] + w]; }
    const S& at(std::size_t h, std::size_t w) const { return data_[h * shape_[1] + w]; }
    S& at(std::size_t c, std::size_t h, std::size_t w) {
        return data_[(c * shape_[1] + h) * shape_[2] + w];
    }
    const S& at(std::size_t c, std::size_t h, std::size_t w) const {
        return data_[(c * shape_[1] + h) * shape_[2] + w];
    }

    Tensor reshape(std::vector<std::size_t> new_shape) const {
        if (checked_numel(new_shape) != numel()) {
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(new_shape));
        }
        return Tensor(std::move(new_shape), data_);
    }

    /// Channels [c0, c1) of a CxHxW tensor.
    Tensor slice_channels(std::size_t c0, std::size_t c1) const {
        if (ndim() != 3 || c1 > shape_[0] || c0 >= c1) {
            throw ShapeError("invalid channel slice [" + std::to_string(c0) + "," + std::to_string(c1) +
                             ") of " + shape_str(shape_));
        }
        const std::size_t plane = shape_[1] * shape_[2];
        std::vector<S> out(data_.begin() + static_cast<std::ptrdiff_t>(c0 * plane),
                           data_.begin() + static_cast<std::ptrdiff_t>(c1 * plane));
        return Tensor({c1 - c0, shape_[1], shape_[2]}, std::move(out));
    }

    Tensor transposed2d() const {
        if (ndim() != 2) throw ShapeError("transpose needs a 2-D tensor, got " + shape_str(shape_));
        Tensor out({shape_[1], shape_[0]});
        for (std::size_t i = 0; i < shape_[0]; ++i)
            for (std::size_t j = 0; j < shape_[1]; ++j) out.at(j, i) = at(i, j);
        return out;
    }

    template <class T>
    Tensor<T> cast() const {
        std::vector<T> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<T>(data_[i]);
        return Tensor<T>(shape_, std::move(out));
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](S v) { return std::isfinite(v); });
    }

    S min() const { return *std::min_element(data_.begin(), data_.end()); }
    S max() const { return *std::max_element(data_.begin(), data_.end()); }
    double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    static std::size_t checked_numel(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) {
            if (d == 0) throw ShapeError("zero extent in shape " + shape_str(shape));
            n *= d;
        }
        return shape.empty() ? 0 : n;
    }

    std::vector<std::size_t> shape_;
    std::vector<S> data_;
};

template <class S>
Tensor<S> concat_channels_values(const std::vector<Tensor<S>>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels on empty list");
    const std::size_t h = xs[0].size(1), w = xs[0].size(2);
    std::size_t channels = 0;
    for (const auto& x : xs) {
        if (x.ndim() != 3 || x.size(1) != h || x.size(2) != w) {
            throw ShapeError("concat_channels spatial mismatch: " + shape_str(xs[0].shape()) + " vs " +
                             shape_str(x.shape()));
        }
        channels += x.size(0);
    }
    Tensor<S> out({channels, h, w});
    std::size_t offset = 0;
    for (const auto& x : xs) {
        std::copy(x.data(), x.data() + x.numel(), out.data() + offset);
        offset += x.numel();
    }
    return out;
}

}  // namespace fusenet
