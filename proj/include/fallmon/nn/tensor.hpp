#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fallmon/errors.hpp"

namespace fallmon::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// Dense row-major array. The last dimension is contiguous, so an H×W×C image
/// stores channels innermost.
template <typename T>
class Tensor {
public:
    using value_type = T;

    /// A single zero scalar with shape [1].
    Tensor() : shape_{1}, data_(1, T{0}) {}

    explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
        check_dims(shape_);
        data_.assign(element_count(shape_), fill);
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_dims(shape_);
        if (data_.size() != element_count(shape_)) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + nn::to_string(shape_));
        }
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    /// Element (y, x, c) of a rank-3 tensor.
    T& at(std::size_t y, std::size_t x, std::size_t c) noexcept {
        return data_[(y * shape_[1] + x) * shape_[2] + c];
    }
    const T& at(std::size_t y, std::size_t x, std::size_t c) const noexcept {
        return data_[(y * shape_[1] + x) * shape_[2] + c];
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    /// Same data viewed under a new shape with equal element count.
    Tensor reshaped(Shape shape) const {
        if (element_count(shape) != data_.size()) {
            throw ShapeError("cannot reshape " + nn::to_string(shape_) + " to " + nn::to_string(shape));
        }
        return Tensor(std::move(shape), data_);
    }

    template <typename U>
    Tensor<U> cast() const {
        return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
    }

    bool operator==(const Tensor&) const = default;

private:
    static void check_dims(const Shape& shape) {
        for (auto d : shape) {
            if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + nn::to_string(shape));
        }
    }

    Shape shape_;
    std::vector<T> data_;
};

}  // namespace fallmon::nn
