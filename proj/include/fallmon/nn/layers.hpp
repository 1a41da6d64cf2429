#pragma once

// Forward and backward kernels for the layer types used by FallNet. All of them
// are pure functions over H×W×C (channels-last) tensors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "fallmon/nn/tensor.hpp"

namespace fallmon::nn {

inline constexpr std::size_t kKernelSize = 3;

template <typename T>
struct Conv2dGrads {
    Tensor<T> input;    // H×W×C
    Tensor<T> kernels;  // 3×3×C×F
    Tensor<T> bias;     // F
};

template <typename T>
struct DenseGrads {
    Tensor<T> input;    // same shape as the forward input
    Tensor<T> weights;  // N×M
    Tensor<T> bias;     // M
};

namespace detail {

template <typename T>
void check_conv_shapes(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias) {
    if (input.rank() != 3) throw ShapeError("conv2d input must be H×W×C, got " + to_string(input.shape()));
    if (kernels.rank() != 4 || kernels.dim(0) != kKernelSize || kernels.dim(1) != kKernelSize) {
        throw ShapeError("conv2d kernels must be 3×3×C×F, got " + to_string(kernels.shape()));
    }
    if (kernels.dim(2) != input.dim(2)) {
        throw ShapeError("conv2d channel mismatch: input has " + std::to_string(input.dim(2)) +
                         " channels, kernels expect " + std::to_string(kernels.dim(2)));
    }
    if (bias.size() != kernels.dim(3)) {
        throw ShapeError("conv2d bias length " + std::to_string(bias.size()) + " != filter count " +
                         std::to_string(kernels.dim(3)));
    }
}

}  // namespace detail

/// 3×3 convolution, stride 1, zero "same" padding.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias) {
    detail::check_conv_shapes(input, kernels, bias);
    const std::size_t h = input.dim(0), w = input.dim(1), c_in = input.dim(2), f_out = kernels.dim(3);
    Tensor<T> out({h, w, f_out});
    const T* in = input.data();
    const T* k = kernels.data();
    T* o = out.data();

    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            T* orow = o + (y * w + x) * f_out;
            std::copy(bias.data(), bias.data() + f_out, orow);
            for (std::size_t ky = 0; ky < kKernelSize; ++ky) {
                const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < kKernelSize; ++kx) {
                    const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
                    if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                    const T* ip = in + (static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)) * c_in;
                    const T* kp = k + (ky * kKernelSize + kx) * c_in * f_out;
                    for (std::size_t c = 0; c < c_in; ++c) {
                        const T v = ip[c];
                        const T* kc = kp + c * f_out;
                        for (std::size_t f = 0; f < f_out; ++f) orow[f] += v * kc[f];
                    }
                }
            }
        }
    }
    return out;
}

/// Gradients of sum(upstream ⊙ conv2d_forward(input, kernels, ·)).
template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& upstream) {
    if (kernels.rank() != 4) throw ShapeError("conv2d kernels must be 3×3×C×F, got " + to_string(kernels.shape()));
    detail::check_conv_shapes(input, kernels, Tensor<T>({kernels.dim(3)}));
    const std::size_t h = input.dim(0), w = input.dim(1), c_in = input.dim(2), f_out = kernels.dim(3);
    if (upstream.shape() != Shape{h, w, f_out}) {
        throw ShapeError("conv2d upstream shape " + to_string(upstream.shape()) + " != " +
                         to_string(Shape{h, w, f_out}));
    }

    Conv2dGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(kernels.shape()), Tensor<T>({f_out})};
    const T* in = input.data();
    const T* k = kernels.data();
    const T* up = upstream.data();
    T* din = g.input.data();
    T* dk = g.kernels.data();
    T* db = g.bias.data();

    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const T* urow = up + (y * w + x) * f_out;
            for (std::size_t f = 0; f < f_out; ++f) db[f] += urow[f];
            for (std::size_t ky = 0; ky < kKernelSize; ++ky) {
                const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < kKernelSize; ++kx) {
                    const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
                    if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                    const std::size_t src = (static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)) * c_in;
                    const std::size_t koff = (ky * kKernelSize + kx) * c_in * f_out;
                    for (std::size_t c = 0; c < c_in; ++c) {
                        const T v = in[src + c];
                        const T* kc = k + koff + c * f_out;
                        T* dkc = dk + koff + c * f_out;
                        T acc = 0;
                        for (std::size_t f = 0; f < f_out; ++f) {
                            dkc[f] += v * urow[f];
                            acc += kc[f] * urow[f];
                        }
                        din[src + c] += acc;
                    }
                }
            }
        }
    }
    return g;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
    Tensor<T> out = input;
    for (auto& v : out.values()) v = v > T{0} ? v : T{0};
    return out;
}

/// Passes upstream where input > 0; the subgradient at 0 is 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& upstream) {
    if (input.shape() != upstream.shape()) {
        throw ShapeError("relu upstream shape " + to_string(upstream.shape()) + " != " + to_string(input.shape()));
    }
    Tensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T{0} ? upstream[i] : T{0};
    return out;
}

inline Shape pooled_shape(const Shape& input) {
    if (input.size() != 3) throw ShapeError("maxpool2d input must be H×W×C, got " + to_string(input));
    return {(input[0] + 1) / 2, (input[1] + 1) / 2, input[2]};
}

namespace detail {

/// Flat input index of the maximum inside output cell (oy, ox, c). Odd trailing
/// edges behave as −∞ padding, so the window is clipped. Ties keep the first
/// position in row-major order.
template <typename T>
std::size_t pool_argmax(const Tensor<T>& input, std::size_t oy, std::size_t ox, std::size_t c) {
    const std::size_t h = input.dim(0), w = input.dim(1), ch = input.dim(2);
    std::size_t best = (2 * oy * w + 2 * ox) * ch + c;
    for (std::size_t dy = 0; dy < 2; ++dy) {
        const std::size_t y = 2 * oy + dy;
        if (y >= h) break;
        for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t x = 2 * ox + dx;
            if (x >= w) break;
            const std::size_t idx = (y * w + x) * ch + c;
            if (input[idx] > input[best]) best = idx;
        }
    }
    return best;
}

}  // namespace detail

/// 2×2 max pooling with stride 2; output is ⌈H/2⌉×⌈W/2⌉×C.
template <typename T>
Tensor<T> maxpool2d_forward(const Tensor<T>& input) {
    Tensor<T> out(pooled_shape(input.shape()));
    const std::size_t oh = out.dim(0), ow = out.dim(1), ch = out.dim(2);
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x)
            for (std::size_t c = 0; c < ch; ++c) out.at(y, x, c) = input[detail::pool_argmax(input, y, x, c)];
    return out;
}

/// Routes each upstream value to its window's argmax position.
template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& input, const Tensor<T>& upstream) {
    const Shape expected = pooled_shape(input.shape());
    if (upstream.shape() != expected) {
        throw ShapeError("maxpool2d upstream shape " + to_string(upstream.shape()) + " != " + to_string(expected));
    }
    Tensor<T> out(input.shape());
    for (std::size_t y = 0; y < expected[0]; ++y)
        for (std::size_t x = 0; x < expected[1]; ++x)
            for (std::size_t c = 0; c < expected[2]; ++c)
                out[detail::pool_argmax(input, y, x, c)] += upstream.at(y, x, c);
    return out;
}

/// out = inputᵀ·weights + bias. The input is read flat, whatever its shape.
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
    if (weights.rank() != 2 || weights.dim(0) != input.size() || bias.size() != weights.dim(1)) {
        throw ShapeError("dense shapes do not match: input " + to_string(input.shape()) + ", weights " +
                         to_string(weights.shape()) + ", bias " + to_string(bias.shape()));
    }
    const std::size_t n = weights.dim(0), m = weights.dim(1);
    Tensor<T> out({m});
    std::copy(bias.data(), bias.data() + m, out.data());
    for (std::size_t i = 0; i < n; ++i) {
        const T v = input[i];
        const T* wr = weights.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) out[j] += v * wr[j];
    }
    return out;
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& upstream) {
    if (weights.rank() != 2 || weights.dim(0) != input.size() || upstream.size() != weights.dim(1)) {
        throw ShapeError("dense backward shapes do not match: input " + to_string(input.shape()) + ", weights " +
                         to_string(weights.shape()) + ", upstream " + to_string(upstream.shape()));
    }
    const std::size_t n = weights.dim(0), m = weights.dim(1);
    DenseGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weights.shape()), Tensor<T>({m})};
    std::copy(upstream.data(), upstream.data() + m, g.bias.data());
    for (std::size_t i = 0; i < n; ++i) {
        const T v = input[i];
        const T* wr = weights.data() + i * m;
        T* dwr = g.weights.data() + i * m;
        T acc = 0;
        for (std::size_t j = 0; j < m; ++j) {
            dwr[j] = v * upstream[j];
            acc += wr[j] * upstream[j];
        }
        g.input[i] = acc;
    }
    return g;
}

/// Logistic function; branches on sign so exp() never overflows.
template <typename T>
T sigmoid(T x) {
    if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
    const T e = std::exp(x);
    return e / (T{1} + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
    Tensor<T> out = input;
    for (auto& v : out.values()) v = sigmoid(v);
    return out;
}

}  // namespace fallmon::nn
