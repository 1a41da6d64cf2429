#pragma once

#include <cmath>
#include <cstdint>

#include "fallmon/nn/tensor.hpp"

namespace fallmon::nn {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Per-parameter optimizer moments.
template <typename T>
struct AdamState {
    Tensor<T> m;
    Tensor<T> v;
    std::uint64_t t = 0;
    AdamConfig config;

    AdamState() = default;
    AdamState(const Shape& shape, AdamConfig cfg) : m(shape), v(shape), config(cfg) {}
};

/// One bias-corrected Adam update of `param` in place. `state.t` is the step
/// count before this call and is incremented.
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state) {
    if (param.shape() != grad.shape() || state.m.shape() != param.shape() || state.v.shape() != param.shape()) {
        throw ShapeError("adam shapes do not match: param " + to_string(param.shape()) + ", grad " +
                         to_string(grad.shape()) + ", moments " + to_string(state.m.shape()));
    }
    state.t += 1;
    const auto& c = state.config;
    const double t = static_cast<double>(state.t);
    const T b1 = static_cast<T>(c.beta1);
    const T b2 = static_cast<T>(c.beta2);
    const T correction1 = static_cast<T>(1.0 - std::pow(c.beta1, t));
    const T correction2 = static_cast<T>(1.0 - std::pow(c.beta2, t));
    const T lr = static_cast<T>(c.lr);
    const T eps = static_cast<T>(c.epsilon);

    for (std::size_t i = 0; i < param.size(); ++i) {
        const T g = grad[i];
        state.m[i] = b1 * state.m[i] + (T{1} - b1) * g;
        state.v[i] = b2 * state.v[i] + (T{1} - b2) * g * g;
        const T m_hat = state.m[i] / correction1;
        const T v_hat = state.v[i] / correction2;
        param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

}  // namespace fallmon::nn
