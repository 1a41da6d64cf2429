#pragma once

#include <algorithm>
#include <cmath>

#include "fallmon/errors.hpp"

namespace fallmon::nn {

/// Probabilities are clamped into [kProbabilityClamp, 1 - kProbabilityClamp].
inline constexpr double kProbabilityClamp = 1e-7;

template <typename T>
struct BceResult {
    T loss;
    T grad;  // dLoss/dp at the clamped probability
};

/// Binary cross-entropy for a single prediction. `label` must be 0 or 1.
template <typename T>
BceResult<T> bce_loss(T probability, int label) {
    if (label != 0 && label != 1) throw InputError("bce label must be 0 or 1, got " + std::to_string(label));
    const T eps = static_cast<T>(kProbabilityClamp);
    const T p = std::clamp(probability, eps, T{1} - eps);
    if (label == 1) return {-std::log(p), -T{1} / p};
    return {-std::log(T{1} - p), T{1} / (T{1} - p)};
}

}  // namespace fallmon::nn
