#pragma once

#include <cmath>
#include <functional>

#include "fallmon/nn/tensor.hpp"

namespace fallmon::nn {

inline constexpr double kFiniteDifferenceStep = 1e-5;

/// Central-difference gradient of a scalar function, one coordinate at a time.
inline Tensor<double> finite_diff_grad(const std::function<double(const Tensor<double>&)>& loss,
                                       Tensor<double> params, double h = kFiniteDifferenceStep) {
    Tensor<double> grad(params.shape());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + h;
        const double up = loss(params);
        params[i] = saved - h;
        const double down = loss(params);
        params[i] = saved;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

/// |a − n| / (|a| + |n| + 1e-12)
inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-12);
}

}  // namespace fallmon::nn
