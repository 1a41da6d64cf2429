#pragma once

#include <cstdint>
#include <random>

#include "fallmon/nn/tensor.hpp"

namespace fallmon::nn {

inline constexpr double kInitStdDev = 0.01;

/// I.i.d. Normal(0, sd²) samples drawn from std::mt19937_64 seeded with `seed`
/// through std::normal_distribution<double>. Results are reproducible for a
/// given standard library; they are not guaranteed identical across vendors.
template <typename T>
Tensor<T> gaussian_init(const Shape& shape, double sd, std::uint64_t seed) {
    if (!(sd > 0.0)) throw InputError("gaussian_init standard deviation must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, sd);
    Tensor<T> out(shape);
    for (auto& v : out.values()) v = static_cast<T>(dist(rng));
    return out;
}

}  // namespace fallmon::nn
