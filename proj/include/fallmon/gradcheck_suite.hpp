#pragma once

// Analytic-versus-numeric gradient audit of every layer kernel and of a small
// end-to-end FallNet, run in double precision.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fallmon/nn/layers.hpp"

namespace fallmon::gradcheck {

inline constexpr double kTolerance = 1e-4;
inline constexpr std::size_t kDefaultSeeds = 20;

struct Worst {
    double error = 0;
    double analytic = 0;
    double numeric = 0;
    std::string coordinate;  // e.g. "kernels[17]"
    std::uint64_t seed = 0;
};

struct LayerReport {
    std::string name;
    std::size_t coordinates = 0;
    Worst worst;

    bool passed() const { return worst.error <= kTolerance; }
};

struct Report {
    std::vector<LayerReport> layers;

    bool passed() const;
    /// One line per layer; stable text for a given seed.
    std::string format() const;
};

/// Replacement for the dense backward kernel; used to inject faults.
using DenseBackward = std::function<nn::DenseGrads<double>(const nn::Tensor<double>&, const nn::Tensor<double>&,
                                                           const nn::Tensor<double>&)>;

struct Options {
    std::uint64_t seed = 1;
    std::size_t seeds = kDefaultSeeds;             // seeds seed, seed+1, ...
    std::size_t samples_per_tensor = 24;           // FallNet coordinates checked per parameter tensor
    std::size_t input_side = 8;                    // FallNet input is side×side×3
    DenseBackward dense_backward;                  // defaults to nn::dense_backward
};

Report run(const Options& options);

}  // namespace fallmon::gradcheck
