#pragma once

#include <string>

#include "fallmon/nn/tensor.hpp"

namespace fallmon {

/// RGB image, H×W×3, values in [0,1].
using Image = nn::Tensor<float>;

enum class Label : int { NotFall = 0, Fall = 1 };

inline int to_int(Label l) { return static_cast<int>(l); }

inline const char* to_string(Label l) { return l == Label::Fall ? "fall" : "not_fall"; }

struct LabeledSample {
    std::string source_path;
    Image image;
    Label label = Label::NotFall;
};

}  // namespace fallmon
