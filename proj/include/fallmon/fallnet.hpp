#pragma once

// FallNet: six conv(3×3, same) → ReLU → maxpool(2×2) blocks with filters
// 16,16,32,32,64,64, then flatten → dense(32) → ReLU → dense(1) → sigmoid.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fallmon/nn/adam.hpp"
#include "fallmon/nn/layers.hpp"
#include "fallmon/nn/loss.hpp"
#include "fallmon/nn/tensor.hpp"
#include "fallmon/sample.hpp"

namespace fallmon::fallnet {

using nn::Shape;
using nn::Tensor;

/// Tag values are part of the checkpoint format.
enum class LayerKind : std::uint8_t {
    Conv2d = 0,
    Relu = 1,
    MaxPool2d = 2,
    Flatten = 3,
    Dense = 4,
    Sigmoid = 5,
};

const char* to_string(LayerKind kind);

inline constexpr std::size_t kConvBlocks = 6;
inline constexpr std::size_t kFilterSchedule[kConvBlocks] = {16, 16, 32, 32, 64, 64};
inline constexpr std::size_t kHiddenUnits = 32;
inline const Shape kDefaultInput = {64, 64, 3};

template <typename T>
struct Layer {
    LayerKind kind = LayerKind::Relu;
    Tensor<T> weights;  // conv: 3×3×C×F, dense: N×M; unused otherwise
    Tensor<T> bias;     // conv: F, dense: M; unused otherwise

    bool has_parameters() const { return kind == LayerKind::Conv2d || kind == LayerKind::Dense; }
};

/// Parameter gradients for one layer; empty tensors for parameter-free layers.
template <typename T>
struct LayerGrads {
    Tensor<T> weights;
    Tensor<T> bias;
};

template <typename T>
class Model {
public:
    Model() = default;
    Model(Shape input_shape, std::vector<Layer<T>> layers)
        : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {}

    const Shape& input_shape() const noexcept { return input_shape_; }
    const std::vector<Layer<T>>& layers() const noexcept { return layers_; }
    std::vector<Layer<T>>& layers() noexcept { return layers_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_)
            if (l.has_parameters()) n += l.weights.size() + l.bias.size();
        return n;
    }

    /// activations[i] is the input of layer i; activations.back() is the output.
    struct Trace {
        std::vector<Tensor<T>> activations;
        T probability() const { return activations.back()[0]; }
    };

    Trace forward_trace(const Tensor<T>& image) const {
        if (image.shape() != input_shape_) {
            throw ShapeError("model expects input " + nn::to_string(input_shape_) + ", got " +
                             nn::to_string(image.shape()));
        }
        Trace trace;
        trace.activations.reserve(layers_.size() + 1);
        trace.activations.push_back(image);
        for (const auto& layer : layers_) trace.activations.push_back(apply(layer, trace.activations.back()));
        return trace;
    }

    /// Probability of class "fall".
    T forward(const Tensor<T>& image) const {
        if (image.shape() != input_shape_) {
            throw ShapeError("model expects input " + nn::to_string(input_shape_) + ", got " +
                             nn::to_string(image.shape()));
        }
        Tensor<T> x = image;
        for (const auto& layer : layers_) x = apply(layer, x);
        return x[0];
    }

    /// Backpropagates dLoss/dOutput through the recorded trace. Returns one
    /// entry per layer plus the input gradient via `input_grad` when non-null.
    std::vector<LayerGrads<T>> backward(const Trace& trace, const Tensor<T>& output_grad,
                                        Tensor<T>* input_grad = nullptr) const {
        std::vector<LayerGrads<T>> grads(layers_.size());
        Tensor<T> up = output_grad;
        for (std::size_t i = layers_.size(); i-- > 0;) {
            const auto& layer = layers_[i];
            const auto& in = trace.activations[i];
            switch (layer.kind) {
                case LayerKind::Conv2d: {
                    auto g = nn::conv2d_backward(in, layer.weights, up);
                    grads[i] = {std::move(g.kernels), std::move(g.bias)};
                    up = std::move(g.input);
                    break;
                }
                case LayerKind::Dense: {
                    auto g = nn::dense_backward(in, layer.weights, up);
                    grads[i] = {std::move(g.weights), std::move(g.bias)};
                    up = std::move(g.input);
                    break;
                }
                case LayerKind::Relu:
                    up = nn::relu_backward(in, up);
                    break;
                case LayerKind::MaxPool2d:
                    up = nn::maxpool2d_backward(in, up);
                    break;
                case LayerKind::Flatten:
                    up = up.reshaped(in.shape());
                    break;
                case LayerKind::Sigmoid: {
                    const auto& out = trace.activations[i + 1];
                    Tensor<T> d(in.shape());
                    for (std::size_t k = 0; k < d.size(); ++k) d[k] = up[k] * out[k] * (T{1} - out[k]);
                    up = std::move(d);
                    break;
                }
            }
        }
        if (input_grad) *input_grad = std::move(up);
        return grads;
    }

    template <typename U>
    Model<U> cast() const {
        std::vector<Layer<U>> out;
        out.reserve(layers_.size());
        for (const auto& l : layers_) out.push_back({l.kind, l.weights.template cast<U>(), l.bias.template cast<U>()});
        return Model<U>(input_shape_, std::move(out));
    }

private:
    static Tensor<T> apply(const Layer<T>& layer, const Tensor<T>& x) {
        switch (layer.kind) {
            case LayerKind::Conv2d: return nn::conv2d_forward(x, layer.weights, layer.bias);
            case LayerKind::Relu: return nn::relu_forward(x);
            case LayerKind::MaxPool2d: return nn::maxpool2d_forward(x);
            case LayerKind::Flatten: return x.reshaped({x.size()});
            case LayerKind::Dense: return nn::dense_forward(x, layer.weights, layer.bias);
            case LayerKind::Sigmoid: return nn::sigmoid(x);
        }
        throw std::logic_error("unknown layer kind");
    }

    Shape input_shape_ = kDefaultInput;
    std::vector<Layer<T>> layers_;
};

using FallNet = Model<float>;

/// Weight initialisation. Both draw zero-mean Gaussians and zero the biases.
enum class InitScheme {
    He,        // sd = sqrt(2 / fan_in) per layer
    Fixed001,  // sd = 0.01 for every layer
};

const char* to_string(InitScheme scheme);
InitScheme parse_init_scheme(const std::string& text);

/// Layer stack with Gaussian weights and zero biases.
/// Throws ConfigError if the input cannot pass six 2× poolings.
FallNet build_fallnet(const Shape& input_shape = kDefaultInput, std::uint64_t seed = 0,
                      InitScheme init = InitScheme::He);

/// Conv filter counts in layer order.
std::vector<std::size_t> filter_schedule(const FallNet& model);

/// Throws ConfigError unless the layer sequence is exactly the FallNet stack.
void verify_architecture(const FallNet& model);

enum class Prediction { NotFall, Fall };

/// Fall iff probability ≥ threshold.
Prediction predict_label(double probability, double threshold = 0.5);

struct TrainConfig {
    std::size_t epochs = 5;
    double learning_rate = 1e-4;
    std::size_t batch_size = 4;
    std::uint64_t seed = 0;
    bool shuffle = true;

    void validate() const;
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0;
    double train_accuracy = 0;
    double val_loss = 0;
    double val_accuracy = 0;
};

/// Mean BCE and thresholded accuracy of the model over `samples`.
struct LossAccuracy {
    double loss = 0;
    double accuracy = 0;
};
LossAccuracy measure(const FallNet& model, std::span<const LabeledSample> samples, double threshold = 0.5);

/// Mini-batch Adam on mean BCE. Returns epochs+1 rows: row 0 is measured with
/// the initial weights, row k after epoch k. Each row's train and validation
/// figures come from a full pass over the respective set after the epoch.
/// `on_epoch`, when set, is called as each row becomes available.
std::vector<EpochStats> train(FallNet& model, std::span<const LabeledSample> train_set,
                              std::span<const LabeledSample> val_set, const TrainConfig& config,
                              const std::function<void(const EpochStats&)>& on_epoch = {});

/// Averaged parameter gradients of the mean BCE over `batch`, plus that loss.
struct BatchGradient {
    std::vector<LayerGrads<float>> grads;
    double loss = 0;
};
BatchGradient batch_gradient(const FallNet& model, std::span<const LabeledSample* const> batch);

// Checkpoint format (little-endian, no padding):
//   "FNET" | version u32 | layer count u32 |
//   per layer: kind u8 | rank u8 | dims u32 × rank | weights f32… | bias f32…
// Conv and dense layers describe their weight tensor; flatten describes the
// network input shape; other layers have rank 0 and no payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize(const FallNet& model);
FallNet deserialize(std::span<const std::uint8_t> bytes);

void save_checkpoint(const FallNet& model, const std::filesystem::path& path);
FallNet load_checkpoint(const std::filesystem::path& path);

}  // namespace fallmon::fallnet
