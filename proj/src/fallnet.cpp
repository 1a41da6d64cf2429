#include "fallmon/fallnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "fallmon/nn/init.hpp"

namespace fallmon::fallnet {

const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool2d: return "maxpool2d";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Dense: return "dense";
        case LayerKind::Sigmoid: return "sigmoid";
    }
    return "unknown";
}

const char* to_string(InitScheme scheme) {
    return scheme == InitScheme::He ? "he" : "fixed-0.01";
}

InitScheme parse_init_scheme(const std::string& text) {
    if (text == "he") return InitScheme::He;
    if (text == "fixed-0.01") return InitScheme::Fixed001;
    throw ConfigError("unknown init scheme '" + text + "' (expected he or fixed-0.01)");
}

FallNet build_fallnet(const Shape& input_shape, std::uint64_t seed, InitScheme init) {
    if (input_shape.size() != 3 || input_shape[2] == 0) {
        throw ConfigError("FallNet input must be H×W×C with C ≥ 1, got " + nn::to_string(input_shape));
    }
    // Pooling rounds up (odd edges are padded), so every side ≥ 1 still holds
    // at least one pixel after six halvings.
    if (input_shape[0] < 1 || input_shape[1] < 1) {
        throw ConfigError("input " + nn::to_string(input_shape) + " is too small for " +
                          std::to_string(kConvBlocks) + " halvings");
    }

    std::vector<Layer<float>> layers;
    std::uint64_t stream = 0;
    auto weights = [&](Shape shape) {
        const std::size_t fan_in = nn::element_count(shape) / shape.back();
        const double sd = init == InitScheme::He ? std::sqrt(2.0 / static_cast<double>(fan_in)) : nn::kInitStdDev;
        return nn::gaussian_init<float>(shape, sd, seed * 1000003ULL + (++stream));
    };

    std::size_t channels = input_shape[2];
    std::size_t h = input_shape[0], w = input_shape[1];
    for (std::size_t filters : kFilterSchedule) {
        layers.push_back({LayerKind::Conv2d,
                          weights({3, 3, channels, filters}),
                          Tensor<float>({filters})});
        layers.push_back({LayerKind::Relu, {}, {}});
        layers.push_back({LayerKind::MaxPool2d, {}, {}});
        channels = filters;
        h = (h + 1) / 2;
        w = (w + 1) / 2;
    }
    const std::size_t flat = h * w * channels;
    layers.push_back({LayerKind::Flatten, {}, {}});
    layers.push_back({LayerKind::Dense, weights({flat, kHiddenUnits}),
                      Tensor<float>({kHiddenUnits})});
    layers.push_back({LayerKind::Relu, {}, {}});
    layers.push_back({LayerKind::Dense, weights({kHiddenUnits, 1}),
                      Tensor<float>({1})});
    layers.push_back({LayerKind::Sigmoid, {}, {}});
    return FallNet(input_shape, std::move(layers));
}

std::vector<std::size_t> filter_schedule(const FallNet& model) {
    std::vector<std::size_t> out;
    for (const auto& l : model.layers())
        if (l.kind == LayerKind::Conv2d) out.push_back(l.weights.dim(3));
    return out;
}

void verify_architecture(const FallNet& model) {
    std::vector<LayerKind> expected;
    for (std::size_t i = 0; i < kConvBlocks; ++i) {
        expected.insert(expected.end(), {LayerKind::Conv2d, LayerKind::Relu, LayerKind::MaxPool2d});
    }
    expected.insert(expected.end(),
                    {LayerKind::Flatten, LayerKind::Dense, LayerKind::Relu, LayerKind::Dense, LayerKind::Sigmoid});

    const auto& layers = model.layers();
    if (layers.size() != expected.size()) {
        throw ConfigError("FallNet must have " + std::to_string(expected.size()) + " layers, found " +
                          std::to_string(layers.size()));
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].kind != expected[i]) {
            throw ConfigError("layer " + std::to_string(i) + " is " + to_string(layers[i].kind) + ", expected " +
                              to_string(expected[i]));
        }
    }
    const auto schedule = filter_schedule(model);
    if (!std::equal(schedule.begin(), schedule.end(), std::begin(kFilterSchedule), std::end(kFilterSchedule))) {
        throw ConfigError("conv filter schedule deviates from 16,16,32,32,64,64");
    }
    const auto& hidden = layers[layers.size() - 4];
    const auto& out = layers[layers.size() - 2];
    if (hidden.weights.dim(1) != kHiddenUnits || out.weights.dim(1) != 1) {
        throw ConfigError("FallNet head must be dense(32) → relu → dense(1)");
    }
}

Prediction predict_label(double probability, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        throw ConfigError("threshold must lie in [0,1], got " + std::to_string(threshold));
    }
    return probability >= threshold ? Prediction::Fall : Prediction::NotFall;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
}

LossAccuracy measure(const FallNet& model, std::span<const LabeledSample> samples, double threshold) {
    if (samples.empty()) throw InputError("cannot measure an empty sample set");
    double loss = 0;
    std::size_t correct = 0;
    for (const auto& s : samples) {
        const double p = model.forward(s.image);
        loss += nn::bce_loss(p, to_int(s.label)).loss;
        const bool fall = predict_label(p, threshold) == Prediction::Fall;
        if (fall == (s.label == Label::Fall)) ++correct;
    }
    const double n = static_cast<double>(samples.size());
    return {loss / n, static_cast<double>(correct) / n};
}

BatchGradient batch_gradient(const FallNet& model, std::span<const LabeledSample* const> batch) {
    BatchGradient out;
    const auto& layers = model.layers();
    out.grads.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].has_parameters()) {
            out.grads[i] = {Tensor<float>(layers[i].weights.shape()), Tensor<float>(layers[i].bias.shape())};
        }
    }
    for (const LabeledSample* sample : batch) {
        const auto trace = model.forward_trace(sample->image);
        const float p = trace.probability();
        const auto bce = nn::bce_loss(p, to_int(sample->label));
        out.loss += bce.loss;
        const auto grads = model.backward(trace, Tensor<float>({1}, bce.grad));
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (!layers[i].has_parameters()) continue;
            auto& acc = out.grads[i];
            for (std::size_t k = 0; k < acc.weights.size(); ++k) acc.weights[k] += grads[i].weights[k];
            for (std::size_t k = 0; k < acc.bias.size(); ++k) acc.bias[k] += grads[i].bias[k];
        }
    }
    const float scale = 1.0f / static_cast<float>(batch.size());
    for (auto& g : out.grads) {
        for (auto& v : g.weights.values()) v *= scale;
        for (auto& v : g.bias.values()) v *= scale;
    }
    out.loss /= static_cast<double>(batch.size());
    return out;
}

namespace {

void check_labeled(std::span<const LabeledSample> samples, const char* name) {
    if (samples.empty()) throw InputError(std::string(name) + " set is empty");
    for (const auto& s : samples) {
        const int l = to_int(s.label);
        if (l != 0 && l != 1) throw InputError(std::string(name) + " set contains a non-binary label");
    }
}

EpochStats stats_row(std::size_t epoch, const FallNet& model, std::span<const LabeledSample> train_set,
                     std::span<const LabeledSample> val_set) {
    const auto tr = measure(model, train_set);
    const auto va = measure(model, val_set);
    return {epoch, tr.loss, tr.accuracy, va.loss, va.accuracy};
}

}  // namespace

std::vector<EpochStats> train(FallNet& model, std::span<const LabeledSample> train_set,
                              std::span<const LabeledSample> val_set, const TrainConfig& config,
                              const std::function<void(const EpochStats&)>& on_epoch) {
    config.validate();
    check_labeled(train_set, "training");
    check_labeled(val_set, "validation");

    auto& layers = model.layers();
    const nn::AdamConfig adam{config.learning_rate};
    std::vector<nn::AdamState<float>> weight_states(layers.size()), bias_states(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (!layers[i].has_parameters()) continue;
        weight_states[i] = nn::AdamState<float>(layers[i].weights.shape(), adam);
        bias_states[i] = nn::AdamState<float>(layers[i].bias.shape(), adam);
    }

    std::vector<EpochStats> history;
    auto record = [&](EpochStats row) {
        history.push_back(row);
        if (on_epoch) on_epoch(row);
    };
    record(stats_row(0, model, train_set, val_set));

    std::vector<const LabeledSample*> order(train_set.size());
    std::transform(train_set.begin(), train_set.end(), order.begin(), [](const auto& s) { return &s; });
    std::mt19937_64 rng(config.seed);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            auto result = batch_gradient(model, std::span(order).subspan(start, end - start));
            if (!std::isfinite(result.loss)) throw TrainingDiverged(epoch, batch_index);
            for (std::size_t i = 0; i < layers.size(); ++i) {
                if (!layers[i].has_parameters()) continue;
                nn::adam_step(layers[i].weights, result.grads[i].weights, weight_states[i]);
                nn::adam_step(layers[i].bias, result.grads[i].bias, bias_states[i]);
            }
        }
        record(stats_row(epoch, model, train_set, val_set));
    }
    return history;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[4] = {'F', 'N', 'E', 'T'};

class Writer {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::size_t offset() const { return pos_; }

    std::uint8_t u8(const char* what) {
        need(1, what);
        return bytes_[pos_++];
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) throw FormatError(std::string("truncated checkpoint while reading ") + what, pos_);
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

void write_dims(Writer& w, const Shape& shape) {
    w.u8(static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) w.u32(static_cast<std::uint32_t>(d));
}

}  // namespace

std::vector<std::uint8_t> serialize(const FallNet& model) {
    Writer w;
    w.raw(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(model.layers().size()));
    for (const auto& layer : model.layers()) {
        w.u8(static_cast<std::uint8_t>(layer.kind));
        if (layer.has_parameters()) {
            write_dims(w, layer.weights.shape());
            for (float v : layer.weights.values()) w.f32(v);
            for (float v : layer.bias.values()) w.f32(v);
        } else if (layer.kind == LayerKind::Flatten) {
            write_dims(w, model.input_shape());
        } else {
            w.u8(0);
        }
    }
    return w.take();
}

FallNet deserialize(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    for (std::size_t i = 0; i < sizeof kMagic; ++i) {
        const std::size_t at = r.offset();
        if (r.u8("magic") != static_cast<std::uint8_t>(kMagic[i])) throw FormatError("bad checkpoint magic", at);
    }
    {
        const std::size_t at = r.offset();
        const auto version = r.u32("version");
        if (version != kCheckpointVersion) {
            throw FormatError("unsupported checkpoint version " + std::to_string(version), at);
        }
    }
    const std::uint32_t count = r.u32("layer count");

    std::vector<Layer<float>> layers;
    Shape input_shape;
    for (std::uint32_t li = 0; li < count; ++li) {
        const std::size_t at = r.offset();
        const auto tag = r.u8("layer kind");
        if (tag > static_cast<std::uint8_t>(LayerKind::Sigmoid)) {
            throw FormatError("unknown layer kind " + std::to_string(tag), at);
        }
        const auto kind = static_cast<LayerKind>(tag);
        const std::size_t rank_at = r.offset();
        const auto rank = r.u8("shape rank");
        Shape dims;
        for (std::uint8_t d = 0; d < rank; ++d) {
            const std::size_t dim_at = r.offset();
            const auto v = r.u32("dimension");
            if (v == 0) throw FormatError("zero dimension", dim_at);
            dims.push_back(v);
        }

        Layer<float> layer{kind, {}, {}};
        switch (kind) {
            case LayerKind::Conv2d:
            case LayerKind::Dense: {
                const bool conv = kind == LayerKind::Conv2d;
                if ((conv && (rank != 4 || dims[0] != 3 || dims[1] != 3)) || (!conv && rank != 2)) {
                    throw FormatError(std::string("bad ") + to_string(kind) + " weight shape", rank_at);
                }
                std::vector<float> w(nn::element_count(dims));
                for (auto& v : w) v = r.f32("weights");
                std::vector<float> b(dims.back());
                for (auto& v : b) v = r.f32("bias");
                layer.weights = Tensor<float>(dims, std::move(w));
                layer.bias = Tensor<float>({dims.back()}, std::move(b));
                break;
            }
            case LayerKind::Flatten:
                if (rank != 3) throw FormatError("flatten must record a rank-3 input shape", rank_at);
                input_shape = dims;
                break;
            default:
                if (rank != 0) throw FormatError(std::string(to_string(kind)) + " takes no shape", rank_at);
                break;
        }
        layers.push_back(std::move(layer));
    }
    if (!r.done()) throw FormatError("trailing bytes after checkpoint", r.offset());
    if (input_shape.empty()) throw FormatError("checkpoint has no flatten layer recording the input shape", r.offset());

    FallNet model(input_shape, std::move(layers));
    try {
        verify_architecture(model);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint is not a FallNet: ") + e.what(), 0);
    }
    return model;
}

void save_checkpoint(const FallNet& model, const std::filesystem::path& path) {
    const auto bytes = serialize(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

FallNet load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

}  // namespace fallmon::fallnet
