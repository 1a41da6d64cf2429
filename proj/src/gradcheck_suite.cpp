#include "fallmon/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "fallmon/fallnet.hpp"
#include "fallmon/nn/gradcheck.hpp"
#include "fallmon/nn/init.hpp"
#include "fallmon/nn/loss.hpp"

namespace fallmon::gradcheck {

using nn::Shape;
using Tensor = nn::Tensor<double>;

namespace {

// Inputs closer than this to a ReLU kink or a max-pool tie are redrawn: the
// central difference straddles the kink and is no longer a gradient estimate.
constexpr double kKinkMargin = 1e-3;

Tensor uniform(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(shape);
    for (auto& v : t.values()) v = u(rng);
    return t;
}

Tensor uniform_away_from_zero(const Shape& shape, std::mt19937_64& rng) {
    Tensor t = uniform(shape, rng);
    for (auto& v : t.values()) {
        if (std::abs(v) < kKinkMargin) v = v < 0 ? -0.5 : 0.5;
    }
    return t;
}

double dot(const Tensor& a, const Tensor& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void compare(LayerReport& report, const std::string& name, const Tensor& analytic, const Tensor& numeric,
             std::uint64_t seed, const std::vector<std::size_t>* indices = nullptr) {
    auto visit = [&](std::size_t i) {
        const double err = nn::relative_error(analytic[i], numeric[i]);
        ++report.coordinates;
        if (err > report.worst.error || report.worst.coordinate.empty()) {
            report.worst = {err, analytic[i], numeric[i], name + "[" + std::to_string(i) + "]", seed};
        }
    };
    if (indices) {
        for (auto i : *indices) visit(i);
    } else {
        for (std::size_t i = 0; i < analytic.size(); ++i) visit(i);
    }
}

void check_conv(LayerReport& r, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Tensor input = uniform({5, 5, 2}, rng);
    const Tensor kernels = uniform({3, 3, 2, 3}, rng);
    const Tensor bias = uniform({3}, rng);
    const Tensor up = uniform({5, 5, 3}, rng);
    const auto g = nn::conv2d_backward(input, kernels, up);
    compare(r, "input", g.input,
            nn::finite_diff_grad([&](const Tensor& x) { return dot(up, nn::conv2d_forward(x, kernels, bias)); }, input),
            seed);
    compare(r, "kernels", g.kernels,
            nn::finite_diff_grad([&](const Tensor& k) { return dot(up, nn::conv2d_forward(input, k, bias)); }, kernels),
            seed);
    compare(r, "bias", g.bias,
            nn::finite_diff_grad([&](const Tensor& b) { return dot(up, nn::conv2d_forward(input, kernels, b)); }, bias),
            seed);
}

void check_relu(LayerReport& r, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Tensor input = uniform_away_from_zero({4, 4, 3}, rng);
    const Tensor up = uniform({4, 4, 3}, rng);
    compare(r, "input", nn::relu_backward(input, up),
            nn::finite_diff_grad([&](const Tensor& x) { return dot(up, nn::relu_forward(x)); }, input), seed);
}

void check_maxpool(LayerReport& r, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    // Distinct values spaced well beyond the step size; odd sides exercise padding.
    Tensor input({5, 5, 2});
    std::vector<double> levels(input.size());
    for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = -1.0 + 2.0 * static_cast<double>(i) / levels.size();
    std::shuffle(levels.begin(), levels.end(), rng);
    std::copy(levels.begin(), levels.end(), input.data());
    const Tensor up = uniform(nn::pooled_shape(input.shape()), rng);
    compare(r, "input", nn::maxpool2d_backward(input, up),
            nn::finite_diff_grad([&](const Tensor& x) { return dot(up, nn::maxpool2d_forward(x)); }, input), seed);
}

void check_dense(LayerReport& r, std::uint64_t seed, const DenseBackward& backward) {
    std::mt19937_64 rng(seed);
    const Tensor input = uniform({8}, rng);
    const Tensor weights = uniform({8, 4}, rng);
    const Tensor bias = uniform({4}, rng);
    const Tensor up = uniform({4}, rng);
    const auto g = backward ? backward(input, weights, up) : nn::dense_backward(input, weights, up);
    compare(r, "input", g.input,
            nn::finite_diff_grad([&](const Tensor& x) { return dot(up, nn::dense_forward(x, weights, bias)); }, input),
            seed);
    compare(r, "weights", g.weights,
            nn::finite_diff_grad([&](const Tensor& w) { return dot(up, nn::dense_forward(input, w, bias)); }, weights),
            seed);
    compare(r, "bias", g.bias,
            nn::finite_diff_grad([&](const Tensor& b) { return dot(up, nn::dense_forward(input, weights, b)); }, bias),
            seed);
}

void check_sigmoid(LayerReport& r, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Tensor input = uniform({6}, rng, -6.0, 6.0);
    const Tensor up = uniform({6}, rng);
    Tensor analytic(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double s = nn::sigmoid(input[i]);
        analytic[i] = up[i] * s * (1 - s);
    }
    compare(r, "input", analytic,
            nn::finite_diff_grad([&](const Tensor& x) { return dot(up, nn::sigmoid(x)); }, input), seed);
}

void check_bce(LayerReport& r, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Tensor p = uniform({4}, rng, 0.05, 0.95);
    for (int label : {0, 1}) {
        Tensor analytic(p.shape());
        for (std::size_t i = 0; i < p.size(); ++i) analytic[i] = nn::bce_loss(p[i], label).grad;
        compare(r, label ? "p|y=1" : "p|y=0", analytic, nn::finite_diff_grad([&](const Tensor& q) {
                    double s = 0;
                    for (double v : q.values()) s += nn::bce_loss(v, label).loss;
                    return s;
                }, p),
                seed);
    }
}

bool kink_free(const fallnet::Model<double>& model, const fallnet::Model<double>::Trace& trace) {
    const auto& layers = model.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& in = trace.activations[i];
        if (layers[i].kind == fallnet::LayerKind::Relu) {
            for (double v : in.values())
                if (std::abs(v) < kKinkMargin) return false;
        } else if (layers[i].kind == fallnet::LayerKind::MaxPool2d) {
            const auto out = nn::pooled_shape(in.shape());
            for (std::size_t y = 0; y < out[0]; ++y)
                for (std::size_t x = 0; x < out[1]; ++x)
                    for (std::size_t c = 0; c < out[2]; ++c) {
                        double best = -1, second = -1;
                        for (std::size_t dy = 0; dy < 2 && 2 * y + dy < in.dim(0); ++dy)
                            for (std::size_t dx = 0; dx < 2 && 2 * x + dx < in.dim(1); ++dx) {
                                const double v = in.at(2 * y + dy, 2 * x + dx, c);
                                if (v > best) {
                                    second = best;
                                    best = v;
                                } else if (v > second) {
                                    second = v;
                                }
                            }
                        // Ties among dead (zero) units carry no gradient either way.
                        if (best > 0 && second >= 0 && best - second < kKinkMargin) return false;
                    }
        }
    }
    return true;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::mt19937_64& rng) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    if (k >= n) return all;
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(k);
    std::sort(all.begin(), all.end());
    return all;
}

void check_fallnet(LayerReport& r, std::uint64_t seed, const Options& opt) {
    const Shape input_shape{opt.input_side, opt.input_side, 3};
    std::mt19937_64 rng(seed);
    fallnet::Model<double> model;
    Tensor image;
    fallnet::Model<double>::Trace trace;
    // Redraw until no activation sits on a kink; a handful of attempts suffices.
    for (int attempt = 0;; ++attempt) {
        model = fallnet::build_fallnet(input_shape, seed * 7919 + attempt).cast<double>();
        for (auto& layer : model.layers()) {
            if (!layer.has_parameters()) continue;
            layer.bias = uniform(layer.bias.shape(), rng, -0.1, 0.1);
        }
        image = uniform(input_shape, rng, 0.0, 1.0);
        trace = model.forward_trace(image);
        if (kink_free(model, trace) || attempt == 50) break;
    }
    const int label = static_cast<int>(seed % 2);
    const auto bce = nn::bce_loss(trace.probability(), label);
    Tensor input_grad;
    const auto grads = model.backward(trace, Tensor({1}, bce.grad), &input_grad);

    auto loss_of = [&](const fallnet::Model<double>& m, const Tensor& x) {
        return nn::bce_loss(m.forward(x), label).loss;
    };

    const auto in_idx = sample_indices(image.size(), opt.samples_per_tensor, rng);
    Tensor numeric_in(image.shape());
    for (auto i : in_idx) {
        Tensor x = image;
        x[i] = image[i] + nn::kFiniteDifferenceStep;
        const double up = loss_of(model, x);
        x[i] = image[i] - nn::kFiniteDifferenceStep;
        const double down = loss_of(model, x);
        numeric_in[i] = (up - down) / (2 * nn::kFiniteDifferenceStep);
    }
    compare(r, "image", input_grad, numeric_in, seed, &in_idx);

    for (std::size_t li = 0; li < model.layers().size(); ++li) {
        if (!model.layers()[li].has_parameters()) continue;
        for (bool is_bias : {false, true}) {
            const Tensor& param = is_bias ? model.layers()[li].bias : model.layers()[li].weights;
            const Tensor& analytic = is_bias ? grads[li].bias : grads[li].weights;
            const auto idx = sample_indices(param.size(), opt.samples_per_tensor, rng);
            Tensor numeric(param.shape());
            fallnet::Model<double> probe = model;
            for (auto i : idx) {
                Tensor& p = is_bias ? probe.layers()[li].bias : probe.layers()[li].weights;
                const double saved = p[i];
                p[i] = saved + nn::kFiniteDifferenceStep;
                const double up = loss_of(probe, image);
                p[i] = saved - nn::kFiniteDifferenceStep;
                const double down = loss_of(probe, image);
                p[i] = saved;
                numeric[i] = (up - down) / (2 * nn::kFiniteDifferenceStep);
            }
            compare(r, "layer" + std::to_string(li) + (is_bias ? ".bias" : ".weights"), analytic, numeric, seed, &idx);
        }
    }
}

}  // namespace

bool Report::passed() const {
    return std::all_of(layers.begin(), layers.end(), [](const auto& l) { return l.passed(); });
}

std::string Report::format() const {
    std::string out;
    char line[256];
    for (const auto& l : layers) {
        std::snprintf(line, sizeof line, "%-18s coords=%-6zu max_rel_err=%.3e  %s", l.name.c_str(), l.coordinates,
                      l.worst.error, l.passed() ? "ok" : "FAIL");
        out += line;
        if (!l.passed()) {
            std::snprintf(line, sizeof line, "  at %s seed=%llu analytic=%.9g numeric=%.9g", l.worst.coordinate.c_str(),
                          static_cast<unsigned long long>(l.worst.seed), l.worst.analytic, l.worst.numeric);
            out += line;
        }
        out += '\n';
    }
    return out;
}

Report run(const Options& options) {
    Report report;
    for (const char* name : {"conv2d", "relu", "maxpool2d", "dense", "sigmoid", "bce"}) {
        report.layers.push_back(LayerReport{name, 0, {}});
    }
    report.layers.push_back(LayerReport{"fallnet-" + std::to_string(options.input_side) + "x" +
                                            std::to_string(options.input_side),
                                        0,
                                        {}});
    for (std::size_t k = 0; k < options.seeds; ++k) {
        const std::uint64_t seed = options.seed + k;
        check_conv(report.layers[0], seed);
        check_relu(report.layers[1], seed);
        check_maxpool(report.layers[2], seed);
        check_dense(report.layers[3], seed, options.dense_backward);
        check_sigmoid(report.layers[4], seed);
        check_bce(report.layers[5], seed);
        check_fallnet(report.layers[6], seed, options);
    }
    return report;
}

}  // namespace fallmon::gradcheck
