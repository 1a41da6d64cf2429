#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fallmon/gradcheck_suite.hpp"
#include "fallmon/nn/adam.hpp"
#include "fallmon/nn/gradcheck.hpp"
#include "fallmon/nn/init.hpp"
#include "fallmon/nn/layers.hpp"
#include "fallmon/nn/loss.hpp"

using namespace fallmon;
using namespace fallmon::nn;

namespace {

Tensor<double> random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor<double> t(shape);
    for (auto& v : t.values()) v = u(rng);
    return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double max_relative_error(const Tensor<double>& a, const Tensor<double>& n) {
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], n[i]));
    return worst;
}

}  // namespace

TEST(Tensor, RejectsInconsistentData) {
    EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>(3)), ShapeError);
    EXPECT_THROW(Tensor<float>({2, 0}), ShapeError);
    Tensor<float> t({2, 3});
    EXPECT_EQ(t.size(), 6u);
    EXPECT_THROW(t.reshaped({4}), ShapeError);
    EXPECT_EQ(t.reshaped({6}).shape(), Shape{6});
}

TEST(Conv2d, IdentityKernelReproducesInput) {
    Tensor<double> kernels({3, 3, 1, 1});
    kernels[4] = 1.0;  // centre tap
    const auto input = random_tensor({6, 5, 1}, 3);
    EXPECT_EQ(conv2d_forward(input, kernels, Tensor<double>({1})), input);
}

TEST(Conv2d, OnesKernelOnConstantImage) {
    // Hand count of in-bounds taps on a 4×4 image: 9 inside, 6 on edges, 4 at corners.
    const double c = 0.75;
    const Tensor<double> input({4, 4, 1}, c);
    const Tensor<double> kernels({3, 3, 1, 1}, 1.0);
    const auto out = conv2d_forward(input, kernels, Tensor<double>({1}));
    EXPECT_DOUBLE_EQ(out.at(1, 1, 0), 9 * c);
    EXPECT_DOUBLE_EQ(out.at(2, 2, 0), 9 * c);
    EXPECT_DOUBLE_EQ(out.at(0, 0, 0), 4 * c);
    EXPECT_DOUBLE_EQ(out.at(3, 3, 0), 4 * c);
    EXPECT_DOUBLE_EQ(out.at(0, 3, 0), 4 * c);
    EXPECT_DOUBLE_EQ(out.at(0, 1, 0), 6 * c);
}

TEST(Conv2d, SamePaddingShape) {
    const Tensor<float> input({64, 64, 3});
    const Tensor<float> kernels({3, 3, 3, 16});
    EXPECT_EQ(conv2d_forward(input, kernels, Tensor<float>({16})).shape(), (Shape{64, 64, 16}));
}

TEST(Conv2d, ShapeErrors) {
    const Tensor<float> input({4, 4, 2});
    EXPECT_THROW(conv2d_forward(input, Tensor<float>({3, 3, 3, 1}), Tensor<float>({1})), ShapeError);
    EXPECT_THROW(conv2d_forward(input, Tensor<float>({5, 5, 2, 1}), Tensor<float>({1})), ShapeError);
    EXPECT_THROW(conv2d_forward(input, Tensor<float>({3, 3, 2, 2}), Tensor<float>({1})), ShapeError);
    EXPECT_THROW(conv2d_backward(input, Tensor<float>({3, 3, 2, 2}), Tensor<float>({4, 4, 3})), ShapeError);
}

TEST(Conv2d, BackwardZeroUpstreamGivesZeroGradients) {
    const auto input = random_tensor({5, 5, 2}, 1);
    const auto kernels = random_tensor({3, 3, 2, 3}, 2);
    const auto g = conv2d_backward(input, kernels, Tensor<double>({5, 5, 3}));
    for (const auto* t : {&g.input, &g.kernels, &g.bias})
        for (double v : t->values()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2d, BiasGradientSumsUpstream) {
    const auto input = random_tensor({2, 2, 1}, 1);
    const auto kernels = random_tensor({3, 3, 1, 2}, 2);
    const auto g = conv2d_backward(input, kernels, Tensor<double>({2, 2, 2}, 1.0));
    EXPECT_DOUBLE_EQ(g.bias[0], 4.0);
    EXPECT_DOUBLE_EQ(g.bias[1], 4.0);
}

TEST(Conv2d, BackwardMatchesFiniteDifferences) {
    const auto input = random_tensor({5, 5, 2}, 11);
    const auto kernels = random_tensor({3, 3, 2, 3}, 12);
    const auto bias = random_tensor({3}, 13);
    const auto up = random_tensor({5, 5, 3}, 14);
    const auto g = conv2d_backward(input, kernels, up);
    EXPECT_LE(max_relative_error(g.input, finite_diff_grad([&](const auto& x) {
                  return dot(up, conv2d_forward(x, kernels, bias));
              }, input)),
              1e-4);
    EXPECT_LE(max_relative_error(g.kernels, finite_diff_grad([&](const auto& k) {
                  return dot(up, conv2d_forward(input, k, bias));
              }, kernels)),
              1e-4);
    EXPECT_LE(max_relative_error(g.bias, finite_diff_grad([&](const auto& b) {
                  return dot(up, conv2d_forward(input, kernels, b));
              }, bias)),
              1e-4);
}

TEST(Relu, ForwardAndSubgradientConvention) {
    const Tensor<double> x({3}, std::vector<double>{-1.0, 2.0, 0.0});
    const auto y = relu_forward(x);
    EXPECT_EQ(y[0], 0.0);
    EXPECT_EQ(y[1], 2.0);
    EXPECT_EQ(y[2], 0.0);
    const auto g = relu_backward(x, Tensor<double>({3}, 5.0));
    EXPECT_EQ(g[0], 0.0);
    EXPECT_EQ(g[1], 5.0);
    EXPECT_EQ(g[2], 0.0);  // x = 0 passes nothing

    const Tensor<double> zeros({2, 2, 2});
    EXPECT_EQ(relu_forward(zeros), zeros);
    EXPECT_EQ(relu_backward(zeros, random_tensor({2, 2, 2}, 4)), zeros);
}

TEST(MaxPool, ForwardAndRouting) {
    const Tensor<double> x({2, 2, 1}, std::vector<double>{1, 2, 3, 4});
    const auto y = maxpool2d_forward(x);
    ASSERT_EQ(y.shape(), (Shape{1, 1, 1}));
    EXPECT_EQ(y[0], 4.0);
    const auto g = maxpool2d_backward(x, Tensor<double>({1, 1, 1}, 7.0));
    EXPECT_EQ(g.values()[3], 7.0);
    EXPECT_EQ(g.values()[0] + g.values()[1] + g.values()[2], 0.0);
}

TEST(MaxPool, TiesRouteToFirstRowMajorPosition) {
    const Tensor<double> x({2, 2, 1}, 3.0);
    const auto g = maxpool2d_backward(x, Tensor<double>({1, 1, 1}, 1.0));
    EXPECT_EQ(g[0], 1.0);
    EXPECT_EQ(g[1] + g[2] + g[3], 0.0);
}

TEST(MaxPool, ShapesIncludingOddEdges) {
    EXPECT_EQ(maxpool2d_forward(Tensor<float>({64, 64, 16})).shape(), (Shape{32, 32, 16}));
    const Tensor<double> odd({3, 3, 1}, std::vector<double>{-5, -4, -3, -2, -1, -9, -8, -7, -6});
    const auto y = maxpool2d_forward(odd);
    ASSERT_EQ(y.shape(), (Shape{2, 2, 1}));
    EXPECT_EQ(y.at(0, 0, 0), -1.0);
    EXPECT_EQ(y.at(0, 1, 0), -3.0);  // padded column never wins
    EXPECT_EQ(y.at(1, 0, 0), -7.0);
    EXPECT_EQ(y.at(1, 1, 0), -6.0);
}

TEST(Dense, ZeroAndIdentityWeights) {
    const auto x = random_tensor({4}, 1);
    const auto bias = random_tensor({3}, 2);
    EXPECT_EQ(dense_forward(x, Tensor<double>({4, 3}), bias), bias);

    Tensor<double> eye({4, 4});
    for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
    EXPECT_EQ(dense_forward(x, eye, Tensor<double>({4})), x);
    EXPECT_THROW(dense_forward(x, Tensor<double>({5, 3}), bias), ShapeError);
}

TEST(Dense, BackwardMatchesFiniteDifferences) {
    const auto x = random_tensor({8}, 21);
    const auto w = random_tensor({8, 4}, 22);
    const auto b = random_tensor({4}, 23);
    const auto up = random_tensor({4}, 24);
    const auto g = dense_backward(x, w, up);
    EXPECT_LE(max_relative_error(g.input, finite_diff_grad([&](const auto& v) { return dot(up, dense_forward(v, w, b)); }, x)), 1e-4);
    EXPECT_LE(max_relative_error(g.weights, finite_diff_grad([&](const auto& v) { return dot(up, dense_forward(x, v, b)); }, w)), 1e-4);
    EXPECT_LE(max_relative_error(g.bias, finite_diff_grad([&](const auto& v) { return dot(up, dense_forward(x, w, v)); }, b)), 1e-4);
}

TEST(Sigmoid, ValuesSymmetryAndRange) {
    EXPECT_EQ(sigmoid(0.0), 0.5);
    EXPECT_NEAR(sigmoid(10.0), 0.9999546, 1e-7);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-30, 30);
    for (int i = 0; i < 200; ++i) {
        const double x = u(rng);
        EXPECT_NEAR(sigmoid(x) + sigmoid(-x), 1.0, 1e-12);
    }
    for (double x : {-500.0, 500.0, -88.0, 88.0}) {
        EXPECT_TRUE(std::isfinite(sigmoid(x)));
        EXPECT_TRUE(std::isfinite(sigmoid(static_cast<float>(x))));
    }
    EXPECT_EQ(sigmoid(500.0), 1.0);
    EXPECT_GE(sigmoid(-500.0), 0.0);
}

TEST(Bce, KnownValues) {
    EXPECT_NEAR(bce_loss(1.0 - 1e-7, 1).loss, 1e-7, 1e-9);
    EXPECT_NEAR(bce_loss(0.5, 1).loss, 0.693147, 1e-6);
    EXPECT_NEAR(bce_loss(0.0, 1).loss, -std::log(1e-7), 1e-9);
    EXPECT_NEAR(bce_loss(0.0, 1).loss, 16.118, 1e-3);
    EXPECT_THROW(bce_loss(0.5, 2), InputError);
}

TEST(Bce, NonNegativeAndMonotoneForPositiveLabel) {
    double prev = bce_loss(0.0, 1).loss;
    for (int i = 1; i <= 1000; ++i) {
        const double p = i / 1000.0;
        const auto r = bce_loss(p, 1);
        EXPECT_GE(r.loss, 0.0);
        EXPECT_LE(r.loss, prev);
        prev = r.loss;
        EXPECT_GE(bce_loss(p, 0).loss, 0.0);
    }
    // Only clamped-perfect predictions reach the minimum.
    EXPECT_GT(bce_loss(0.999, 1).loss, bce_loss(1.0, 1).loss);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
    AdamConfig cfg;
    const auto g = random_tensor({50}, 8);
    Tensor<double> p({50}, 1.0);
    AdamState<double> st(p.shape(), cfg);
    adam_step(p, g, st);
    EXPECT_EQ(st.t, 1u);
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double delta = p[i] - 1.0;
        EXPECT_LT(delta * g[i], 0.0);
        EXPECT_GE(std::abs(delta), cfg.lr * 0.99);
        EXPECT_LE(std::abs(delta), cfg.lr * (1 + 1e-12));
    }
}

TEST(Adam, ZeroGradientAndZeroLearningRateAreIdentity) {
    const auto p0 = random_tensor({10}, 9);
    {
        auto p = p0;
        AdamState<double> st(p.shape(), {});
        adam_step(p, Tensor<double>(p.shape()), st);
        EXPECT_EQ(p, p0);
    }
    {
        auto p = p0;
        AdamState<double> st(p.shape(), {0.0});
        for (int k = 0; k < 5; ++k) adam_step(p, random_tensor({10}, 100 + k), st);
        EXPECT_EQ(p, p0);
        EXPECT_EQ(st.t, 5u);
    }
}

TEST(Adam, StepNeverIncreasesLinearLoss) {
    // loss(θ) = c·θ; one small step must not increase it.
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto c = random_tensor({16}, seed);
        auto p = random_tensor({16}, seed + 50);
        const double before = dot(c, p);
        AdamState<double> st(p.shape(), {1e-3});
        adam_step(p, c, st);
        EXPECT_LE(dot(c, p), before);
    }
}

TEST(Adam, ShapeMismatch) {
    Tensor<float> p({3});
    AdamState<float> st(p.shape(), {});
    EXPECT_THROW(adam_step(p, Tensor<float>({4}), st), ShapeError);
}

TEST(GaussianInit, MomentsAndDeterminism) {
    const auto t = gaussian_init<double>({10000}, 0.01, 42);
    double mean = 0;
    for (double v : t.values()) mean += v;
    mean /= t.size();
    double var = 0;
    for (double v : t.values()) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / (t.size() - 1));
    EXPECT_LE(std::abs(mean), 3 * 0.01 / std::sqrt(10000.0));
    EXPECT_GE(sd, 0.0097);
    EXPECT_LE(sd, 0.0103);

    EXPECT_EQ(gaussian_init<float>({3, 3, 3, 16}, 0.01, 7), gaussian_init<float>({3, 3, 3, 16}, 0.01, 7));
    EXPECT_NE(gaussian_init<float>({32}, 0.01, 7), gaussian_init<float>({32}, 0.01, 8));
    EXPECT_THROW(gaussian_init<float>({4}, 0.0, 1), InputError);
    EXPECT_THROW(gaussian_init<float>({4}, -1.0, 1), InputError);
}

TEST(FiniteDiff, QuadraticAndConstant) {
    const auto sq = [](const Tensor<double>& t) { return t[0] * t[0]; };
    EXPECT_NEAR(finite_diff_grad(sq, Tensor<double>({1}, 3.0))[0], 6.0, 1e-6);
    const auto g = finite_diff_grad([](const Tensor<double>&) { return 4.2; }, random_tensor({5}, 1));
    for (double v : g.values()) EXPECT_EQ(v, 0.0);
}

TEST(GradientProperty, EveryLayerOverTwentySeeds) {
    const auto report = gradcheck::run({});
    for (const auto& layer : report.layers) {
        EXPECT_LE(layer.worst.error, 1e-4) << layer.name << " at " << layer.worst.coordinate << " seed "
                                           << layer.worst.seed;
        EXPECT_GT(layer.coordinates, 0u);
    }
}

TEST(GradientProperty, InjectedDenseFaultIsCaught) {
    gradcheck::Options opt;
    opt.seeds = 2;
    opt.dense_backward = [](const auto& x, const auto& w, const auto& up) {
        auto g = dense_backward(x, w, up);
        g.weights[0] *= 1.5;
        return g;
    };
    const auto report = gradcheck::run(opt);
    EXPECT_FALSE(report.passed());
    EXPECT_NE(report.format().find("dense"), std::string::npos);
}
