#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mmpoe/error.hpp"
#include "mmpoe/numkernel.hpp"

namespace mmpoe {
namespace {

DenseLayer layer(std::size_t out, std::size_t in, std::vector<double> w, std::vector<double> b,
                 Activation act) {
  DenseLayer l;
  l.weight = Matrix(out, in);
  l.weight.data = std::move(w);
  l.bias = std::move(b);
  l.activation = act;
  return l;
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

TEST(Forward, IdentityLayer) {
  const DenseNet net({layer(2, 2, {1, 0, 0, 1}, {0, 0}, Activation::kIdentity)});
  const std::vector<double> x = {1, 2};
  EXPECT_EQ(forward(net, x).output, x);
}

TEST(Forward, ReluClampsNegativePreactivation) {
  const DenseNet net({layer(1, 2, {1, -1}, {0}, Activation::kRelu)});
  EXPECT_EQ(forward(net, std::vector<double>{2, 3}).output, std::vector<double>{0.0});
}

TEST(Forward, ZeroInputWithZeroBiasGivesZero) {
  const std::size_t dims[] = {4, 5, 3};
  auto net = DenseNet::glorot(dims, Activation::kRelu, 3);
  const std::vector<double> zero(4, 0.0);
  EXPECT_EQ(forward(net, zero).output, std::vector<double>(3, 0.0));
}

TEST(Forward, RejectsWrongSizeAndNonFiniteInput) {
  const std::size_t dims[] = {3, 2};
  const auto net = DenseNet::glorot(dims, Activation::kRelu, 1);
  EXPECT_THROW(forward(net, std::vector<double>{1, 2}), DimensionError);
  EXPECT_THROW(forward(net, std::vector<double>{1, NAN, 2}), Error);
}

TEST(DenseNetShape, RejectsBrokenChain) {
  EXPECT_THROW(DenseNet({layer(2, 3, std::vector<double>(6), {0, 0}, Activation::kRelu),
                         layer(1, 4, std::vector<double>(4), {0}, Activation::kIdentity)}),
               DimensionError);
}

TEST(Glorot, WithinBoundAndSeeded) {
  const std::size_t dims[] = {6, 4, 2};
  const auto a = DenseNet::glorot(dims, Activation::kRelu, 42);
  EXPECT_EQ(a, DenseNet::glorot(dims, Activation::kRelu, 42));
  EXPECT_NE(a, DenseNet::glorot(dims, Activation::kRelu, 43));
  const double bound0 = std::sqrt(6.0 / (6 + 4));
  for (double w : a.layers()[0].weight.data) EXPECT_LE(std::abs(w), bound0);
  for (double b : a.layers()[0].bias) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(a.layers().back().activation, Activation::kIdentity);
}

TEST(Backward, IdentityLayer) {
  const DenseNet net({layer(2, 2, {1, 0, 0, 1}, {0, 0}, Activation::kIdentity)});
  const auto fwd = forward(net, std::vector<double>{3, 4});
  const auto bwd = backward(net, fwd.tape, std::vector<double>{1, 0});
  EXPECT_EQ(bwd.input_grad, (std::vector<double>{1, 0}));
  EXPECT_EQ(bwd.grad.bias[0], (std::vector<double>{1, 0}));
}

TEST(Backward, LinearWeightGradientIsOuterProduct) {
  const DenseNet net({layer(2, 2, {2, -1, 0.5, 3}, {0, 0}, Activation::kIdentity)});
  const std::vector<double> x = {1.5, -2};
  const std::vector<double> g = {0.25, -4};
  const auto bwd = backward(net, forward(net, x).tape, g);
  // dL/dW[i][j] = g_i x_j; dL/dx = W^T g.
  EXPECT_EQ(bwd.grad.weight[0].data, (std::vector<double>{0.375, -0.5, -6, 8}));
  EXPECT_EQ(bwd.input_grad, (std::vector<double>{2 * 0.25 + 0.5 * -4, -1 * 0.25 + 3 * -4}));
}

TEST(Backward, RejectsTapeFromAnotherNet) {
  const std::size_t a_dims[] = {3, 4, 2};
  const std::size_t b_dims[] = {3, 5, 2};
  const auto a = DenseNet::glorot(a_dims, Activation::kRelu, 1);
  const auto b = DenseNet::glorot(b_dims, Activation::kRelu, 1);
  const auto tape = forward(a, std::vector<double>{1, 2, 3}).tape;
  EXPECT_THROW(backward(b, tape, std::vector<double>{1, 0}), Error);
}

TEST(LogSoftmax, ClosedFormCases) {
  auto u = log_softmax(std::vector<double>{0, 0});
  EXPECT_NEAR(u[0], -std::log(2.0), 1e-15);
  EXPECT_NEAR(u[1], -std::log(2.0), 1e-15);
  auto t = log_softmax(std::vector<double>{std::log(3.0), 0});
  EXPECT_NEAR(t[0], std::log(0.75), 1e-15);
  EXPECT_NEAR(t[1], std::log(0.25), 1e-15);
  EXPECT_NEAR(t[0], -0.2877, 5e-5);
  EXPECT_NEAR(t[1], -1.3863, 5e-5);
  auto big = log_softmax(std::vector<double>{1000, 0});
  EXPECT_NEAR(big[0], 0.0, 1e-300);
  EXPECT_NEAR(big[1], -1000.0, 1e-12);
}

TEST(LogSoftmax, NormalizedAndShiftInvariant) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> shift(-500, 500);
  for (int trial = 0; trial < 200; ++trial) {
    const auto z = random_vector(2 + trial % 5, rng, trial % 2 ? 300.0 : 3.0);
    const auto lp = log_softmax(z);
    double total = 0.0;
    for (double v : lp) total += std::exp(v);
    EXPECT_NEAR(total, 1.0, 1e-9);
    auto shifted = z;
    const double c = shift(rng);
    for (double& v : shifted) v += c;
    const auto lp2 = log_softmax(shifted);
    for (std::size_t i = 0; i < lp.size(); ++i) EXPECT_NEAR(lp[i], lp2[i], 1e-9);
  }
}

TEST(NllLoss, HandValues) {
  EXPECT_NEAR(nll_loss(std::vector<double>{-0.6931, -0.6931}, 0), 0.6931, 1e-12);
  const std::vector<double> lp = {std::log(0.48 / 0.56), std::log(0.08 / 0.56)};
  EXPECT_NEAR(nll_loss(lp, 0), 0.1542, 5e-5);
  for (double eps : {1e-3, 1e-6, 1e-9}) {
    EXPECT_LT(nll_loss(std::vector<double>{std::log1p(-eps), std::log(eps)}, 0), 1.01 * eps);
  }
  EXPECT_THROW(nll_loss(lp, 2), DimensionError);
  EXPECT_EQ(nll_loss(std::vector<double>{0.0, -INFINITY}, 0), 0.0);
}

TEST(NllLoss, NonNegative) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto lp = log_softmax(random_vector(3, rng, 4.0));
    for (std::size_t y = 0; y < 3; ++y) EXPECT_GE(nll_loss(lp, y), 0.0);
  }
}

TEST(Mse, HandValues) {
  EXPECT_EQ(mse_loss(28, 28), 0.0);
  EXPECT_EQ(mse_loss(27, 30), 9.0);
  EXPECT_DOUBLE_EQ(mean_mse(std::vector<double>{27, 27, 29}, std::vector<double>{26, 28, 30}),
                   1.0);
}

TEST(LogSoftmaxVjp, MatchesCentralDifferences) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto z = random_vector(3, rng, 2.0);
    const auto g = random_vector(3, rng);
    const auto vjp = log_softmax_vjp(z, g);
    std::vector<std::span<double>> params = {std::span<double>(z)};
    const auto numeric = central_differences(
        params,
        [&] {
          const auto lp = log_softmax(z);
          return lp[0] * g[0] + lp[1] * g[1] + lp[2] * g[2];
        },
        1e-6);
    EXPECT_LT(max_relative_error(vjp, numeric), 1e-7);
  }
}

// Independent AdamW oracle: decay, then bias-corrected Adam step.
struct AdamOracle {
  double m = 0.0, v = 0.0;
  int t = 0;
  double step(double p, double g, const OptimizerSettings& s) {
    ++t;
    p *= 1.0 - s.learning_rate * s.weight_decay;
    m = s.beta1 * m + (1.0 - s.beta1) * g;
    v = s.beta2 * v + (1.0 - s.beta2) * g * g;
    const double mhat = m / (1.0 - std::pow(s.beta1, t));
    const double vhat = v / (1.0 - std::pow(s.beta2, t));
    return p - s.learning_rate * mhat / (std::sqrt(vhat) + s.epsilon);
  }
};

DenseNet tiny_net() {
  return DenseNet({layer(1, 2, {0.5, -1.5}, {0.25}, Activation::kIdentity)});
}

TEST(Optimizer, ZeroGradientWithoutDecayLeavesParameters) {
  auto net = tiny_net();
  const auto before = net;
  OptimizerSettings s;
  s.weight_decay = 0.0;
  s.learning_rate = 0.1;
  OptimizerState state(net, s);
  optimizer_step(state, net, NetGrad::zeros_like(net));
  EXPECT_EQ(net, before);
}

TEST(Optimizer, ZeroGradientDecaysMultiplicatively) {
  auto net = tiny_net();
  const auto before = net;
  OptimizerState state(net, OptimizerSettings{});  // lr 1e-5, decay 0.01
  optimizer_step(state, net, NetGrad::zeros_like(net));
  const double factor = 1.0 - 1e-5 * 0.01;
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(net.layers()[0].weight.data[i], before.layers()[0].weight.data[i] * factor);
  }
  EXPECT_EQ(net.layers()[0].bias[0], before.layers()[0].bias[0] * factor);
}

TEST(Optimizer, MatchesAdamWOracle) {
  auto net = tiny_net();
  OptimizerSettings s;
  s.learning_rate = 0.05;
  s.weight_decay = 0.1;
  OptimizerState state(net, s);
  std::vector<AdamOracle> oracle(3);
  std::vector<double> expected = {0.5, -1.5, 0.25};
  std::mt19937_64 rng(1);
  for (int step = 0; step < 20; ++step) {
    auto g = NetGrad::zeros_like(net);
    const auto gv = random_vector(3, rng);
    g.weight[0].data = {gv[0], gv[1]};
    g.bias[0] = {gv[2]};
    optimizer_step(state, net, g);
    for (std::size_t i = 0; i < 3; ++i) expected[i] = oracle[i].step(expected[i], gv[i], s);
  }
  EXPECT_NEAR(net.layers()[0].weight.data[0], expected[0], 1e-14);
  EXPECT_NEAR(net.layers()[0].weight.data[1], expected[1], 1e-14);
  EXPECT_NEAR(net.layers()[0].bias[0], expected[2], 1e-14);
  EXPECT_EQ(state.step, 20u);
}

TEST(Optimizer, ConstantGradientMovesAgainstItsSign) {
  for (auto kind : {OptimizerKind::kAdamW, OptimizerKind::kSgd}) {
    auto net = tiny_net();
    OptimizerSettings s;
    s.kind = kind;
    s.learning_rate = 1e-2;
    s.weight_decay = 0.0;
    OptimizerState state(net, s);
    auto g = NetGrad::zeros_like(net);
    g.weight[0].data = {2.0, -3.0};
    g.bias[0] = {0.5};
    for (int i = 0; i < 100; ++i) optimizer_step(state, net, g);
    EXPECT_LT(net.layers()[0].weight.data[0], 0.5);
    EXPECT_GT(net.layers()[0].weight.data[1], -1.5);
    EXPECT_LT(net.layers()[0].bias[0], 0.25);
  }
}

TEST(Optimizer, DeterministicAndShapeChecked) {
  auto a = tiny_net();
  auto b = tiny_net();
  OptimizerState sa(a, OptimizerSettings{});
  OptimizerState sb(b, OptimizerSettings{});
  auto g = NetGrad::zeros_like(a);
  g.weight[0].data = {0.3, 0.7};
  for (int i = 0; i < 5; ++i) {
    optimizer_step(sa, a, g);
    optimizer_step(sb, b, g);
  }
  EXPECT_EQ(a, b);
  const std::size_t dims[] = {3, 1};
  auto other = DenseNet::glorot(dims, Activation::kRelu, 1);
  EXPECT_THROW(optimizer_step(sa, a, NetGrad::zeros_like(other)), DimensionError);
}

TEST(Optimizer, ParsesKinds) {
  EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::kSgd);
  EXPECT_EQ(to_string(OptimizerKind::kAdamW), "adamw");
  EXPECT_THROW(parse_optimizer("lbfgs"), ConfigError);
}

TEST(RelativeError, AbsoluteNearZero) {
  EXPECT_EQ(relative_error(1e-9, 0.0), 1e-9);
  EXPECT_DOUBLE_EQ(relative_error(100.0, 101.0), 1.0 / 101.0);
}

TEST(FiniteDiff, TwoLayerNet) {
  const std::size_t dims[] = {4, 3, 2};
  const auto net = DenseNet::glorot(dims, Activation::kRelu, 17);
  const std::vector<double> x = {0.3, -1.2, 0.8, 2.0};
  EXPECT_LT(finite_diff_check(net, x, 0), 1e-6);
  EXPECT_LT(finite_diff_check(net, x, 1), 1e-6);
}

TEST(FiniteDiff, IdentityNet) {
  const DenseNet net({layer(2, 2, {1, 0, 0, 1}, {0, 0}, Activation::kIdentity)});
  EXPECT_LT(finite_diff_check(net, std::vector<double>{0.5, -0.5}, 1), 1e-9);
}

TEST(FiniteDiff, RandomNetsProperty) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 120; ++trial) {
    std::vector<std::size_t> dims = {1 + rng() % 6};
    const std::size_t hidden = rng() % 3;
    for (std::size_t h = 0; h < hidden; ++h) dims.push_back(1 + rng() % 6);
    dims.push_back(2 + rng() % 2);
    auto net = DenseNet::glorot(dims, Activation::kRelu, rng());
    // Nonzero biases keep a dead unit from parking the next layer exactly on
    // the relu kink, where central differences see slope 1/2.
    for (auto& l : net.layers()) l.bias = random_vector(l.bias.size(), rng, 0.5);
    const auto x = random_vector(dims.front(), rng);
    EXPECT_LT(finite_diff_check(net, x, rng() % dims.back()), 1e-6) << "trial " << trial;
  }
}

TEST(FiniteDiff, DetectsCorruptedGradient) {
  const std::size_t dims[] = {4, 3, 2};
  auto net = DenseNet::glorot(dims, Activation::kRelu, 17);
  const std::vector<double> x = {0.3, -1.2, 0.8, 2.0};
  auto loss = [&] { return nll_loss(log_softmax(forward(net, x).output), 0); };
  const auto fwd = forward(net, x);
  const auto dz = log_softmax_vjp(fwd.output, std::vector<double>{-1.0, 0.0});
  auto grad = backward(net, fwd.tape, dz).grad;
  const auto numeric = central_differences(net.parameters(), loss, 1e-6);
  EXPECT_LT(max_relative_error(grad.flatten(), numeric), 1e-6);
  grad.weight[0].data[2] += 1.0;
  EXPECT_GT(max_relative_error(grad.flatten(), numeric), 1e-2);
}

}  // namespace
}  // namespace mmpoe
