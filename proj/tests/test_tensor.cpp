#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "cavenet/error.hpp"
#include "cavenet/ops.hpp"
#include "cavenet/optim.hpp"
#include "gradcheck.hpp"

using namespace cavenet;
using cavenet::testing::gradcheck;
using cavenet::testing::grad_input;
using cavenet::testing::random_tensor;
using cavenet::testing::spaced_tensor;

namespace {
constexpr double kGradTol = 1e-4;
constexpr int kInstances = 20;

double inner(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}
}  // namespace

TEST(Tensor, ElementCountMustMatchShape) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<float>(5)), ShapeError);
  EXPECT_THROW(Tensor({0, 3}, {}), ShapeError);
  Tensor t({2, 3}, std::vector<float>(6, 1.0f));
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_FALSE(t.has_grad());
  EXPECT_EQ(t.grad_mut().size(), 6u);
}

TEST(Tensor, TapeReplaysInReverseOrder) {
  Tensor x = Tensor::full({2}, 1.0f);
  x.set_requires_grad(true);
  Tape tape;
  std::vector<std::string> visited;
  {
    TapeScope scope(tape);
    tape.record("first", [&] { visited.push_back("first"); });
    tape.record("second", [&] { visited.push_back("second"); });
    Tensor y = sum(relu(x));
    tape.backward(y);
  }
  EXPECT_EQ(tape.op_names(), (std::vector<std::string>{"first", "second", "relu", "sum"}));
  EXPECT_EQ(visited, (std::vector<std::string>{"second", "first"}));
  EXPECT_FLOAT_EQ(x.grad()[0], 1.0f);
}

TEST(Tensor, NoTapeMeansNoRecording) {
  Tensor x = Tensor::full({2}, 1.0f);
  x.set_requires_grad(true);
  Tensor y = relu(x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Tensor, NonFiniteForwardIsAnError) {
  Tensor x({1}, {std::numeric_limits<float>::max()});
  EXPECT_THROW(scale(x, 10.0f), NumericError);
}

TEST(Matmul, IdentityAndDirectArithmetic) {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor b({2, 2}, {3, 4, 5, 6});
  auto c = matmul(eye, b);
  EXPECT_EQ(std::vector<float>(c.data().begin(), c.data().end()), (std::vector<float>{3, 4, 5, 6}));
  auto d = matmul(Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {3, 4}));
  EXPECT_EQ(d.shape(), (Shape{1, 1}));
  EXPECT_FLOAT_EQ(d.item(), 11.0f);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("[2,3] and [2,3]"), std::string::npos);
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  for (int i = 0; i < kInstances; ++i) {
    auto err = gradcheck([](const auto& in) { return matmul(in[0], in[1]); },
                         {grad_input({3, 4}, rng), grad_input({4, 2}, rng)}, rng);
    EXPECT_LE(err, kGradTol);
  }
}

TEST(Conv2d, IdentityKernelAndCenterSum) {
  Rng rng(5);
  Tensor x = random_tensor({1, 3, 3}, rng);
  auto y = conv2d(x, Tensor::full({1, 1, 1, 1}, 1.0f), 1, 0);
  EXPECT_EQ(std::vector<float>(y.data().begin(), y.data().end()),
            std::vector<float>(x.data().begin(), x.data().end()));
  auto z = conv2d(Tensor::full({1, 3, 3}, 1.0f), Tensor::full({1, 1, 3, 3}, 1.0f), 1, 1);
  EXPECT_EQ(z.shape(), (Shape{1, 3, 3}));
  EXPECT_FLOAT_EQ(z[4], 9.0f);
  EXPECT_FLOAT_EQ(z[0], 4.0f);
}

TEST(Conv2d, OutputExtentFormulaAndErrors) {
  auto y = conv2d(Tensor::zeros({2, 8, 6}), Tensor::zeros({5, 2, 4, 2}), 2, 1);
  EXPECT_EQ(y.shape(), (Shape{5, 4, 4}));
  EXPECT_THROW(conv2d(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 1, 3, 3}), 2, 0), ShapeError);
  EXPECT_THROW(conv2d(Tensor::zeros({2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), 1, 1), ShapeError);
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  Rng rng(12);
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t stride = 1 + static_cast<std::size_t>(i % 2);
    auto err = gradcheck(
        [stride](const auto& in) { return conv2d(in[0], in[1], stride, 1); },
        {grad_input({2, 5, 5}, rng), grad_input({3, 2, 3, 3}, rng)}, rng);
    EXPECT_LE(err, kGradTol);
  }
}

TEST(Conv2dTranspose, SinglePixelScalesKernel) {
  Tensor k({1, 1, 2, 2}, {1, 2, 3, 4});
  auto y = conv2d_transpose(Tensor({1, 1, 1}, {2.5f}), k, 2, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 2}));
  EXPECT_EQ(std::vector<float>(y.data().begin(), y.data().end()),
            (std::vector<float>{2.5f, 5.0f, 7.5f, 10.0f}));
}

TEST(Conv2dTranspose, ChannelMismatchIsShapeError) {
  EXPECT_THROW(conv2d_transpose(Tensor::zeros({2, 3, 3}), Tensor::zeros({3, 1, 2, 2}), 2, 0),
               ShapeError);
}

TEST(Conv2dTranspose, AdjointOfConv2d) {
  Rng rng(13);
  for (int i = 0; i < kInstances; ++i) {
    const std::size_t stride = 1 + static_cast<std::size_t>(i % 2);
    const std::size_t pad = static_cast<std::size_t>(i % 3 == 0);
    const std::size_t side = stride == 2 ? 7 + 2 * pad % 2 : 6;
    Tensor k = random_tensor({3, 2, 3, 3}, rng);
    Tensor x = random_tensor({2, side, side}, rng);
    Tensor y0 = conv2d(x, k, stride, pad);
    Tensor y = random_tensor(y0.shape(), rng);
    Tensor xt = conv2d_transpose(y, k, stride, pad);
    ASSERT_EQ(xt.shape(), x.shape());
    const double lhs = inner(y0, y), rhs = inner(x, xt);
    EXPECT_NEAR(lhs, rhs, 1e-5 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(Conv2dTranspose, GradientMatchesFiniteDifferences) {
  Rng rng(14);
  for (int i = 0; i < kInstances; ++i) {
    auto err = gradcheck([](const auto& in) { return conv2d_transpose(in[0], in[1], 2, 1); },
                         {grad_input({2, 3, 3}, rng), grad_input({2, 3, 4, 4}, rng)}, rng);
    EXPECT_LE(err, kGradTol);
  }
}

TEST(Pool, ConstantMapAndDegenerateSpatialSize) {
  Tensor c = Tensor::full({2, 4, 4}, 0.7f);
  for (auto kind : {PoolKind::max, PoolKind::avg}) {
    for (const Tensor& t : {pool2d(c, kind, 2, 2), global_pool(c, kind), channel_pool(c, kind)}) {
      for (float v : t.data()) EXPECT_FLOAT_EQ(v, 0.7f);
    }
  }
  Tensor x({3, 1, 1}, {0.1f, -2.0f, 5.0f});
  auto g = global_pool(x, PoolKind::avg);
  EXPECT_EQ(g.shape(), (Shape{3, 1, 1}));
  EXPECT_EQ(std::vector<float>(g.data().begin(), g.data().end()),
            std::vector<float>(x.data().begin(), x.data().end()));
}

TEST(Pool, FloorSemanticsAndErrors) {
  EXPECT_EQ(pool2d(Tensor::zeros({1, 5, 7}), PoolKind::avg, 2, 2).shape(), (Shape{1, 2, 3}));
  EXPECT_THROW(pool2d(Tensor::zeros({1, 4, 4}), PoolKind::max, 0, 1), ShapeError);
  EXPECT_EQ(channel_pool(Tensor::zeros({3, 4, 5}), PoolKind::max).shape(), (Shape{1, 4, 5}));
}

TEST(Pool, GradientsMatchFiniteDifferences) {
  Rng rng(15);
  for (int i = 0; i < kInstances; ++i) {
    EXPECT_LE(gradcheck([](const auto& in) { return pool2d(in[0], PoolKind::avg, 2, 2); },
                        {grad_input({2, 4, 5}, rng)}, rng),
              kGradTol);
    EXPECT_LE(gradcheck([](const auto& in) { return pool2d(in[0], PoolKind::max, 2, 1); },
                        {spaced_tensor({2, 4, 4}, rng)}, rng),
              kGradTol);
    EXPECT_LE(gradcheck([](const auto& in) { return global_pool(in[0], PoolKind::avg); },
                        {grad_input({3, 3, 3}, rng)}, rng),
              kGradTol);
    EXPECT_LE(gradcheck([](const auto& in) { return global_pool(in[0], PoolKind::max); },
                        {spaced_tensor({3, 3, 3}, rng)}, rng),
              kGradTol);
    EXPECT_LE(gradcheck([](const auto& in) { return channel_pool(in[0], PoolKind::avg); },
                        {grad_input({3, 3, 4}, rng)}, rng),
              kGradTol);
    EXPECT_LE(gradcheck([](const auto& in) { return channel_pool(in[0], PoolKind::max); },
                        {spaced_tensor({3, 3, 4}, rng)}, rng),
              kGradTol);
  }
}

TEST(Activations, KnownValues) {
  auto s = softmax(Tensor::zeros({3}), 0);
  for (float v : s.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-7);
  EXPECT_FLOAT_EQ(sigmoid(Tensor::scalar(0.0f)).item(), 0.5f);
  auto r = relu(Tensor({3}, {-1.0f, 0.0f, 2.0f}));
  EXPECT_EQ(std::vector<float>(r.data().begin(), r.data().end()), (std::vector<float>{0, 0, 2}));
}

TEST(Activations, SoftmaxRowsSumToOneAndShiftInvariant) {
  Rng rng(16);
  for (int i = 0; i < 50; ++i) {
    Tensor x = random_tensor({4, 6}, rng, 10.0);
    Tensor shifted = Tensor::zeros(x.shape());
    const float c = static_cast<float>(rng.uniform(-50, 50));
    for (std::size_t j = 0; j < x.numel(); ++j) shifted.mutable_data()[j] = x[j] + c;
    auto p = softmax(x, 1);
    auto q = softmax(shifted, 1);
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < 6; ++j) total += p[r * 6 + j];
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
    for (std::size_t j = 0; j < x.numel(); ++j) EXPECT_NEAR(p[j], q[j], 1e-6);
  }
}

TEST(Activations, SigmoidStaysInOpenInterval) {
  Rng rng(17);
  const Tensor y = sigmoid(random_tensor({200}, rng, 5.0));
  for (float v : y.data()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
}

TEST(Activations, GradientsMatchFiniteDifferences) {
  Rng rng(18);
  for (int i = 0; i < kInstances; ++i) {
    EXPECT_LE(gradcheck([](const auto& in) { return softmax(in[0], 1); }, {grad_input({3, 5}, rng)}, rng),
              kGradTol);
    EXPECT_LE(gradcheck([](const auto& in) { return softmax(in[0], 0); }, {grad_input({4, 2}, rng)}, rng),
              kGradTol);
    EXPECT_LE(gradcheck([](const auto& in) { return sigmoid(in[0]); }, {grad_input({10}, rng)}, rng),
              kGradTol);
    EXPECT_LE(gradcheck([](const auto& in) { return relu(in[0]); }, {spaced_tensor({12}, rng)}, rng),
              kGradTol);
  }
}

TEST(Elementwise, BroadcastGradients) {
  Rng rng(19);
  for (int i = 0; i < kInstances; ++i) {
    EXPECT_LE(gradcheck([](const auto& in) { return mul(in[0], in[1]); },
                        {grad_input({3, 2, 4}, rng), grad_input({1, 2, 4}, rng)}, rng),
              kGradTol);
    EXPECT_LE(gradcheck([](const auto& in) { return add(in[0], in[1]); },
                        {grad_input({3, 2, 4}, rng), grad_input({3, 1, 1}, rng)}, rng),
              kGradTol);
    EXPECT_LE(gradcheck([](const auto& in) { return sub(in[0], in[1]); },
                        {grad_input({2, 5}, rng), grad_input({5}, rng)}, rng),
              kGradTol);
  }
  EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
}

TEST(Loss, MseValuesAndGradient) {
  Rng rng(20);
  Tensor t = random_tensor({2, 3}, rng);
  EXPECT_FLOAT_EQ(mse_loss(t, t).item(), 0.0f);
  Tensor p = Tensor::zeros(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) p.mutable_data()[i] = t[i] + 1.0f;
  EXPECT_NEAR(mse_loss(p, t).item(), 1.0, 1e-6);
  EXPECT_THROW(mse_loss(Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);

  // Analytic gradient is 2 (pred - target) / N.
  p.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(mse_loss(p, t));
  }
  for (std::size_t i = 0; i < p.numel(); ++i) EXPECT_NEAR(p.grad()[i], 2.0 / 6.0, 1e-6);

  for (int i = 0; i < kInstances; ++i) {
    EXPECT_LE(gradcheck([](const auto& in) { return mse_loss(in[0], in[1]); },
                        {grad_input({3, 4}, rng), grad_input({3, 4}, rng)}, rng),
              kGradTol);
  }
}

TEST(Loss, CrossEntropyValuesAndGradient) {
  Tensor onehot({2, 3}, {0, 1, 0, 1, 0, 0});
  const std::vector<int> labels{1, 0};
  EXPECT_NEAR(cross_entropy(onehot, labels).item(), 0.0, 1e-7);
  Tensor uniform = Tensor::full({1, 10}, 0.1f);
  const std::vector<int> one{3};
  EXPECT_NEAR(cross_entropy(uniform, one).item(), 2.302585, 1e-6);
  const std::vector<int> bad{10};
  EXPECT_THROW(cross_entropy(uniform, bad), DataError);

  Rng rng(21);
  for (int i = 0; i < kInstances; ++i) {
    Tensor probs = softmax(grad_input({4, 5}, rng), 1);
    std::vector<int> lab(4);
    for (auto& l : lab) l = static_cast<int>(rng.below(5));
    EXPECT_LE(gradcheck([lab](const auto& in) { return cross_entropy(in[0], lab); }, {probs}, rng),
              kGradTol);
  }
}

TEST(Dropout, IdentityCasesAndErrors) {
  Rng rng(22);
  Tensor x = random_tensor({100}, rng);
  auto a = dropout(x, 0.0f, true, rng);
  auto b = dropout(x, 0.7f, false, rng);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_EQ(a[i], x[i]);
    EXPECT_EQ(b[i], x[i]);
  }
  EXPECT_THROW(dropout(x, 1.0f, true, rng), ConfigError);
}

TEST(Dropout, SurvivorFractionWithinThreeSigma) {
  Rng rng(23);
  const std::size_t n = 100000;
  auto y = dropout(Tensor::full({n}, 1.0f), 0.5f, true, rng);
  std::size_t survivors = 0;
  for (float v : y.data()) {
    if (v != 0.0f) {
      ++survivors;
      EXPECT_FLOAT_EQ(v, 2.0f);
    }
  }
  const double sigma = std::sqrt(n * 0.25);
  EXPECT_LE(std::abs(static_cast<double>(survivors) - n * 0.5), 3.0 * sigma);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::vector<Tensor> params{Tensor({3}, {1, 2, 3})};
  params[0].grad_mut();
  AdamState state;
  adam_step(params, state, {});
  EXPECT_EQ(std::vector<float>(params[0].data().begin(), params[0].data().end()),
            (std::vector<float>{1, 2, 3}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  for (float g : {0.37f, -5.0f}) {
    std::vector<Tensor> params{Tensor::scalar(1.0f)};
    params[0].grad_mut()[0] = g;
    AdamState state;
    adam_step(params, state, {.lr = 0.01f});
    EXPECT_NEAR(params[0].item(), 1.0f - 0.01f * (g > 0 ? 1.0f : -1.0f), 1e-6);
  }
}

TEST(Adam, RejectsNonPositiveLearningRate) {
  std::vector<Tensor> params{Tensor::scalar(1.0f)};
  AdamState state;
  EXPECT_THROW(adam_step(params, state, {.lr = 0.0f}), ConfigError);
}

TEST(Adam, ConvergesOnQuadraticBowl) {
  const std::vector<float> center{1.5f, -2.0f, 0.25f};
  std::vector<Tensor> params{Tensor::zeros({3})};
  params[0].set_requires_grad(true);
  Tensor target({3}, center);
  AdamState state;
  int steps = 0;
  for (; steps < 500; ++steps) {
    zero_grads(params);
    Tape tape;
    TapeScope scope(tape);
    tape.backward(mse_loss(params[0], target));
    adam_step(params, state, {.lr = 0.05f});
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(params[0][i], center[i], 1e-3);
}

TEST(Determinism, RepeatedForwardBackwardIsBitwiseIdentical) {
  auto run = [] {
    Rng rng(99);
    Tensor x = random_tensor({2, 6, 6}, rng);
    Tensor k = random_tensor({3, 2, 3, 3}, rng);
    k.set_requires_grad(true);
    Tape tape;
    TapeScope scope(tape);
    Tensor y = sum(sigmoid(conv2d(x, k, 1, 1)));
    tape.backward(y);
    std::vector<float> out{y.item()};
    out.insert(out.end(), k.grad().begin(), k.grad().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}
