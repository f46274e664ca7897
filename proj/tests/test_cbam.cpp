#include <gtest/gtest.h>

#include <cmath>

#include "cavenet/cbam.hpp"
#include "cavenet/checkpoint.hpp"
#include "cavenet/error.hpp"
#include "cavenet/ops.hpp"
#include "grad_suite.hpp"

using namespace cavenet;
using namespace cavenet::cbam;
using namespace cavenet::testing;

namespace {

constexpr double kGradTol = 1e-4;

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

CbamConfig small_config() {
  CbamConfig cfg;
  cfg.side = 16;
  cfg.classes = 4;
  cfg.epochs = 6;
  cfg.patience = 3;
  return cfg;
}

}  // namespace

TEST(Spatial, ConstantMapGivesConstantGate) {
  Rng rng(1);
  const SpatialAttention s = SpatialAttention::make(7, rng);
  const Tensor f = Tensor::full({3, 5, 5}, 0.7f);
  const Tensor out = s(f);
  ASSERT_EQ(out.shape(), f.shape());
  // Interior pixels see the full kernel, so their gate is one shared constant.
  const Tensor m = s.map(f);
  EXPECT_EQ(m.shape(), (Shape{1, 5, 5}));
  for (float v : m.data()) EXPECT_TRUE(v > 0.0f && v < 1.0f);
  for (std::size_t i = 0; i < out.numel(); ++i) EXPECT_FLOAT_EQ(out[i], m[i % 25] * 0.7f);
}

TEST(Spatial, ZeroKernelGatesAtOneHalf) {
  Rng rng(1);
  SpatialAttention s = SpatialAttention::make(7, rng);
  for (auto& v : s.weight.mutable_data()) v = 0.0f;
  const Tensor f = random_tensor({2, 6, 6}, rng);
  const Tensor out = s(f);
  for (std::size_t i = 0; i < f.numel(); ++i) EXPECT_FLOAT_EQ(out[i], 0.5f * f[i]);
  EXPECT_THROW(s.map(Tensor::zeros({0, 4, 4})), ShapeError);
}

TEST(Channel, ZeroExpandGivesOneHalf) {
  Rng rng(2);
  ChannelAttention c = ChannelAttention::make(8, 4, rng);
  for (auto& v : c.expand.weight.mutable_data()) v = 0.0f;
  for (auto& v : c.expand.bias.mutable_data()) v = 0.0f;
  const Tensor m = c.map(random_tensor({8, 3, 3}, rng));
  EXPECT_EQ(m.shape(), (Shape{8, 1, 1}));
  for (float v : m.data()) EXPECT_EQ(v, 0.5f);
}

TEST(Channel, DegenerateSpatialSizeAndRange) {
  Rng rng(3);
  const ChannelAttention c = ChannelAttention::make(4, 4, rng);
  const Tensor f = random_tensor({4, 1, 1}, rng);
  // Pooling over a 1x1 map is the identity, so the map equals the MLP applied
  // to the raw channel values.
  const Tensor direct = sigmoid(c.expand(relu(c.reduce(f.reshape({1, 4}))))).reshape({4, 1, 1});
  EXPECT_TRUE(bitwise_equal(c.map(f), direct));
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor m = c.map(random_tensor({4, 3, 3}, rng, 1.0));
    for (float v : m.data()) EXPECT_TRUE(v > 0.0f && v < 1.0f) << v;
  }
}

TEST(Refine, SaturatedGatesAreIdentity) {
  Rng rng(4);
  Cbam m = Cbam::make(4, 4, 7, rng);
  m.spatial.bias.mutable_data()[0] = 40.0f;
  for (auto& v : m.spatial.weight.mutable_data()) v *= 0.01f;
  for (auto& v : m.channel.expand.bias.mutable_data()) v = 40.0f;
  for (auto& v : m.channel.expand.weight.mutable_data()) v *= 0.01f;
  const Tensor f = random_tensor({4, 5, 5}, rng);
  const Tensor out = m.refine(f);
  for (std::size_t i = 0; i < f.numel(); ++i) EXPECT_NEAR(out[i], f[i], 1e-3);
}

TEST(Refine, ContractsAndKeepsShape) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Cbam m = Cbam::make(6, 4, 7, rng);
    const Tensor f = random_tensor({6, 4, 4}, rng, 2.0);
    const Tensor out = m.refine(f);
    ASSERT_EQ(out.shape(), f.shape());
    for (std::size_t i = 0; i < f.numel(); ++i) EXPECT_LE(std::abs(out[i]), std::abs(f[i]));
  }
}

TEST(Refine, SpatialGateIsAppliedFirst) {
  // Channel 0 is bright on the left half, channel 1 on the right half with a
  // larger amplitude; the gates depend on each other's output, so the two
  // composition orders give different maps.
  Rng rng(6);
  const Cbam m = Cbam::make(2, 1, 7, rng);
  Tensor f = Tensor::zeros({2, 4, 4});
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) {
      f.mutable_data()[y * 4 + x] = x < 2 ? 1.0f : 0.1f;
      f.mutable_data()[16 + y * 4 + x] = x < 2 ? -0.5f : 3.0f;
    }
  }
  const Tensor g = m.spatial(f);
  const Tensor spatial_first = mul(m.channel.map(g), g);
  const Tensor h = mul(m.channel.map(f), f);
  const Tensor channel_first = mul(m.spatial.map(h), h);
  const Tensor out = m.refine(f);
  EXPECT_TRUE(bitwise_equal(out, spatial_first));
  double gap = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) gap = std::max(gap, std::abs(double(out[i]) - channel_first[i]));
  EXPECT_GT(gap, 1e-3);
}

TEST(Refine, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    const double err = gradcheck([](const auto& in) { return module_from(in).refine(in[0]); },
                                 random_module_inputs(2, 4, rng), rng, kModuleStep, true);
    EXPECT_LE(err, kGradTol) << "instance " << i;
  }
}

TEST(Spatial, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  for (int i = 0; i < 20; ++i) {
    const double err = gradcheck([](const auto& in) { return module_from(in).spatial(in[0]); },
                                 random_module_inputs(3, 4, rng), rng, kModuleStep, true);
    EXPECT_LE(err, kGradTol) << "instance " << i;
  }
}

TEST(Backbone, ShapesAndDistribution) {
  const CbamModel m(small_config(), 1);
  const auto ds = data::generate_synthetic(4, 3, 16, 2);
  const ProbMatrix p = m.predict_proba(ds);
  EXPECT_NO_THROW(p.check_distribution(1e-6));
  EXPECT_EQ(m.features(ds[0].pixels).shape(), (Shape{32, 2, 2}));
  EXPECT_EQ(m.attention_map(ds[0].pixels).shape(), (Shape{1, 2, 2}));
  EXPECT_THROW(m.forward(Tensor::zeros({3, 8, 8})), ShapeError);
  EXPECT_EQ(p.values, m.predict_proba(ds, 3).values);
}

TEST(Backbone, ResNet18LayoutInstantiates) {
  const CbamModel m(CbamConfig::resnet18(32, 10), 1);
  std::size_t convs = 0;
  for (const auto& p : m.parameters()) convs += p.tensor.rank() == 4 && p.name.find("conv") != std::string::npos;
  // 16 block convs; the stem is named separately.
  EXPECT_EQ(convs, 16u);
  const Tensor out = m.forward(data::generate_synthetic(1, 1, 32, 1)[0].pixels);
  EXPECT_EQ(out.shape(), (Shape{10}));
  EXPECT_THROW(CbamModel(CbamConfig::resnet18(48, 10), 1), ConfigError);
}

TEST(Training, LearnsSyntheticClassesWithAndWithoutAttention) {
  auto [train, val] = data::stratified_split(data::generate_synthetic(4, 50, 16, 3), 0.2, 1);
  for (bool attention : {true, false}) {
    CbamConfig cfg = small_config();
    cfg.use_attention = attention;
    const CbamModel m = train_cbam(cfg, train, val, 2);
    const ProbMatrix p = m.predict_proba(val);
    EXPECT_NO_THROW(p.check_distribution(1e-6));
    EXPECT_GT(accuracy(p, val), 0.8) << "attention=" << attention;
    double best = 0.0;
    for (const auto& e : m.history) best = std::max(best, e.val_accuracy);
    EXPECT_DOUBLE_EQ(accuracy(p, val), best);
  }
}

TEST(Training, Errors) {
  data::LabeledDataset empty(4);
  EXPECT_THROW(train_cbam(small_config(), empty, empty, 1), DataError);
  CbamConfig cfg = small_config();
  cfg.side = 20;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Checkpoint, RoundTrip) {
  auto [train, val] = data::stratified_split(data::generate_synthetic(4, 10, 16, 3), 0.2, 1);
  CbamConfig cfg = small_config();
  cfg.epochs = 1;
  const CbamModel m = train_cbam(cfg, train, val, 2);
  const CbamModel back = CbamModel::from_checkpoint(Checkpoint::deserialize(m.to_checkpoint().serialize()));
  EXPECT_EQ(back.predict_proba(val).values, m.predict_proba(val).values);
  EXPECT_EQ(back.history.size(), 1u);
}
