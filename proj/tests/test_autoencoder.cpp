#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>

#include "cavenet/autoencoder.hpp"
#include "cavenet/checkpoint.hpp"
#include "cavenet/error.hpp"

using namespace cavenet;
using namespace cavenet::ae;
using cavenet::data::generate_synthetic;
using cavenet::data::stratified_split;

namespace {

AutoencoderConfig small_config() {
  AutoencoderConfig cfg;
  cfg.side = 16;
  cfg.widths = {8, 16};
  cfg.latent_dim = 32;
  cfg.max_epochs = 20;
  cfg.lr = 3e-3;
  return cfg;
}

// Multinomial logistic regression by full-batch gradient descent on
// standardized features; returns training accuracy.
double probe_accuracy(const LatentSet& set, std::size_t classes) {
  const std::size_t n = set.rows(), d = set.dim;
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mu[j] += set.row(i)[j] / static_cast<double>(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) sd[j] += std::pow(set.row(i)[j] - mu[j], 2) / static_cast<double>(n);
  }
  auto x = [&](std::size_t i, std::size_t j) { return (set.row(i)[j] - mu[j]) / std::sqrt(sd[j] + 1e-12); };
  std::vector<double> w(d * classes, 0.0), b(classes, 0.0);
  std::vector<double> p(classes);
  for (int it = 0; it < 200; ++it) {
    std::vector<double> gw(d * classes, 0.0), gb(classes, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double mx = -1e300;
      for (std::size_t c = 0; c < classes; ++c) {
        p[c] = b[c];
        for (std::size_t j = 0; j < d; ++j) p[c] += w[j * classes + c] * x(i, j);
        mx = std::max(mx, p[c]);
      }
      double z = 0.0;
      for (auto& v : p) z += (v = std::exp(v - mx));
      for (std::size_t c = 0; c < classes; ++c) {
        const double g = p[c] / z - (static_cast<int>(c) == set.labels[i] ? 1.0 : 0.0);
        gb[c] += g;
        for (std::size_t j = 0; j < d; ++j) gw[j * classes + c] += g * x(i, j);
      }
    }
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= 0.5 * gw[k] / static_cast<double>(n);
    for (std::size_t c = 0; c < classes; ++c) b[c] -= 0.5 * gb[c] / static_cast<double>(n);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_v = -1e300;
    for (std::size_t c = 0; c < classes; ++c) {
      double v = b[c];
      for (std::size_t j = 0; j < d; ++j) v += w[j * classes + c] * x(i, j);
      if (v > best_v) best_v = v, best = c;
    }
    correct += static_cast<int>(best) == set.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

struct Trained {
  LabeledDataset train, val;
  Autoencoder model;
};

const Trained& trained() {
  static const Trained t = [] {
    auto [train, val] = stratified_split(generate_synthetic(4, 100, 16, 21), 0.2, 3);
    Autoencoder m = train_autoencoder(small_config(), train, val, 5);
    return Trained{train, val, std::move(m)};
  }();
  return t;
}

}  // namespace

TEST(Config, Validation) {
  AutoencoderConfig cfg = small_config();
  EXPECT_NO_THROW(cfg.validate());
  cfg.patience = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.latent_dim = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.widths.clear();
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.side = 18;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.max_epochs = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Shapes, EncodeDecodeContracts) {
  const Autoencoder m(small_config(), 1);
  const Tensor img = generate_synthetic(1, 1, 16, 1)[0].pixels;
  const Tensor z = m.encode(img);
  EXPECT_EQ(z.shape(), (Shape{32}));
  const Tensor z2 = m.encode(img);
  EXPECT_TRUE(std::equal(z.data().begin(), z.data().end(), z2.data().begin()));
  const Tensor out = m.decode(Tensor::zeros({32}));
  EXPECT_EQ(out.shape(), (Shape{3, 16, 16}));
  const Tensor out2 = m.decode(Tensor::zeros({32}));
  EXPECT_TRUE(std::equal(out.data().begin(), out.data().end(), out2.data().begin()));
  for (float v : out.data()) EXPECT_TRUE(v > 0.0f && v < 1.0f);
  EXPECT_THROW(m.encode(Tensor::zeros({3, 8, 8})), ShapeError);
  EXPECT_THROW(m.decode(Tensor::zeros({31})), ShapeError);
}

TEST(Shapes, FullScaleFeatureReduction) {
  EXPECT_EQ(224u * 224u * 3u, 150528u);
  EXPECT_EQ(AutoencoderConfig{}.latent_dim, 1024u);
  EXPECT_EQ(AutoencoderConfig{}.max_epochs, 40u);
}

TEST(Training, LossFallsAndBeatsMeanImage) {
  const auto& t = trained();
  ASSERT_FALSE(t.model.history.empty());
  EXPECT_LT(t.model.history.back().train, t.model.history.front().train);
  const double rec = reconstruction_mse(t.model, t.val);
  const double base = mean_image_mse(t.val);
  EXPECT_LT(rec, 0.5 * base) << "reconstruction " << rec << " baseline " << base;
}

TEST(Training, ReturnsBestValidationEpoch) {
  const auto& t = trained();
  double best = 1e300;
  for (const auto& e : t.model.history) best = std::min(best, e.val);
  EXPECT_NEAR(reconstruction_mse(t.model, t.val), best, 1e-6 * std::max(1.0, best));
  for (std::size_t i = 0; i < t.model.history.size(); ++i) EXPECT_EQ(t.model.history[i].epoch, i + 1);
}

TEST(Training, TrainedLatentsProbeBetterThanUntrained) {
  const auto& t = trained();
  const Autoencoder untrained(small_config(), 77);
  const double before = probe_accuracy(extract_latents(untrained, t.train), 4);
  const double after = probe_accuracy(extract_latents(t.model, t.train), 4);
  EXPECT_GT(after, before) << "untrained " << before << " trained " << after;
}

TEST(Training, FrozenRunStopsAfterPatiencePlusOne) {
  auto [train, val] = stratified_split(generate_synthetic(2, 6, 16, 2), 0.5, 1);
  AutoencoderConfig cfg = small_config();
  cfg.lr = 0.0;
  cfg.patience = 3;
  cfg.max_epochs = 20;
  const Autoencoder m = train_autoencoder(cfg, train, val, 9);
  EXPECT_EQ(m.history.size(), 4u);
  EXPECT_EQ(m.best_epoch, 1u);
}

TEST(Training, SingleImageCapacity) {
  auto ds = generate_synthetic(1, 1, 16, 4);
  AutoencoderConfig cfg = small_config();
  cfg.batch_size = 1;
  cfg.max_epochs = 500;
  cfg.patience = 500;
  cfg.lr = 3e-3;
  const Autoencoder m = train_autoencoder(cfg, ds, ds, 1);
  EXPECT_LE(m.history.size(), 500u);
  EXPECT_LT(reconstruction_mse(m, ds), 0.01);
}

TEST(Training, EmptyDatasetIsAnError) {
  LabeledDataset empty(4);
  EXPECT_THROW(train_autoencoder(small_config(), empty, empty, 1), DataError);
}

TEST(Latents, ShapeOrderAndDeterminism) {
  const auto& t = trained();
  const LatentSet a = extract_latents(t.model, t.val);
  const LatentSet b = extract_latents(t.model, t.val, 3);
  ASSERT_EQ(a.rows(), t.val.size());
  ASSERT_EQ(a.dim, 32u);
  EXPECT_EQ(a.values, b.values);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    EXPECT_EQ(a.labels[i], t.val[i].label);
    const Tensor z = t.model.encode(t.val[i].pixels);
    EXPECT_TRUE(std::equal(z.data().begin(), z.data().end(), a.row(i).begin()));
  }
}

TEST(Latents, CsvAndBinaryRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "cavenet_test_latents";
  std::filesystem::create_directories(dir);
  const LatentSet a = extract_latents(trained().model, trained().val);
  write_latents_csv(dir / "z.csv", a);
  write_latents_bin(dir / "z.bin", a);
  const LatentSet c = read_latents(dir / "z.csv");
  const LatentSet b = read_latents(dir / "z.bin");
  EXPECT_EQ(c.values, a.values);
  EXPECT_EQ(b.values, a.values);
  EXPECT_EQ(c.labels, a.labels);
  EXPECT_EQ(b.labels, a.labels);
  std::filesystem::remove_all(dir);
}

TEST(Merge, CountsAndLabels) {
  const Autoencoder m(small_config(), 3);
  const LabeledDataset ds = generate_synthetic(2, 5, 16, 6);
  Rng rng(1);
  EXPECT_EQ(merge_reconstructions(m, ds, 0.0, rng).size(), ds.size());
  const LabeledDataset all = merge_reconstructions(m, ds, 1.0, rng);
  ASSERT_EQ(all.size(), 20u);
  std::size_t rec = 0;
  for (std::size_t i = 10; i < all.size(); ++i) {
    EXPECT_EQ(all[i].provenance, data::Provenance::reconstructed);
    const std::string src = all[i].source_id.substr(0, all[i].source_id.find('#'));
    for (const auto& r : ds.records()) {
      if (r.source_id == src) EXPECT_EQ(r.label, all[i].label);
    }
    ++rec;
  }
  EXPECT_EQ(rec, 10u);
  EXPECT_EQ(merge_reconstructions(m, generate_synthetic(1, 40, 16, 2), kDefaultMergeFraction, rng).size(), 42u);
  EXPECT_THROW(merge_reconstructions(m, ds, 1.5, rng), ConfigError);
}

TEST(Checkpoint, RoundTripPreservesOutputs) {
  const auto& t = trained();
  const Checkpoint ckpt = Checkpoint::deserialize(t.model.to_checkpoint().serialize());
  const Autoencoder back = Autoencoder::from_checkpoint(ckpt);
  const Tensor& img = t.val[0].pixels;
  const Tensor a = t.model.reconstruct(img), b = back.reconstruct(img);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  EXPECT_EQ(back.history.size(), t.model.history.size());
  EXPECT_EQ(back.best_epoch, t.model.best_epoch);
  EXPECT_THROW(Autoencoder::from_checkpoint(Checkpoint("dnn")), StateError);
}
