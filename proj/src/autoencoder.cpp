#include "cavenet/autoencoder.hpp"

#include <algorithm>
#include <future>
#include <limits>
#include <numeric>
#include <sstream>

#include "cavenet/checkpoint.hpp"
#include "cavenet/error.hpp"
#include "cavenet/ops.hpp"
#include "cavenet/optim.hpp"

namespace cavenet::ae {
namespace {

constexpr const char* kKind = "autoencoder";

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) out.push_back(std::stoul(item));
  return out;
}

void check_image(const Tensor& image, std::size_t side) {
  if (image.shape() != Shape{3, side, side}) {
    throw ShapeError("autoencoder expects [3," + std::to_string(side) + "," + std::to_string(side) +
                     "], got " + shape_str(image.shape()));
  }
}

}  // namespace

void AutoencoderConfig::validate() const {
  if (widths.empty()) throw ConfigError("autoencoder widths must be nonempty");
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("early-stop patience must be >= 1");
  if (blocks_per_stage < 1) throw ConfigError("blocks_per_stage must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (min_delta < 0.0) throw ConfigError("min_delta must be >= 0");
  const std::size_t factor = std::size_t{1} << widths.size();
  if (side < factor || side % factor != 0) {
    throw ConfigError("side " + std::to_string(side) + " is not divisible by 2^" + std::to_string(widths.size()));
  }
}

std::size_t AutoencoderConfig::bottleneck_side() const { return side >> widths.size(); }

Autoencoder::Autoencoder(const AutoencoderConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const auto& w = config_.widths;
  stem_ = nn::Conv2d::make(3, w[0], 3, 1, 1, rng);
  std::size_t in = w[0];
  for (std::size_t out : w) {
    encoder_.push_back(nn::ResidualBlock::make(in, out, true, rng));
    for (std::size_t b = 1; b < config_.blocks_per_stage; ++b) {
      encoder_.push_back(nn::ResidualBlock::make(out, out, false, rng));
    }
    in = out;
  }
  const std::size_t b = config_.bottleneck_side();
  const std::size_t flat = w.back() * b * b;
  to_latent_ = nn::Linear::make(flat, config_.latent_dim, rng);
  from_latent_ = nn::Linear::make(config_.latent_dim, flat, rng);
  for (std::size_t i = w.size(); i-- > 0;) {
    const std::size_t out = i == 0 ? 3 : w[i - 1];
    decoder_.push_back(nn::ConvTranspose2d::make(w[i], out, 4, 2, 1, rng));
  }
}

Tensor Autoencoder::encode(const Tensor& image) const {
  check_image(image, config_.side);
  Tensor h = relu(stem_(image));
  for (const auto& block : encoder_) h = block(h);
  return to_latent_(h.reshape({1, h.numel()})).reshape({config_.latent_dim});
}

Tensor Autoencoder::decode(const Tensor& z) const {
  if (z.shape() != Shape{config_.latent_dim}) {
    throw ShapeError("decoder expects a latent of length " + std::to_string(config_.latent_dim) + ", got " +
                     shape_str(z.shape()));
  }
  const std::size_t b = config_.bottleneck_side();
  Tensor h = relu(from_latent_(z.reshape({1, config_.latent_dim}))).reshape({config_.widths.back(), b, b});
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    h = decoder_[i](h);
    h = i + 1 == decoder_.size() ? sigmoid(h) : relu(h);
  }
  return h;
}

nn::ParamList Autoencoder::parameters() const {
  nn::ParamList p;
  stem_.collect(p, "enc.stem");
  for (std::size_t i = 0; i < encoder_.size(); ++i) encoder_[i].collect(p, "enc.block" + std::to_string(i));
  to_latent_.collect(p, "enc.latent");
  from_latent_.collect(p, "dec.latent");
  for (std::size_t i = 0; i < decoder_.size(); ++i) decoder_[i].collect(p, "dec.up" + std::to_string(i));
  return p;
}

Checkpoint Autoencoder::to_checkpoint() const {
  Checkpoint ckpt(kKind);
  ckpt.set_meta("side", std::to_string(config_.side));
  ckpt.set_meta("widths", join(config_.widths));
  ckpt.set_meta("blocks_per_stage", std::to_string(config_.blocks_per_stage));
  ckpt.set_meta("latent_dim", std::to_string(config_.latent_dim));
  ckpt.set_meta("best_epoch", std::to_string(best_epoch));
  nn::write_params(ckpt, parameters());
  std::vector<float> hist;
  for (const auto& e : history) {
    hist.insert(hist.end(), {static_cast<float>(e.epoch), static_cast<float>(e.train), static_cast<float>(e.val)});
  }
  ckpt.add("history", {history.size(), 3}, std::move(hist));
  return ckpt;
}

Autoencoder Autoencoder::from_checkpoint(const Checkpoint& ckpt) {
  ckpt.expect_kind(kKind);
  AutoencoderConfig cfg;
  cfg.side = std::stoul(ckpt.meta("side"));
  cfg.widths = split_sizes(ckpt.meta("widths"));
  cfg.blocks_per_stage = std::stoul(ckpt.meta("blocks_per_stage"));
  cfg.latent_dim = std::stoul(ckpt.meta("latent_dim"));
  Autoencoder model(cfg, 0);
  nn::read_params(ckpt, model.parameters());
  model.best_epoch = std::stoul(ckpt.meta("best_epoch"));
  const auto& hist = ckpt.block("history");
  for (std::size_t i = 0; i + 2 < hist.values.size(); i += 3) {
    model.history.push_back({static_cast<std::size_t>(hist.values[i]), hist.values[i + 1], hist.values[i + 2]});
  }
  return model;
}

double reconstruction_mse(const Autoencoder& model, const LabeledDataset& ds) {
  if (ds.empty()) throw DataError("reconstruction MSE of an empty dataset");
  double total = 0.0;
  for (const auto& r : ds.records()) total += mse_loss(model.reconstruct(r.pixels), r.pixels).item();
  return total / static_cast<double>(ds.size());
}

double mean_image_mse(const LabeledDataset& ds) {
  if (ds.empty()) throw DataError("mean-image MSE of an empty dataset");
  const std::size_t n = ds[0].pixels.numel();
  std::vector<double> mean(n, 0.0);
  for (const auto& r : ds.records()) {
    for (std::size_t i = 0; i < n; ++i) mean[i] += r.pixels[i];
  }
  for (auto& m : mean) m /= static_cast<double>(ds.size());
  double total = 0.0;
  for (const auto& r : ds.records()) {
    for (std::size_t i = 0; i < n; ++i) total += (r.pixels[i] - mean[i]) * (r.pixels[i] - mean[i]);
  }
  return total / static_cast<double>(ds.size() * n);
}

Autoencoder train_autoencoder(const AutoencoderConfig& config, const LabeledDataset& train,
                              const LabeledDataset& val, std::uint64_t seed) {
  config.validate();
  if (train.empty() || val.empty()) throw DataError("autoencoder training needs nonempty train and validation sets");
  Rng rng(seed);
  Autoencoder model(config, rng.next());
  nn::ParamList params = model.parameters();
  std::vector<Tensor> ps = nn::tensors(params);
  AdamConfig adam;
  adam.lr = config.lr;
  AdamState state;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  nn::Snapshot best_params = nn::snapshot(params);
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double train_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t end = std::min(order.size(), b + config.batch_size);
      const float weight = 1.0f / static_cast<float>(end - b);
      zero_grads(ps);
      for (std::size_t i = b; i < end; ++i) {
        const Tensor& img = train[order[i]].pixels;
        Tape tape;
        TapeScope scope(tape);
        const Tensor loss = mse_loss(model.reconstruct(img), img);
        train_loss += loss.item();
        tape.backward(scale(loss, weight));
      }
      if (config.lr > 0.0) adam_step(ps, state, adam);
    }
    train_loss /= static_cast<double>(train.size());
    const double val_loss = reconstruction_mse(model, val);
    model.history.push_back({epoch, train_loss, val_loss});

    if (val_loss < best - config.min_delta) {
      best = val_loss;
      best_params = nn::snapshot(params);
      model.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  nn::restore(params, best_params);
  zero_grads(ps);
  return model;
}

LatentSet extract_latents(const Autoencoder& model, const LabeledDataset& ds, std::size_t threads) {
  const std::size_t dim = model.config().latent_dim;
  LatentSet out(ds.size(), dim);
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Tensor z = model.encode(ds[i].pixels);
      std::copy(z.data().begin(), z.data().end(), out.row(i).begin());
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, ds.size()));
  if (workers == 1) {
    run(0, ds.size());
  } else {
    const std::size_t chunk = (ds.size() + workers - 1) / workers;
    std::vector<std::future<void>> jobs;
    for (std::size_t b = 0; b < ds.size(); b += chunk) {
      jobs.push_back(std::async(std::launch::async, run, b, std::min(ds.size(), b + chunk)));
    }
    for (auto& j : jobs) j.get();
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.labels[i] = ds[i].label;
    out.ids[i] = ds[i].source_id;
  }
  return out;
}

LabeledDataset merge_reconstructions(const Autoencoder& model, const LabeledDataset& ds, double fraction,
                                     Rng& rng) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("merge fraction must lie in [0, 1]");
  const auto count = static_cast<std::size_t>(fraction * static_cast<double>(ds.size()));
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  idx.resize(count);
  LabeledDataset out(ds.num_classes());
  for (const auto& r : ds.records()) out.add(r);
  for (std::size_t i : idx) {
    const ImageRecord& src = ds[i];
    out.add({model.reconstruct(src.pixels), src.label, Provenance::reconstructed, src.source_id + "#rec"});
  }
  return out;
}

}  // namespace cavenet::ae
