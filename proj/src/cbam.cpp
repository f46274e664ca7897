#include "cavenet/cbam.hpp"

#include <future>
#include <numeric>

#include "cavenet/checkpoint.hpp"
#include "cavenet/error.hpp"
#include "cavenet/ops.hpp"
#include "cavenet/optim.hpp"

namespace cavenet::cbam {
namespace {

constexpr const char* kKind = "cbam";

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const std::size_t comma = s.find(',', pos);
    out.push_back(std::stoul(s.substr(pos, comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

SpatialAttention SpatialAttention::make(std::size_t kernel, Rng& rng) {
  if (kernel % 2 == 0) throw ConfigError("spatial attention kernel must be odd");
  return SpatialAttention{nn::he_normal({1, 2, kernel, kernel}, 2 * kernel * kernel, rng),
                          nn::trainable_zeros({1, 1, 1}), kernel / 2};
}

Tensor SpatialAttention::map(const Tensor& f) const {
  if (f.rank() != 3 || f.dim(0) == 0) throw ShapeError("spatial attention expects [C,H,W] with C > 0");
  const Tensor pooled[] = {channel_pool(f, PoolKind::max), channel_pool(f, PoolKind::avg)};
  return sigmoid(add(conv2d(concat(pooled), weight, 1, padding), bias));
}

Tensor SpatialAttention::operator()(const Tensor& f) const { return mul(map(f), f); }

void SpatialAttention::collect(nn::ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

ChannelAttention ChannelAttention::make(std::size_t channels, std::size_t reduction, Rng& rng) {
  if (reduction == 0) throw ConfigError("reduction ratio must be positive");
  const std::size_t hidden = std::max<std::size_t>(1, channels / reduction);
  return ChannelAttention{nn::Linear::make(channels, hidden, rng), nn::Linear::make(hidden, channels, rng)};
}

Tensor ChannelAttention::map(const Tensor& f) const {
  const std::size_t c = f.dim(0);
  const Tensor pooled = global_pool(f, PoolKind::avg).reshape({1, c});
  return sigmoid(expand(relu(reduce(pooled)))).reshape({c, 1, 1});
}

void ChannelAttention::collect(nn::ParamList& out, const std::string& prefix) const {
  reduce.collect(out, prefix + ".reduce");
  expand.collect(out, prefix + ".expand");
}

Cbam Cbam::make(std::size_t channels, std::size_t reduction, std::size_t kernel, Rng& rng) {
  SpatialAttention s = SpatialAttention::make(kernel, rng);
  ChannelAttention c = ChannelAttention::make(channels, reduction, rng);
  return Cbam{std::move(s), std::move(c)};
}

Tensor Cbam::refine(const Tensor& f) const {
  const Tensor g = spatial(f);
  return mul(channel.map(g), g);
}

void Cbam::collect(nn::ParamList& out, const std::string& prefix) const {
  spatial.collect(out, prefix + ".spatial");
  channel.collect(out, prefix + ".channel");
}

CbamConfig CbamConfig::resnet18(std::size_t side, std::size_t classes) {
  CbamConfig c;
  c.layout = Layout::resnet18;
  c.side = side;
  c.classes = classes;
  c.widths = {64, 128, 256, 512};
  c.blocks_per_stage = 2;
  c.reduction = 16;
  return c;
}

void CbamConfig::validate() const {
  if (widths.empty()) throw ConfigError("cbam widths must be nonempty");
  if (blocks_per_stage < 1) throw ConfigError("blocks_per_stage must be >= 1");
  if (classes < 2) throw ConfigError("cbam needs at least 2 classes");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (spatial_kernel % 2 == 0) throw ConfigError("spatial kernel must be odd");
  // desk: every stage halves; resnet18: stem and pool halve, first stage keeps.
  const std::size_t halvings = layout == Layout::desk ? widths.size() : widths.size() + 1;
  const std::size_t factor = std::size_t{1} << halvings;
  if (side < factor || side % factor != 0) {
    throw ConfigError("side " + std::to_string(side) + " must be a multiple of " + std::to_string(factor));
  }
}

CbamModel::CbamModel(const CbamConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const auto& w = config_.widths;
  const bool desk = config_.layout == Layout::desk;
  stem_ = desk ? nn::Conv2d::make(3, w[0], 3, 1, 1, rng) : nn::Conv2d::make(3, w[0], 4, 2, 1, rng);
  stem_pool_ = !desk;
  std::size_t in = w[0];
  for (std::size_t s = 0; s < w.size(); ++s) {
    for (std::size_t b = 0; b < config_.blocks_per_stage; ++b) {
      const bool down = b == 0 && (desk || s > 0);
      blocks_.push_back(nn::ResidualBlock::make(in, w[s], down, rng));
      in = w[s];
    }
  }
  cbam_ = Cbam::make(w.back(), config_.reduction, config_.spatial_kernel, rng);
  head_ = nn::Linear::make(w.back(), config_.classes, rng);
}

Tensor CbamModel::features(const Tensor& image) const {
  const std::size_t s = config_.side;
  if (image.shape() != Shape{3, s, s}) {
    throw ShapeError("cbam expects [3," + std::to_string(s) + "," + std::to_string(s) + "], got " +
                     shape_str(image.shape()));
  }
  Tensor h = relu(stem_(image));
  if (stem_pool_) h = pool2d(h, PoolKind::max, 2, 2);
  for (const auto& b : blocks_) h = b(h);
  return h;
}

Tensor CbamModel::forward(const Tensor& image) const {
  Tensor f = features(image);
  if (config_.use_attention) f = cbam_.refine(f);
  const std::size_t c = f.dim(0);
  const Tensor pooled = global_pool(f, PoolKind::avg).reshape({1, c});
  return softmax(head_(pooled), 1).reshape({config_.classes});
}

Tensor CbamModel::attention_map(const Tensor& image) const { return cbam_.spatial.map(features(image)); }

ProbMatrix CbamModel::predict_proba(const LabeledDataset& ds, std::size_t threads) const {
  ProbMatrix out(ds.size(), config_.classes);
  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Tensor p = forward(ds[i].pixels);
      std::copy(p.data().begin(), p.data().end(), out.row(i).begin());
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
  return out;
}

nn::ParamList CbamModel::parameters() const {
  nn::ParamList p;
  stem_.collect(p, "stem");
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(p, "block" + std::to_string(i));
  if (config_.use_attention) cbam_.collect(p, "cbam");
  head_.collect(p, "head");
  return p;
}

Checkpoint CbamModel::to_checkpoint() const {
  Checkpoint ckpt(kKind);
  ckpt.set_meta("layout", config_.layout == Layout::desk ? "desk" : "resnet18");
  ckpt.set_meta("side", std::to_string(config_.side));
  ckpt.set_meta("classes", std::to_string(config_.classes));
  ckpt.set_meta("widths", join(config_.widths));
  ckpt.set_meta("blocks_per_stage", std::to_string(config_.blocks_per_stage));
  ckpt.set_meta("reduction", std::to_string(config_.reduction));
  ckpt.set_meta("spatial_kernel", std::to_string(config_.spatial_kernel));
  ckpt.set_meta("use_attention", config_.use_attention ? "1" : "0");
  ckpt.set_meta("best_epoch", std::to_string(best_epoch));
  nn::write_params(ckpt, parameters());
  std::vector<float> hist;
  for (const auto& e : history) {
    hist.insert(hist.end(), {static_cast<float>(e.epoch), static_cast<float>(e.train_loss),
                             static_cast<float>(e.val_accuracy)});
  }
  ckpt.add("history", {history.size(), 3}, std::move(hist));
  return ckpt;
}

CbamModel CbamModel::from_checkpoint(const Checkpoint& ckpt) {
  ckpt.expect_kind(kKind);
  CbamConfig cfg;
  const std::string layout = ckpt.meta("layout");
  if (layout != "desk" && layout != "resnet18") throw DataError("unknown cbam layout '" + layout + "'");
  cfg.layout = layout == "desk" ? Layout::desk : Layout::resnet18;
  cfg.side = std::stoul(ckpt.meta("side"));
  cfg.classes = std::stoul(ckpt.meta("classes"));
  cfg.widths = split_sizes(ckpt.meta("widths"));
  cfg.blocks_per_stage = std::stoul(ckpt.meta("blocks_per_stage"));
  cfg.reduction = std::stoul(ckpt.meta("reduction"));
  cfg.spatial_kernel = std::stoul(ckpt.meta("spatial_kernel"));
  cfg.use_attention = ckpt.meta("use_attention") == "1";
  CbamModel m(cfg, 0);
  nn::read_params(ckpt, m.parameters());
  m.best_epoch = std::stoul(ckpt.meta("best_epoch"));
  const auto& h = ckpt.block("history").values;
  for (std::size_t i = 0; i + 2 < h.size(); i += 3) {
    m.history.push_back({static_cast<std::size_t>(h[i]), h[i + 1], h[i + 2]});
  }
  return m;
}

double accuracy(const ProbMatrix& probs, const LabeledDataset& ds) {
  if (ds.empty()) return 0.0;
  const auto pred = probs.predictions();
  std::size_t hit = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) hit += pred[i] == ds[i].label;
  return static_cast<double>(hit) / static_cast<double>(ds.size());
}

CbamModel train_cbam(const CbamConfig& config, const LabeledDataset& train, const LabeledDataset& val,
                     std::uint64_t seed) {
  config.validate();
  if (train.empty() || val.empty()) throw DataError("cbam training needs nonempty train and validation sets");
  for (const auto* ds : {&train, &val}) {
    for (const auto& r : ds->records()) {
      if (r.label < 0 || static_cast<std::size_t>(r.label) >= config.classes) {
        throw DataError("label " + std::to_string(r.label) + " outside the configured " +
                        std::to_string(config.classes) + " classes");
      }
    }
  }
  Rng rng(seed);
  CbamModel model(config, rng.next());
  nn::ParamList params = model.parameters();
  std::vector<Tensor> ps = nn::tensors(params);
  AdamConfig adam;
  adam.lr = config.lr;
  AdamState state;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  double best = -1.0;
  nn::Snapshot best_params = nn::snapshot(params);
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t end = std::min(order.size(), b + config.batch_size);
      const float weight = 1.0f / static_cast<float>(end - b);
      zero_grads(ps);
      for (std::size_t i = b; i < end; ++i) {
        const auto& r = train[order[i]];
        Tape tape;
        TapeScope scope(tape);
        const int label = r.label;
        const Tensor loss = cross_entropy(model.forward(r.pixels), std::span<const int>(&label, 1));
        loss_sum += loss.item();
        tape.backward(scale(loss, weight));
      }
      adam_step(ps, state, adam);
    }
    const double acc = accuracy(model.predict_proba(val), val);
    model.history.push_back({epoch, loss_sum / static_cast<double>(train.size()), acc});
    if (acc > best) {
      best = acc;
      best_params = nn::snapshot(params);
      model.best_epoch = epoch;
      stale = 0;
    } else if (config.patience > 0 && ++stale >= config.patience) {
      break;
    }
  }
  nn::restore(params, best_params);
  zero_grads(ps);
  return model;
}

}  // namespace cavenet::cbam
