#include "cavenet/dnn.hpp"

#include <cmath>
#include <future>
#include <numeric>

#include "cavenet/checkpoint.hpp"
#include "cavenet/csv.hpp"
#include "cavenet/data.hpp"
#include "cavenet/error.hpp"
#include "cavenet/ops.hpp"
#include "cavenet/optim.hpp"

namespace cavenet::dnn {
namespace {

constexpr const char* kKind = "dnn";

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

Tensor batch_tensor(const LatentSet& set, const std::vector<std::size_t>& idx, std::size_t begin,
                    std::size_t end, const std::vector<float>& mean, const std::vector<float>& inv) {
  const std::size_t d = set.dim;
  std::vector<float> v((end - begin) * d);
  for (std::size_t r = begin; r < end; ++r) {
    const auto row = set.row(idx[r]);
    for (std::size_t j = 0; j < d; ++j) v[(r - begin) * d + j] = (row[j] - mean[j]) * inv[j];
  }
  return Tensor({end - begin, d}, std::move(v));
}

}  // namespace

void DnnConfig::validate() const {
  if (classes < 2) throw ConfigError("dnn needs at least 2 classes");
  if (!(dropout >= 0.0f && dropout < 1.0f)) throw ConfigError("dropout must lie in [0, 1)");
  if (dropout_layers > hidden.size()) throw ConfigError("dropout_layers exceeds the hidden layer count");
  for (std::size_t h : hidden) {
    if (h == 0) throw ConfigError("hidden widths must be positive");
  }
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (folds < 2) throw ConfigError("folds must be >= 2");
}

DnnModel::DnnModel(const DnnConfig& config, std::size_t input_dim, std::uint64_t seed)
    : config_(config), input_dim_(input_dim), mean_(input_dim, 0.0f), inv_scale_(input_dim, 1.0f) {
  config_.validate();
  if (input_dim == 0) throw ConfigError("dnn input width must be positive");
  Rng rng(seed);
  std::size_t in = input_dim;
  for (std::size_t h : config_.hidden) {
    layers_.push_back(nn::Linear::make(in, h, rng));
    in = h;
  }
  layers_.push_back(nn::Linear::make(in, config_.classes, rng));
}

void DnnModel::fit_standardizer(const LatentSet& train) {
  if (train.dim != input_dim_) throw ShapeError("latent width does not match the dnn input");
  const double n = static_cast<double>(train.rows());
  for (std::size_t j = 0; j < input_dim_; ++j) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < train.rows(); ++i) {
      s += train.row(i)[j];
      s2 += static_cast<double>(train.row(i)[j]) * train.row(i)[j];
    }
    const double m = s / n;
    const double var = std::max(0.0, s2 / n - m * m);
    mean_[j] = static_cast<float>(m);
    inv_scale_[j] = static_cast<float>(1.0 / std::sqrt(var + 1e-8));
  }
}

Tensor DnnModel::forward(const Tensor& x, bool training, Rng& rng) const {
  if (x.rank() != 2 || x.dim(1) != input_dim_) {
    throw ShapeError("dnn expects [N," + std::to_string(input_dim_) + "], got " + shape_str(x.shape()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    h = relu(layers_[i](h));
    if (i < config_.dropout_layers) h = dropout(h, config_.dropout, training, rng);
  }
  return softmax(layers_.back()(h), 1);
}

Tensor DnnModel::standardize(const LatentSet& set) const {
  if (set.dim != input_dim_) {
    throw ShapeError("latent width " + std::to_string(set.dim) + " does not match dnn input " +
                     std::to_string(input_dim_));
  }
  std::vector<std::size_t> idx(set.rows());
  std::iota(idx.begin(), idx.end(), 0);
  return batch_tensor(set, idx, 0, idx.size(), mean_, inv_scale_);
}

ProbMatrix DnnModel::predict_proba(const LatentSet& set) const {
  ProbMatrix out(set.rows(), config_.classes);
  if (set.rows() == 0) return out;
  Rng unused(0);
  const Tensor p = forward(standardize(set), false, unused);
  std::copy(p.data().begin(), p.data().end(), out.values.begin());
  return out;
}

nn::ParamList DnnModel::parameters() const {
  nn::ParamList p;
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(p, "fc" + std::to_string(i));
  return p;
}

Checkpoint DnnModel::to_checkpoint() const {
  Checkpoint ckpt(kKind);
  ckpt.set_meta("input_dim", std::to_string(input_dim_));
  ckpt.set_meta("classes", std::to_string(config_.classes));
  ckpt.set_meta("hidden", join(config_.hidden));
  ckpt.set_meta("dropout", format_number(config_.dropout));
  ckpt.set_meta("dropout_layers", std::to_string(config_.dropout_layers));
  nn::write_params(ckpt, parameters());
  ckpt.add("input.mean", {input_dim_}, mean_);
  ckpt.add("input.inv_scale", {input_dim_}, inv_scale_);
  ckpt.add("cv.fold_accuracy", {fold_accuracies.size()},
           std::vector<float>(fold_accuracies.begin(), fold_accuracies.end()));
  ckpt.add("loss_history", {loss_history.size()}, std::vector<float>(loss_history.begin(), loss_history.end()));
  return ckpt;
}

DnnModel DnnModel::from_checkpoint(const Checkpoint& ckpt) {
  ckpt.expect_kind(kKind);
  DnnConfig cfg;
  cfg.classes = std::stoul(ckpt.meta("classes"));
  cfg.hidden = split_sizes(ckpt.meta("hidden"));
  cfg.dropout = std::stof(ckpt.meta("dropout"));
  cfg.dropout_layers = std::stoul(ckpt.meta("dropout_layers"));
  DnnModel m(cfg, std::stoul(ckpt.meta("input_dim")), 0);
  nn::read_params(ckpt, m.parameters());
  m.mean_ = ckpt.block("input.mean").values;
  m.inv_scale_ = ckpt.block("input.inv_scale").values;
  for (float v : ckpt.block("cv.fold_accuracy").values) m.fold_accuracies.push_back(v);
  for (float v : ckpt.block("loss_history").values) m.loss_history.push_back(v);
  return m;
}

std::vector<std::size_t> stratified_folds(const std::vector<int>& labels, std::size_t folds, Rng& rng) {
  if (labels.empty()) throw DataError("cannot fold an empty dataset");
  const auto classes = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end())) + 1;
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  std::vector<std::size_t> fold(labels.size(), 0);
  for (std::size_t c = 0; c < classes; ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    if (members.size() < folds) {
      throw DataError("class " + std::to_string(c) + " has " + std::to_string(members.size()) +
                      " samples, fewer than " + std::to_string(folds) + " folds; use fewer folds");
    }
    rng.shuffle(members);
    for (std::size_t k = 0; k < members.size(); ++k) fold[members[k]] = k % folds;
  }
  return fold;
}

double accuracy(const ProbMatrix& probs, const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  const auto pred = probs.predictions();
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

DnnModel fit_dnn(const DnnConfig& config, const LatentSet& train, std::uint64_t seed) {
  if (train.rows() == 0) throw DataError("dnn training set is empty");
  for (int l : train.labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= config.classes) {
      throw DataError("label " + std::to_string(l) + " outside [0, " + std::to_string(config.classes) + ")");
    }
  }
  Rng rng(seed);
  DnnModel model(config, train.dim, rng.next());
  model.fit_standardizer(train);
  const nn::ParamList params = model.parameters();
  std::vector<Tensor> ps = nn::tensors(params);
  AdamConfig adam;
  adam.lr = config.lr;
  AdamState state;

  std::vector<std::size_t> order(train.rows());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::size_t> all = order;
  const Tensor full = batch_tensor(train, all, 0, all.size(), model.mean_, model.inv_scale_);
  Rng dropout_rng = rng.fork(1);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      const std::size_t end = std::min(order.size(), b + config.batch_size);
      const Tensor x = batch_tensor(train, order, b, end, model.mean_, model.inv_scale_);
      std::vector<int> y(end - b);
      for (std::size_t i = b; i < end; ++i) y[i - b] = train.labels[order[i]];
      zero_grads(ps);
      Tape tape;
      {
        TapeScope scope(tape);
        tape.backward(cross_entropy(model.forward(x, true, dropout_rng), y));
      }
      adam_step(ps, state, adam);
    }
    model.loss_history.push_back(cross_entropy(model.forward(full, false, dropout_rng), train.labels).item());
  }
  zero_grads(ps);
  return model;
}

DnnModel train_dnn(const DnnConfig& config, const LatentSet& latents, std::uint64_t seed, std::size_t threads) {
  config.validate();
  Rng rng(seed);
  const auto fold = stratified_folds(latents.labels, config.folds, rng);
  std::vector<double> acc(config.folds, 0.0);
  auto run_fold = [&](std::size_t k) {
    std::vector<std::size_t> tr, va;
    for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == k ? va : tr).push_back(i);
    const LatentSet val = latents.subset(va);
    const DnnModel m = fit_dnn(config, latents.subset(tr), rng.fork(100 + k).next());
    acc[k] = accuracy(m.predict_proba(val), val.labels);
  };
  if (threads <= 1) {
    for (std::size_t k = 0; k < config.folds; ++k) run_fold(k);
  } else {
    std::vector<std::future<void>> jobs;
    for (std::size_t k = 0; k < config.folds; ++k) {
      jobs.push_back(std::async(std::launch::async, run_fold, k));
      if (jobs.size() >= threads) {
        for (auto& j : jobs) j.get();
        jobs.clear();
      }
    }
    for (auto& j : jobs) j.get();
  }
  DnnModel final_model = fit_dnn(config, latents, rng.fork(1).next());
  final_model.fold_accuracies = std::move(acc);
  return final_model;
}

}  // namespace cavenet::dnn
