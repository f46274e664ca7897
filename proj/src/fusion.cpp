#include "cavenet/fusion.hpp"

#include <cmath>
#include <future>
#include <utility>

#include "cavenet/csv.hpp"
#include "cavenet/rng.hpp"

namespace cavenet::fusion {

namespace {

template <typename Fn>
auto as_member(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const MemberError&) {
    throw;
  } catch (const Error& e) {
    throw MemberError(name, e);
  }
}

// Runs `fn` on another thread when `parallel`, otherwise defers it to get().
template <typename Fn>
auto launch(bool parallel, Fn&& fn) {
  return std::async(parallel ? std::launch::async : std::launch::deferred, std::forward<Fn>(fn));
}

void check_images(const CaveNet& net, const data::LabeledDataset& images) {
  if (images.empty()) throw DataError("no images to predict");
  const std::size_t side = net.autoencoder->config().side;
  if (images.image_shape() != Shape{3, side, side}) {
    throw ShapeError("images are " + shape_str(images.image_shape()) + " but the models expect [3," +
                     std::to_string(side) + "," + std::to_string(side) + "]");
  }
}

}  // namespace

MemberError::MemberError(std::string member, const Error& cause)
    : Error(member + ": " + cause.what()), member_(std::move(member)), kind_(cause.kind()) {}

void CaveNet::validate() const {
  if (!autoencoder) throw StateError("autoencoder is missing");
  if (!cbam || !cbam->trained()) throw StateError("member 'cbam' is not trained");
  if (!dnn || dnn->input_dim() == 0) throw StateError("member 'dnn' is not trained");
  if (!synxrf || synxrf->classes == 0) throw StateError("member 'synxrf' is not trained");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("fusion weights must be finite and nonnegative");
    total += w;
  }
  if (!(total > 0.0)) throw ConfigError("at least one fusion weight must be positive");

  const std::size_t latent = autoencoder->config().latent_dim;
  if (dnn->input_dim() != latent) {
    throw ShapeError("dnn expects " + std::to_string(dnn->input_dim()) + " latent features, encoder gives " +
                     std::to_string(latent));
  }
  if (synxrf->svm.dim != latent || synxrf->knn.store.dim != latent) {
    throw ShapeError("synxrf latent width does not match the encoder");
  }
  if (cbam->config().side != autoencoder->config().side) {
    throw ShapeError("cbam and autoencoder disagree on image side");
  }
  const std::size_t c = cbam->config().classes;
  if (dnn->config().classes != c || synxrf->classes != c) throw ShapeError("members disagree on class count");
}

std::size_t CaveNet::classes() const { return cbam ? cbam->config().classes : 0; }

ProbMatrix fuse(const std::array<ProbMatrix, 3>& members, const std::array<double, 3>& weights) {
  return soft_vote(members, weights);
}

Prediction cavenet_predict(const CaveNet& net, const data::LabeledDataset& images, Execution exec,
                           std::size_t threads) {
  net.validate();
  check_images(net, images);
  const bool parallel = exec == Execution::parallel;

  auto cbam_rows = launch(parallel, [&] {
    return as_member(kMemberNames[0], [&] { return net.cbam->predict_proba(images, threads); });
  });
  const LatentSet z = as_member("autoencoder", [&] { return ae::extract_latents(*net.autoencoder, images, threads); });
  auto dnn_rows = launch(parallel, [&] { return as_member(kMemberNames[1], [&] { return net.dnn->predict_proba(z); }); });
  ProbMatrix syn_rows = as_member(kMemberNames[2], [&] { return net.synxrf->predict_proba(z); });

  Prediction out;
  out.members = {cbam_rows.get(), dnn_rows.get(), std::move(syn_rows)};
  out.fused = fuse(out.members, net.weights);
  out.labels = out.fused.predictions();
  return out;
}

std::uint64_t stage_seed(std::uint64_t seed, Stage stage) {
  return Rng(seed).fork(static_cast<std::uint64_t>(stage)).next();
}

TrainResult cavenet_train_all(const TrainConfig& config, const data::LabeledDataset& train,
                              const data::LabeledDataset& val, std::uint64_t seed) {
  if (train.empty() || val.empty()) throw DataError("training and validation sets must be non-empty");
  const std::size_t classes = train.num_classes();
  const std::size_t side = config.autoencoder.side;
  for (const auto* ds : {&train, &val}) {
    if (ds->image_shape() != Shape{3, side, side}) {
      throw ShapeError("images are " + shape_str(ds->image_shape()) + ", autoencoder side is " +
                       std::to_string(side));
    }
  }
  if (config.cbam.side != side) throw ConfigError("cbam side must equal the autoencoder side");

  dnn::DnnConfig dnn_cfg = config.dnn;
  dnn_cfg.classes = classes;
  cbam::CbamConfig cbam_cfg = config.cbam;
  cbam_cfg.classes = classes;

  TrainResult out;
  auto autoencoder = std::make_shared<const ae::Autoencoder>(as_member("autoencoder", [&] {
    return ae::train_autoencoder(config.autoencoder, train, val, stage_seed(seed, Stage::autoencoder));
  }));
  out.train_latents = ae::extract_latents(*autoencoder, train, config.threads);
  out.val_latents = ae::extract_latents(*autoencoder, val, config.threads);

  const bool parallel = config.exec == Execution::parallel;
  auto cbam_model = launch(parallel, [&] {
    return as_member(kMemberNames[0],
                     [&] { return cbam::train_cbam(cbam_cfg, train, val, stage_seed(seed, Stage::cbam)); });
  });
  auto dnn_model = launch(parallel, [&] {
    return as_member(kMemberNames[1], [&] {
      return dnn::train_dnn(dnn_cfg, out.train_latents, stage_seed(seed, Stage::dnn), config.threads);
    });
  });
  synxrf::SynXrfModel syn = as_member(kMemberNames[2], [&] {
    return synxrf::synxrf_fit(out.train_latents, classes, config.synxrf, stage_seed(seed, Stage::synxrf),
                              config.threads);
  });

  out.net.autoencoder = std::move(autoencoder);
  out.net.cbam = std::make_shared<const cbam::CbamModel>(cbam_model.get());
  out.net.dnn = std::make_shared<const dnn::DnnModel>(dnn_model.get());
  out.net.synxrf = std::make_shared<const synxrf::SynXrfModel>(std::move(syn));
  out.net.weights = config.weights;

  const Prediction pred = cavenet_predict(out.net, val, config.exec, config.threads);
  out.reports = evaluate_members(pred, val.labels());
  return out;
}

std::vector<metrics::MetricsReport> evaluate_members(const Prediction& pred, const std::vector<int>& truth) {
  std::vector<metrics::MetricsReport> reports;
  for (std::size_t m = 0; m < pred.members.size(); ++m) {
    reports.push_back(metrics::evaluate(kMemberNames[m], pred.members[m], truth));
  }
  reports.push_back(metrics::evaluate(kFusedName, pred.fused, truth));
  return reports;
}

void write_predictions(const std::filesystem::path& path, const std::vector<std::string>& ids,
                       const ProbMatrix& probs) {
  if (ids.size() != probs.rows()) throw DataError("one id per prediction row required");
  std::vector<std::string> header{"id", "predicted_class"};
  for (std::size_t c = 0; c < probs.classes; ++c) header.push_back("p" + std::to_string(c));
  CsvTable table(std::move(header));
  const std::vector<int> labels = probs.predictions();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::vector<std::string> row{ids[i], std::to_string(labels[i])};
    for (double p : probs.row(i)) row.push_back(format_number(p));
    table.add_row(std::move(row));
  }
  table.save(path);
}

void write_predictions(const std::filesystem::path& path, const std::vector<std::string>& ids,
                       const Prediction& pred) {
  write_predictions(path, ids, pred.fused);
}

PredictionRows read_predictions(const std::filesystem::path& path) {
  const CsvTable table = CsvTable::load(path);
  if (table.cols() < 3 || table.header()[0] != "id" || table.header()[1] != "predicted_class") {
    throw DataError(path.string() + " is not a predictions file");
  }
  const std::size_t classes = table.cols() - 2;
  for (std::size_t c = 0; c < classes; ++c) {
    if (table.header()[c + 2] != "p" + std::to_string(c)) throw DataError("unexpected column " + table.header()[c + 2]);
  }
  PredictionRows out;
  out.probs = ProbMatrix(table.rows(), classes);
  for (std::size_t i = 0; i < table.rows(); ++i) {
    out.ids.push_back(table.row(i)[0]);
    out.labels.push_back(static_cast<int>(table.number(i, 1)));
    for (std::size_t c = 0; c < classes; ++c) out.probs.row(i)[c] = table.number(i, c + 2);
  }
  return out;
}

}  // namespace cavenet::fusion
