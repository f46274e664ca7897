#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cavenet/augment.hpp"
#include "cavenet/checkpoint.hpp"
#include "cavenet/csv.hpp"
#include "cavenet/data.hpp"
#include "cavenet/error.hpp"
#include "cavenet/fusion.hpp"
#include "cavenet/latent.hpp"
#include "cavenet/metrics.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;

namespace cavenet::cli {

namespace {

class MissingArtifact : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "missing"; }
};

// Stable artifact locations under the output directory.
struct Paths {
  fs::path root;
  fs::path dataset_manifest() const { return root / "dataset" / "manifest.csv"; }
  fs::path dataset_info() const { return root / "dataset" / "dataset.cfg"; }
  fs::path train_manifest() const { return root / "train" / "manifest.csv"; }
  fs::path val_manifest() const { return root / "val" / "manifest.csv"; }
  fs::path merged_manifest() const { return root / "merged" / "manifest.csv"; }
  fs::path ae_ckpt() const { return root / "autoencoder.ckpt"; }
  fs::path dnn_ckpt() const { return root / "dnn.ckpt"; }
  fs::path synxrf_ckpt() const { return root / "synxrf.ckpt"; }
  fs::path cbam_ckpt() const { return root / "cbam.ckpt"; }
  fs::path latents() const { return root / "latents.csv"; }
  fs::path latents_val() const { return root / "latents_val.csv"; }
  fs::path probs(const std::string& model) const { return root / ("probs_" + model + ".csv"); }
  fs::path report() const { return root / "report.csv"; }
};

struct Context {
  RunConfig cfg;
  Paths paths;
  std::ostream& out;
};

void require(const fs::path& path, const char* producer) {
  if (!fs::exists(path)) {
    throw MissingArtifact(path.string() + " not found; run `cavenet " + std::string(producer) + "` first");
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void stamp(Checkpoint& ckpt, const RunConfig& cfg, const std::vector<std::string>& keys, std::size_t epochs) {
  ckpt.set_meta("seed", cfg.get("seed"));
  ckpt.set_meta("config_hash", hex64(fnv1a64(cfg.canonical(keys))));
  ckpt.set_meta("epochs", std::to_string(epochs));
}

void reset_dir(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * v);
  return buf;
}

std::string counts_text(const std::vector<std::size_t>& counts) {
  std::string s = "(";
  for (std::size_t i = 0; i < counts.size(); ++i) s += (i ? "," : "") + std::to_string(counts[i]);
  return s + ")";
}

// --- dataset helpers ---------------------------------------------------------

std::size_t dataset_classes(const Context& ctx) {
  require(ctx.paths.dataset_info(), "gen-data");
  return RunConfig::load(ctx.paths.dataset_info().string()).get_size("classes");
}

data::LabeledDataset load_split(const Context& ctx, const fs::path& manifest, const char* producer) {
  require(manifest, producer);
  return data::load_dataset(manifest, dataset_classes(ctx));
}

std::size_t image_side(const data::LabeledDataset& ds) {
  if (ds.empty()) throw DataError("dataset is empty");
  return ds.image_shape()[1];
}

// --- model configuration from keys -----------------------------------------

const std::vector<std::string> kAeKeys = {"ae_widths", "ae_blocks", "ae_latent_dim", "ae_epochs",
                                          "ae_patience", "ae_lr", "ae_batch"};
const std::vector<std::string> kDnnKeys = {"dnn_hidden", "dnn_dropout", "dnn_dropout_layers", "dnn_epochs",
                                           "dnn_batch", "dnn_lr", "dnn_folds", "latent_protocol"};
const std::vector<std::string> kSynKeys = {"svm_lambda", "svm_epochs", "svm_temperature", "rf_trees",
                                           "rf_max_features", "rf_max_depth", "rf_min_leaf", "knn_k",
                                           "gbt_rounds", "gbt_lr", "gbt_depth", "vote", "latent_protocol"};
const std::vector<std::string> kCbamKeys = {"cbam_layout", "cbam_widths", "cbam_blocks", "cbam_reduction",
                                            "cbam_kernel", "cbam_attention", "cbam_epochs", "cbam_batch",
                                            "cbam_lr", "cbam_patience"};

ae::AutoencoderConfig ae_config(const RunConfig& c, std::size_t side) {
  ae::AutoencoderConfig a;
  a.side = side;
  a.widths = c.get_sizes("ae_widths");
  a.blocks_per_stage = c.get_size("ae_blocks");
  a.latent_dim = c.get_size("ae_latent_dim");
  a.max_epochs = c.get_size("ae_epochs");
  a.patience = c.get_size("ae_patience");
  a.lr = c.get_double("ae_lr");
  a.batch_size = c.get_size("ae_batch");
  a.validate();
  return a;
}

dnn::DnnConfig dnn_config(const RunConfig& c, std::size_t classes) {
  dnn::DnnConfig d;
  d.hidden = c.get_sizes("dnn_hidden");
  d.dropout = static_cast<float>(c.get_double("dnn_dropout"));
  d.dropout_layers = c.get_size("dnn_dropout_layers");
  d.classes = classes;
  d.epochs = c.get_size("dnn_epochs");
  d.batch_size = c.get_size("dnn_batch");
  d.lr = c.get_double("dnn_lr");
  d.folds = c.get_size("dnn_folds");
  d.validate();
  return d;
}

synxrf::SynXrfConfig synxrf_config(const RunConfig& c) {
  synxrf::SynXrfConfig s;
  s.svm.lambda = c.get_double("svm_lambda");
  s.svm.epochs = c.get_size("svm_epochs");
  s.svm.temperature = c.get_double("svm_temperature");
  s.rf.trees = c.get_size("rf_trees");
  s.rf.max_features = c.get_size("rf_max_features");
  s.rf.max_depth = c.get_size("rf_max_depth");
  s.rf.min_samples_leaf = c.get_size("rf_min_leaf");
  s.knn_k = c.get_size("knn_k");
  s.gbt.rounds = c.get_size("gbt_rounds");
  s.gbt.lr = c.get_double("gbt_lr");
  s.gbt.max_depth = c.get_size("gbt_depth");
  s.vote = synxrf::parse_vote_mode(c.get("vote"));
  return s;
}

cbam::CbamConfig cbam_config(const RunConfig& c, std::size_t side, std::size_t classes) {
  const std::string layout = c.get("cbam_layout");
  cbam::CbamConfig b;
  if (layout == "resnet18") {
    b = cbam::CbamConfig::resnet18(side, classes);
  } else if (layout == "desk") {
    b.side = side;
    b.classes = classes;
    b.widths = c.get_sizes("cbam_widths");
    b.blocks_per_stage = c.get_size("cbam_blocks");
    b.reduction = c.get_size("cbam_reduction");
  } else {
    throw ConfigError("cbam_layout: expected desk or resnet18, got '" + layout + "'");
  }
  b.spatial_kernel = c.get_size("cbam_kernel");
  b.use_attention = c.get_bool("cbam_attention");
  b.epochs = c.get_size("cbam_epochs");
  b.batch_size = c.get_size("cbam_batch");
  b.lr = c.get_double("cbam_lr");
  b.patience = c.get_size("cbam_patience");
  b.validate();
  return b;
}

fusion::Execution execution(const RunConfig& c) {
  const std::string e = c.get("exec");
  if (e == "parallel") return fusion::Execution::parallel;
  if (e == "sequential") return fusion::Execution::sequential;
  throw ConfigError("exec: expected parallel or sequential, got '" + e + "'");
}

// Latents the latent-space members are fitted on.
LatentSet fit_latents(const Context& ctx) {
  const std::string protocol = ctx.cfg.get("latent_protocol");
  if (protocol == "train") {
    require(ctx.paths.latents(), "extract");
    return read_latents(ctx.paths.latents());
  }
  if (protocol == "validation") {
    require(ctx.paths.latents_val(), "extract");
    ctx.out << "note: fitting on validation latents; validation scores are optimistic\n";
    return read_latents(ctx.paths.latents_val());
  }
  throw ConfigError("latent_protocol: expected train or validation, got '" + protocol + "'");
}

fusion::CaveNet load_net(const Context& ctx) {
  const Paths& p = ctx.paths;
  require(p.ae_ckpt(), "train-ae");
  require(p.dnn_ckpt(), "train-dnn");
  require(p.synxrf_ckpt(), "train-synxrf");
  require(p.cbam_ckpt(), "train-cbam");
  fusion::CaveNet net;
  net.autoencoder = std::make_shared<const ae::Autoencoder>(ae::Autoencoder::from_checkpoint(Checkpoint::load(p.ae_ckpt())));
  net.dnn = std::make_shared<const dnn::DnnModel>(dnn::DnnModel::from_checkpoint(Checkpoint::load(p.dnn_ckpt())));
  net.synxrf = std::make_shared<const synxrf::SynXrfModel>(
      synxrf::SynXrfModel::from_checkpoint(Checkpoint::load(p.synxrf_ckpt())));
  net.cbam = std::make_shared<const cbam::CbamModel>(cbam::CbamModel::from_checkpoint(Checkpoint::load(p.cbam_ckpt())));
  const std::vector<double> w = ctx.cfg.get_doubles("fusion_weights");
  if (w.size() != 3) throw ConfigError("fusion_weights: expected three values (cbam,dnn,synxrf)");
  net.weights = {w[0], w[1], w[2]};
  net.validate();
  return net;
}

std::vector<std::string> ids_of(const data::LabeledDataset& ds) {
  std::vector<std::string> ids;
  ids.reserve(ds.size());
  for (const auto& r : ds.records()) ids.push_back(r.source_id);
  return ids;
}

// --- commands ----------------------------------------------------------------

void cmd_gen_data(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const std::size_t side = c.get_size("side");
  data::LabeledDataset ds;
  if (const std::string dir = c.get("data_dir"); !dir.empty()) {
    ds = data::ingest_directory(dir, side);
  } else {
    const std::size_t classes = c.get_size("classes");
    std::vector<std::size_t> per_class = c.get_sizes("per_class");
    if (per_class.size() == 1) per_class.assign(classes, per_class[0]);
    if (per_class.size() != classes) throw ConfigError("per_class: expected 1 or " + std::to_string(classes) + " values");
    ds = data::generate_synthetic(classes, per_class, side, c.seed_or(0));
  }
  reset_dir(ctx.paths.root / "dataset");
  data::save_dataset(ds, ctx.paths.dataset_manifest(), ctx.paths.root / "dataset" / "images");
  RunConfig info;
  info.set("classes", std::to_string(ds.num_classes()));
  info.set("side", std::to_string(side));
  {
    std::ofstream f(ctx.paths.dataset_info());
    if (!f) throw IoError("cannot write " + ctx.paths.dataset_info().string());
    f << info.canonical({"classes", "side"});
  }
  ctx.out << "gen-data: " << ds.size() << " images, counts " << counts_text(ds.class_counts()) << " -> "
          << ctx.paths.dataset_manifest().string() << "\n";
}

void cmd_balance(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const data::LabeledDataset ds = load_split(ctx, ctx.paths.dataset_manifest(), "gen-data");
  const std::uint64_t seed = c.seed_or(0);
  auto [train, val] = data::stratified_split(ds, c.get_double("val_fraction"), seed);
  const data::LabeledDataset balanced = data::balance_dataset(train, c.get_size("floor"), seed, c.get_size("threads"));
  reset_dir(ctx.paths.root / "train");
  reset_dir(ctx.paths.root / "val");
  data::save_dataset(balanced, ctx.paths.train_manifest(), ctx.paths.root / "train" / "images");
  data::save_dataset(val, ctx.paths.val_manifest(), ctx.paths.root / "val" / "images");
  ctx.out << "balance: train " << counts_text(train.class_counts()) << " -> " << counts_text(balanced.class_counts())
          << ", validation " << counts_text(val.class_counts()) << "\n";
}

void cmd_train_ae(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const std::uint64_t seed = c.require_seed();
  const data::LabeledDataset train = load_split(ctx, ctx.paths.train_manifest(), "balance");
  const data::LabeledDataset val = load_split(ctx, ctx.paths.val_manifest(), "balance");
  const ae::AutoencoderConfig cfg = ae_config(c, image_side(train));
  const ae::Autoencoder model =
      ae::train_autoencoder(cfg, train, val, fusion::stage_seed(seed, fusion::Stage::autoencoder));

  Checkpoint ckpt = model.to_checkpoint();
  stamp(ckpt, c, kAeKeys, model.history.size());
  ckpt.save(ctx.paths.ae_ckpt());

  CsvTable hist({"epoch", "train_mse", "val_mse"});
  for (const auto& h : model.history) {
    hist.add_row({std::to_string(h.epoch), format_number(h.train), format_number(h.val)});
  }
  hist.save(ctx.paths.root / "ae_history.csv");

  // Stream 5 is reserved for the merge draw; streams 1-4 seed the stages.
  Rng merge_rng = Rng(seed).fork(5);
  const data::LabeledDataset merged =
      ae::merge_reconstructions(model, train, c.get_double("merge_fraction"), merge_rng);
  reset_dir(ctx.paths.root / "merged");
  data::save_dataset(merged, ctx.paths.merged_manifest(), ctx.paths.root / "merged" / "images");

  ctx.out << "train-ae: best epoch " << model.best_epoch << " of " << model.history.size() << ", validation mse "
          << ae::reconstruction_mse(model, val) << " (mean-image baseline " << ae::mean_image_mse(val) << "), "
          << merged.size() - train.size() << " reconstructions merged\n";
}

void cmd_extract(Context& ctx) {
  const std::size_t threads = ctx.cfg.get_size("threads");
  require(ctx.paths.ae_ckpt(), "train-ae");
  const ae::Autoencoder model = ae::Autoencoder::from_checkpoint(Checkpoint::load(ctx.paths.ae_ckpt()));
  const data::LabeledDataset train = load_split(ctx, ctx.paths.merged_manifest(), "train-ae");
  const data::LabeledDataset val = load_split(ctx, ctx.paths.val_manifest(), "balance");
  const LatentSet zt = ae::extract_latents(model, train, threads);
  const LatentSet zv = ae::extract_latents(model, val, threads);
  write_latents_csv(ctx.paths.latents(), zt);
  write_latents_csv(ctx.paths.latents_val(), zv);
  ctx.out << "extract: " << zt.rows() << " training and " << zv.rows() << " validation latents of width " << zt.dim
          << "\n";
}

void cmd_train_dnn(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const std::uint64_t seed = c.require_seed();
  const LatentSet z = fit_latents(ctx);
  const dnn::DnnConfig cfg = dnn_config(c, dataset_classes(ctx));
  const dnn::DnnModel model =
      dnn::train_dnn(cfg, z, fusion::stage_seed(seed, fusion::Stage::dnn), c.get_size("threads"));

  Checkpoint ckpt = model.to_checkpoint();
  stamp(ckpt, c, kDnnKeys, cfg.epochs);
  ckpt.save(ctx.paths.dnn_ckpt());

  CsvTable cv({"fold", "accuracy"});
  double mean = 0.0;
  for (std::size_t k = 0; k < model.fold_accuracies.size(); ++k) {
    cv.add_row({std::to_string(k), format_number(model.fold_accuracies[k])});
    mean += model.fold_accuracies[k];
  }
  cv.save(ctx.paths.root / "dnn_cv.csv");
  CsvTable hist({"epoch", "train_loss"});
  for (std::size_t e = 0; e < model.loss_history.size(); ++e) {
    hist.add_row({std::to_string(e + 1), format_number(model.loss_history[e])});
  }
  hist.save(ctx.paths.root / "dnn_history.csv");

  ctx.out << "train-dnn: cross-validation accuracy "
          << pct(model.fold_accuracies.empty() ? 0.0 : mean / double(model.fold_accuracies.size()));
  if (fs::exists(ctx.paths.latents_val())) {
    const LatentSet zv = read_latents(ctx.paths.latents_val());
    ctx.out << ", validation " << pct(dnn::accuracy(model.predict_proba(zv), zv.labels));
  }
  ctx.out << "\n";
}

void cmd_train_synxrf(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const std::uint64_t seed = c.require_seed();
  const LatentSet z = fit_latents(ctx);
  const synxrf::SynXrfConfig cfg = synxrf_config(c);
  const synxrf::SynXrfModel model = synxrf::synxrf_fit(z, dataset_classes(ctx), cfg,
                                                       fusion::stage_seed(seed, fusion::Stage::synxrf),
                                                       c.get_size("threads"));
  Checkpoint ckpt = model.to_checkpoint();
  stamp(ckpt, c, kSynKeys, cfg.gbt.rounds);
  ckpt.save(ctx.paths.synxrf_ckpt());

  ctx.out << "train-synxrf: fitted on " << z.rows() << " latents";
  if (fs::exists(ctx.paths.latents_val())) {
    const LatentSet zv = read_latents(ctx.paths.latents_val());
    const auto members = model.member_proba(zv);
    for (std::size_t m = 0; m < members.size(); ++m) {
      ctx.out << ", " << synxrf::kMemberNames[m] << " " << pct(dnn::accuracy(members[m], zv.labels));
    }
    ctx.out << ", ensemble " << pct(dnn::accuracy(model.predict_proba(zv), zv.labels));
  }
  ctx.out << "\n";
}

void cmd_train_cbam(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const std::uint64_t seed = c.require_seed();
  const data::LabeledDataset train = load_split(ctx, ctx.paths.merged_manifest(), "train-ae");
  const data::LabeledDataset val = load_split(ctx, ctx.paths.val_manifest(), "balance");
  const cbam::CbamConfig cfg = cbam_config(c, image_side(train), dataset_classes(ctx));
  const cbam::CbamModel model = cbam::train_cbam(cfg, train, val, fusion::stage_seed(seed, fusion::Stage::cbam));

  Checkpoint ckpt = model.to_checkpoint();
  stamp(ckpt, c, kCbamKeys, model.history.size());
  ckpt.save(ctx.paths.cbam_ckpt());

  CsvTable hist({"epoch", "train_loss", "val_accuracy"});
  for (const auto& h : model.history) {
    hist.add_row({std::to_string(h.epoch), format_number(h.train_loss), format_number(h.val_accuracy)});
  }
  hist.save(ctx.paths.root / "cbam_history.csv");
  const double best = model.best_epoch == 0 ? 0.0 : model.history[model.best_epoch - 1].val_accuracy;
  ctx.out << "train-cbam: best epoch " << model.best_epoch << " of " << model.history.size()
          << ", validation accuracy " << pct(best) << "\n";
}

void cmd_fuse(Context& ctx) {
  const fusion::CaveNet net = load_net(ctx);
  const data::LabeledDataset val = load_split(ctx, ctx.paths.val_manifest(), "balance");
  const fusion::Prediction pred = fusion::cavenet_predict(net, val, execution(ctx.cfg), ctx.cfg.get_size("threads"));
  const std::vector<std::string> ids = ids_of(val);
  const std::vector<int> truth = val.labels();
  for (std::size_t m = 0; m < 3; ++m) {
    fusion::write_predictions(ctx.paths.probs(fusion::kMemberNames[m]), ids, pred.members[m]);
  }
  fusion::write_predictions(ctx.paths.probs(fusion::kFusedName), ids, pred.fused);
  ctx.out << "fuse:";
  for (std::size_t m = 0; m < 3; ++m) {
    ctx.out << " " << fusion::kMemberNames[m] << " " << pct(dnn::accuracy(pred.members[m], truth)) << ",";
  }
  ctx.out << " " << fusion::kFusedName << " " << pct(dnn::accuracy(pred.fused, truth)) << "\n";
}

bool is_image_file(const fs::path& p) {
  const std::string ext = p.extension().string();
  return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

data::LabeledDataset load_inputs(const Context& ctx, const std::string& input, std::size_t side) {
  if (input.empty()) return load_split(ctx, ctx.paths.val_manifest(), "balance");
  const fs::path p(input);
  if (!fs::exists(p)) throw IoError(input + " does not exist");
  if (p.extension() == ".csv") return data::load_dataset(p, dataset_classes(ctx));
  std::vector<fs::path> files;
  if (fs::is_directory(p)) {
    for (const auto& entry : fs::directory_iterator(p)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(p);
  }
  if (files.empty()) throw DataError(input + " contains no .ppm/.pgm/.pnm images");
  data::LabeledDataset ds(dataset_classes(ctx));
  for (const auto& f : files) {
    ds.add({data::center_crop_resize(data::read_pnm(f), side), 0, data::Provenance::original, f.generic_string()});
  }
  return ds;
}

void cmd_predict(Context& ctx) {
  const fusion::CaveNet net = load_net(ctx);
  const data::LabeledDataset ds = load_inputs(ctx, ctx.cfg.get("input"), net.autoencoder->config().side);
  const fusion::Prediction pred = fusion::cavenet_predict(net, ds, execution(ctx.cfg), ctx.cfg.get_size("threads"));
  const fs::path path = ctx.paths.root / "predictions.csv";
  fusion::write_predictions(path, ids_of(ds), pred);
  ctx.out << "predict: " << ds.size() << " images -> " << path.string() << "\n";
}

std::string model_name(const fs::path& file) {
  std::string stem = file.stem().string();
  if (stem.rfind("probs_", 0) == 0) stem = stem.substr(6);
  return stem;
}

void cmd_evaluate(Context& ctx) {
  std::vector<fs::path> files;
  if (const std::string list = ctx.cfg.get("predictions"); !list.empty()) {
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) files.emplace_back(item);
    }
  } else {
    for (const char* m : {"cbam", "dnn", "synxrf", "cavenet"}) {
      if (fs::exists(ctx.paths.probs(m))) files.push_back(ctx.paths.probs(m));
    }
    if (files.empty()) throw MissingArtifact("no probs_*.csv in " + ctx.paths.root.string() + "; run `cavenet fuse` first");
  }
  fs::path labels_path = ctx.cfg.get("labels");
  if (labels_path.empty()) labels_path = ctx.paths.val_manifest();
  require(labels_path, "balance");
  std::map<std::string, int> truth_by_id;
  for (const auto& row : data::read_manifest(labels_path)) truth_by_id[row.path] = row.label;

  fs::create_directories(ctx.paths.root);
  std::vector<metrics::MetricsReport> reports;
  for (const auto& file : files) {
    if (!fs::exists(file)) throw MissingArtifact(file.string() + " not found");
    const fusion::PredictionRows rows = fusion::read_predictions(file);
    std::vector<int> truth;
    truth.reserve(rows.ids.size());
    for (const auto& id : rows.ids) {
      const auto it = truth_by_id.find(id);
      if (it == truth_by_id.end()) throw DataError("id '" + id + "' from " + file.string() + " has no label");
      truth.push_back(it->second);
    }
    const std::string name = model_name(file);
    metrics::MetricsReport r = metrics::evaluate(name, rows.probs, truth);
    metrics::export_heatmap(r.cm, ctx.paths.root / ("heatmap_" + name + ".ppm"), ctx.paths.root / ("cm_" + name + ".csv"));
    metrics::per_class_table(r).save(ctx.paths.root / ("metrics_" + name + ".csv"));
    ctx.out << "evaluate: " << name << " accuracy " << pct(r.accuracy) << ", balanced " << pct(r.balanced_accuracy)
            << ", macro AUC " << format_number(r.auc.macro) << "\n";
    reports.push_back(std::move(r));
  }
  metrics::report_table(reports).save(ctx.paths.report());
}

void cmd_report(Context& ctx) {
  require(ctx.paths.report(), "evaluate");
  const CsvTable t = CsvTable::load(ctx.paths.report());
  t.require_columns({"model", "avg_acc", "avg_specificity", "avg_sensitivity", "avg_f1", "avg_precision"});
  std::vector<std::size_t> width(t.cols());
  for (std::size_t c = 0; c < t.cols(); ++c) {
    width[c] = t.header()[c].size();
    for (std::size_t r = 0; r < t.rows(); ++r) {
      std::string cell = t.row(r)[c];
      if (c > 0) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", t.number(r, c));
        cell = buf;
      }
      width[c] = std::max(width[c], cell.size());
    }
  }
  auto line = [&](const std::function<std::string(std::size_t)>& cell) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      ctx.out << (c ? "  " : "") << (c == 0 ? std::left : std::right) << std::setw(int(width[c])) << cell(c);
    }
    ctx.out << "\n";
  };
  line([&](std::size_t c) { return t.header()[c]; });
  for (std::size_t r = 0; r < t.rows(); ++r) {
    line([&](std::size_t c) {
      if (c == 0) return t.row(r)[0];
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", t.number(r, c));
      return std::string(buf);
    });
  }
}

struct Command {
  const char* name;
  const char* help;
  void (*fn)(Context&);
};

const Command kCommands[] = {
    {"gen-data", "generate the synthetic corpus (or ingest data_dir) into dataset/", cmd_gen_data},
    {"balance", "split off validation and augment the training split up to the floor", cmd_balance},
    {"train-ae", "train the autoencoder and merge reconstructions into merged/", cmd_train_ae},
    {"extract", "write training and validation latents", cmd_extract},
    {"train-dnn", "cross-validate and fit the latent DNN", cmd_train_dnn},
    {"train-synxrf", "fit the SVM/RF/KNN/GBT ensemble on latents", cmd_train_synxrf},
    {"train-cbam", "train the attention backbone on images", cmd_train_cbam},
    {"fuse", "soft-vote the three members on the validation split", cmd_fuse},
    {"predict", "fused predictions for new images", cmd_predict},
    {"evaluate", "metrics, confusion matrices and heatmaps for prediction files", cmd_evaluate},
    {"report", "print the evaluation summary table", cmd_report},
};

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Capsule-endoscopy classification pipeline", "cavenet"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "key=value configuration file");
  const auto& keys = config_keys();
  std::vector<std::string> values(keys.size());
  std::vector<CLI::Option*> opts;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    std::string help = keys[i].help;
    if (*keys[i].fallback) help += " [" + std::string(keys[i].fallback) + "]";
    opts.push_back(app.add_option(std::string("--") + keys[i].key, values[i], help));
  }
  std::vector<CLI::App*> subs;
  for (const auto& c : kCommands) subs.push_back(app.add_subcommand(c.name, c.help));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    Context ctx{config_path.empty() ? RunConfig{} : RunConfig::load(config_path), Paths{}, out};
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (opts[i]->count() > 0) ctx.cfg.set(keys[i].key, values[i]);
    }
    ctx.paths.root = ctx.cfg.get("out");
    fs::create_directories(ctx.paths.root);
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (subs[i]->parsed()) kCommands[i].fn(ctx);
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
  } catch (const fs::filesystem_error& e) {
    err << "error: io: " << one_line(e.what()) << "\n";
  } catch (const std::exception& e) {
    err << "error: internal: " << one_line(e.what()) << "\n";
  }
  return 1;
}

}  // namespace cavenet::cli
