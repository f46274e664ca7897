#include "run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cavenet/error.hpp"

namespace cavenet::cli {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

const KeyDoc* find_key(const std::string& key) {
  for (const auto& k : config_keys()) {
    if (key == k.key) return &k;
  }
  return nullptr;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& text) {
  std::size_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError(key + ": expected a nonnegative integer, got '" + text + "'");
  }
  return v;
}

double parse_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
  return v;
}

}  // namespace

const std::vector<KeyDoc>& config_keys() {
  static const std::vector<KeyDoc> keys = {
      {"seed", "", "run seed; required by train-* commands"},
      {"out", "cavenet_out", "output directory (default overridden by $CAVENET_OUT)"},
      {"threads", "1", "worker threads for data-parallel stages"},
      {"exec", "parallel", "member evaluation in fuse/predict: parallel | sequential"},
      // data
      {"data_dir", "", "gen-data: ingest <dir>/<ClassName>/*.ppm instead of generating"},
      {"classes", "10", "gen-data: number of synthetic classes"},
      {"per_class", "100", "gen-data: images per class, one value or a comma list"},
      {"side", "32", "gen-data: image side in pixels"},
      {"val_fraction", "0.2", "balance: stratified validation fraction"},
      {"floor", "200", "balance: minimum per-class count after augmentation"},
      {"merge_fraction", "0.05", "train-ae: fraction of reconstructions appended to the training set"},
      {"latent_protocol", "train", "train-dnn/train-synxrf: fit on train latents, or 'validation' latents"},
      // autoencoder
      {"ae_widths", "8,16,32", "autoencoder stage widths (one stride-2 stage each)"},
      {"ae_blocks", "1", "autoencoder residual blocks per stage"},
      {"ae_latent_dim", "64", "latent width"},
      {"ae_epochs", "40", "autoencoder maximum epochs"},
      {"ae_patience", "5", "autoencoder early-stopping patience"},
      {"ae_lr", "0.003", "autoencoder Adam learning rate"},
      {"ae_batch", "16", "autoencoder batch size"},
      // dnn
      {"dnn_hidden", "512,256,128", "DNN hidden widths"},
      {"dnn_dropout", "0.3", "DNN dropout rate"},
      {"dnn_dropout_layers", "2", "hidden layers followed by dropout"},
      {"dnn_epochs", "50", "DNN epochs"},
      {"dnn_batch", "32", "DNN batch size"},
      {"dnn_lr", "0.001", "DNN Adam learning rate"},
      {"dnn_folds", "5", "DNN cross-validation folds"},
      // syn-xrf
      {"svm_lambda", "0.001", "SVM regularization"},
      {"svm_epochs", "40", "SVM passes"},
      {"svm_temperature", "1", "SVM softmax temperature"},
      {"rf_trees", "100", "random forest trees"},
      {"rf_max_features", "0", "features tried per split (0 = sqrt(dim))"},
      {"rf_max_depth", "0", "tree depth limit (0 = none)"},
      {"rf_min_leaf", "1", "minimum samples per leaf"},
      {"knn_k", "7", "KNN neighbours"},
      {"gbt_rounds", "50", "boosting rounds"},
      {"gbt_lr", "0.1", "boosting shrinkage"},
      {"gbt_depth", "3", "boosted tree depth"},
      {"vote", "soft", "Syn-XRF vote: soft | hard"},
      // cbam
      {"cbam_layout", "desk", "CBAM backbone: desk | resnet18"},
      {"cbam_widths", "8,16,32", "desk backbone stage widths"},
      {"cbam_blocks", "2", "residual blocks per stage"},
      {"cbam_reduction", "4", "channel-attention reduction ratio"},
      {"cbam_kernel", "7", "spatial-attention kernel size"},
      {"cbam_attention", "true", "false disables the attention module"},
      {"cbam_epochs", "30", "CBAM epochs"},
      {"cbam_batch", "16", "CBAM batch size"},
      {"cbam_lr", "0.001", "CBAM Adam learning rate"},
      {"cbam_patience", "0", "epochs without validation gain before stopping (0 = off)"},
      // fusion / io
      {"fusion_weights", "1,1,1", "cbam,dnn,synxrf soft-vote weights"},
      {"input", "", "predict: manifest CSV, image file or flat image directory (default: validation manifest)"},
      {"predictions", "", "evaluate: comma list of prediction CSVs (default: probs_*.csv from fuse)"},
      {"labels", "", "evaluate: manifest with true labels (default: validation manifest)"},
  };
  return keys;
}

RunConfig RunConfig::parse(std::string_view text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const std::string where = origin + ":" + std::to_string(n);
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const std::size_t eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    const std::string key = trim(body.substr(0, eq));
    if (cfg.is_set(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
    if (!find_key(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    cfg.values_[key] = trim(body.substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

void RunConfig::set(const std::string& key, std::string value) {
  if (!find_key(key)) throw ConfigError("unknown key '" + key + "'");
  values_[key] = std::move(value);
}

std::string RunConfig::get(const std::string& key) const {
  const KeyDoc* doc = find_key(key);
  if (!doc) throw ConfigError("unknown key '" + key + "'");
  if (auto it = values_.find(key); it != values_.end()) return it->second;
  if (key == "out") {
    if (const char* env = std::getenv("CAVENET_OUT"); env && *env) return env;
  }
  return doc->fallback;
}

std::size_t RunConfig::get_size(const std::string& key) const { return parse_size(key, get(key)); }

double RunConfig::get_double(const std::string& key) const { return parse_real(key, get(key)); }

bool RunConfig::get_bool(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> RunConfig::get_sizes(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(get(key))) out.push_back(parse_size(key, item));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::vector<double> RunConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(get(key))) out.push_back(parse_real(key, item));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::uint64_t RunConfig::require_seed() const {
  const std::string v = get("seed");
  if (v.empty()) throw ConfigError("seed is required for training commands (--seed N)");
  std::uint64_t s = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), s);
  if (ec != std::errc() || end != v.data() + v.size()) throw ConfigError("seed: expected an unsigned integer");
  return s;
}

std::uint64_t RunConfig::seed_or(std::uint64_t fallback) const {
  return get("seed").empty() ? fallback : require_seed();
}

std::string RunConfig::canonical(const std::vector<std::string>& keys) const {
  std::string out;
  for (const auto& k : keys) out += k + "=" + get(k) + "\n";
  return out;
}

}  // namespace cavenet::cli
