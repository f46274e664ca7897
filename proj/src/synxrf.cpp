#include "cavenet/synxrf.hpp"

#include <future>

#include "cavenet/checkpoint.hpp"
#include "cavenet/csv.hpp"
#include "cavenet/error.hpp"

namespace cavenet::synxrf {
namespace {

constexpr const char* kKind = "synxrf";

std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }
std::vector<double> to_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }

void add_tree(Checkpoint& ckpt, const std::string& name, const DecisionTree& tree, std::size_t width) {
  ckpt.add(name, {tree.nodes().size(), 4 + width}, tree.to_table(width));
}

DecisionTree read_tree(const Checkpoint& ckpt, const std::string& name, std::size_t width) {
  return DecisionTree::from_table(ckpt.block(name).values, width);
}

}  // namespace

VoteMode parse_vote_mode(const std::string& s) {
  if (s == "soft") return VoteMode::soft;
  if (s == "hard") return VoteMode::hard;
  throw ConfigError("vote mode must be 'soft' or 'hard', got '" + s + "'");
}

const char* vote_mode_name(VoteMode mode) { return mode == VoteMode::soft ? "soft" : "hard"; }

std::array<ProbMatrix, 4> SynXrfModel::member_proba(const LatentSet& x) const {
  if (!svm.trained() || !rf.trained() || !knn.trained() || !gbt.trained()) {
    throw StateError("every Syn-XRF member must be trained before prediction");
  }
  return {svm_predict_proba(svm, x), rf_predict_proba(rf, x), knn_predict_proba(knn, x), gbt_predict_proba(gbt, x)};
}

ProbMatrix SynXrfModel::predict_proba(const LatentSet& x) const {
  const auto members = member_proba(x);
  return vote == VoteMode::soft ? soft_vote(members) : hard_vote(members);
}

SynXrfModel synxrf_fit(const LatentSet& x, std::size_t classes, const SynXrfConfig& config, std::uint64_t seed,
                       std::size_t threads) {
  const Rng root(seed);
  SynXrfModel m;
  m.classes = classes;
  m.vote = config.vote;
  auto svm = [&] { m.svm = svm_fit(x, classes, config.svm, root.fork(1).next()); };
  auto rf = [&] { m.rf = rf_fit(x, classes, config.rf, root.fork(2).next(), threads > 4 ? threads - 3 : 1); };
  auto knn = [&] { m.knn = knn_fit(x, classes, config.knn_k); };
  auto gbt = [&] { m.gbt = gbt_fit(x, classes, config.gbt, root.fork(4).next()); };
  if (threads <= 1) {
    svm();
    rf();
    knn();
    gbt();
  } else {
    auto a = std::async(std::launch::async, svm);
    auto b = std::async(std::launch::async, rf);
    auto d = std::async(std::launch::async, gbt);
    knn();
    a.get();
    b.get();
    d.get();
  }
  return m;
}

Checkpoint SynXrfModel::to_checkpoint() const {
  if (!svm.trained() || !rf.trained() || !knn.trained() || !gbt.trained()) {
    throw StateError("cannot save an incompletely trained Syn-XRF model");
  }
  Checkpoint ckpt(kKind);
  ckpt.set_meta("classes", std::to_string(classes));
  ckpt.set_meta("vote", vote_mode_name(vote));
  ckpt.set_meta("svm.temperature", format_number(svm.temperature));
  ckpt.set_meta("knn.k", std::to_string(knn.k));
  ckpt.set_meta("gbt.lr", format_number(gbt.lr));
  ckpt.set_meta("rf.trees", std::to_string(rf.trees.size()));
  ckpt.set_meta("gbt.rounds", std::to_string(gbt.stages.size()));

  ckpt.add("svm.weights", {svm.classes, svm.dim}, to_float(svm.weights));
  ckpt.add("svm.bias", {svm.classes}, to_float(svm.bias));
  ckpt.add("svm.mean", {svm.dim}, to_float(svm.mean));
  ckpt.add("svm.inv_scale", {svm.dim}, to_float(svm.inv_scale));
  for (std::size_t t = 0; t < rf.trees.size(); ++t) add_tree(ckpt, "rf.tree" + std::to_string(t), rf.trees[t], classes);
  ckpt.add("knn.store", {knn.store.rows(), knn.store.dim}, knn.store.values);
  ckpt.add("knn.labels", {knn.store.rows()}, std::vector<float>(knn.store.labels.begin(), knn.store.labels.end()));
  for (std::size_t r = 0; r < gbt.stages.size(); ++r) {
    for (std::size_t c = 0; c < classes; ++c) {
      add_tree(ckpt, "gbt.r" + std::to_string(r) + ".c" + std::to_string(c), gbt.stages[r][c], 1);
    }
  }
  ckpt.add("gbt.loss_history", {gbt.loss_history.size()}, to_float(gbt.loss_history));
  return ckpt;
}

SynXrfModel SynXrfModel::from_checkpoint(const Checkpoint& ckpt) {
  ckpt.expect_kind(kKind);
  SynXrfModel m;
  m.classes = std::stoul(ckpt.meta("classes"));
  m.vote = parse_vote_mode(ckpt.meta("vote"));

  const auto& w = ckpt.block("svm.weights");
  if (w.shape.size() != 2) throw DataError("svm.weights must be a matrix");
  m.svm.classes = w.shape[0];
  m.svm.dim = w.shape[1];
  m.svm.weights = to_double(w.values);
  m.svm.bias = to_double(ckpt.block("svm.bias").values);
  m.svm.mean = to_double(ckpt.block("svm.mean").values);
  m.svm.inv_scale = to_double(ckpt.block("svm.inv_scale").values);
  m.svm.temperature = parse_number(ckpt.meta("svm.temperature"));

  m.rf.classes = m.classes;
  const std::size_t trees = std::stoul(ckpt.meta("rf.trees"));
  for (std::size_t t = 0; t < trees; ++t) m.rf.trees.push_back(read_tree(ckpt, "rf.tree" + std::to_string(t), m.classes));

  const auto& store = ckpt.block("knn.store");
  if (store.shape.size() != 2) throw DataError("knn.store must be a matrix");
  m.knn.classes = m.classes;
  m.knn.k = std::stoul(ckpt.meta("knn.k"));
  m.knn.store = LatentSet(store.shape[0], store.shape[1]);
  m.knn.store.values = store.values;
  const auto& labels = ckpt.block("knn.labels").values;
  for (std::size_t i = 0; i < labels.size() && i < m.knn.store.rows(); ++i) {
    m.knn.store.labels[i] = static_cast<int>(labels[i]);
    m.knn.store.ids[i] = std::to_string(i);
  }

  m.gbt.classes = m.classes;
  m.gbt.lr = parse_number(ckpt.meta("gbt.lr"));
  const std::size_t rounds = std::stoul(ckpt.meta("gbt.rounds"));
  for (std::size_t r = 0; r < rounds; ++r) {
    std::vector<DecisionTree> stage;
    for (std::size_t c = 0; c < m.classes; ++c) {
      stage.push_back(read_tree(ckpt, "gbt.r" + std::to_string(r) + ".c" + std::to_string(c), 1));
    }
    m.gbt.stages.push_back(std::move(stage));
  }
  m.gbt.loss_history = to_double(ckpt.block("gbt.loss_history").values);
  return m;
}

}  // namespace cavenet::synxrf
