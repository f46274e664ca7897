#include <cmath>
#include <future>

#include "cavenet/error.hpp"
#include "cavenet/synxrf.hpp"

namespace cavenet::synxrf {

std::vector<std::size_t> RandomForestModel::votes(std::span<const float> x) const {
  std::vector<std::size_t> v(classes, 0);
  for (const auto& t : trees) ++v[static_cast<std::size_t>(t.predict_class(x))];
  return v;
}

RandomForestModel rf_fit(const LatentSet& x, std::size_t classes, const RfConfig& config, std::uint64_t seed,
                         std::size_t threads) {
  if (config.trees < 1) throw ConfigError("random forest needs at least one tree");
  if (x.rows() == 0) throw DataError("random forest training set is empty");
  for (int l : x.labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) throw DataError("forest label out of range");
  }
  TreeConfig tc;
  tc.max_depth = config.max_depth;
  tc.min_samples_leaf = config.min_samples_leaf;
  tc.max_features = config.max_features != 0
                        ? config.max_features
                        : std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(std::sqrt(x.dim))));

  RandomForestModel model;
  model.classes = classes;
  model.trees.resize(config.trees);
  const Rng root(seed);
  auto grow = [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      Rng rng = root.fork(t);
      std::vector<std::size_t> rows(x.rows());
      for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = config.bootstrap ? rng.below(x.rows()) : i;
      model.trees[t] = DecisionTree::fit_classifier(x, rows, classes, tc, rng);
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, config.trees));
  if (workers == 1) {
    grow(0, config.trees);
  } else {
    const std::size_t chunk = (config.trees + workers - 1) / workers;
    std::vector<std::future<void>> jobs;
    for (std::size_t b = 0; b < config.trees; b += chunk) {
      jobs.push_back(std::async(std::launch::async, grow, b, std::min(config.trees, b + chunk)));
    }
    for (auto& j : jobs) j.get();
  }
  return model;
}

ProbMatrix rf_predict_proba(const RandomForestModel& model, const LatentSet& x) {
  if (!model.trained()) throw StateError("random forest is not trained");
  ProbMatrix out(x.rows(), model.classes);
  const double n = static_cast<double>(model.trees.size());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto v = model.votes(x.row(i));
    for (std::size_t c = 0; c < model.classes; ++c) out.row(i)[c] = static_cast<double>(v[c]) / n;
  }
  return out;
}

}  // namespace cavenet::synxrf
