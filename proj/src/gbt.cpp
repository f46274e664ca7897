#include <cmath>
#include <numeric>

#include "cavenet/error.hpp"
#include "cavenet/synxrf.hpp"

namespace cavenet::synxrf {
namespace {

// log(1 + exp(-f)), stable for large |f|.
double softplus_neg(double f) { return f > 0 ? std::log1p(std::exp(-f)) : -f + std::log1p(std::exp(f)); }

}  // namespace

std::vector<double> GbtModel::scores(std::span<const float> x, std::size_t rounds) const {
  std::vector<double> s(classes, 0.0);
  const std::size_t used = std::min(rounds, stages.size());
  for (std::size_t r = 0; r < used; ++r) {
    for (std::size_t c = 0; c < classes; ++c) s[c] += lr * stages[r][c].predict_value(x);
  }
  return s;
}

GbtModel gbt_fit(const LatentSet& x, std::size_t classes, const GbtConfig& config, std::uint64_t seed) {
  if (config.rounds < 1) throw ConfigError("gbt rounds must be >= 1");
  if (!(config.lr > 0.0)) throw ConfigError("gbt learning rate must be positive");
  if (x.rows() == 0) throw DataError("gbt training set is empty");
  for (int l : x.labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) throw DataError("gbt label out of range");
  }
  const std::size_t n = x.rows();
  GbtModel model;
  model.classes = classes;
  model.lr = config.lr;
  TreeConfig tc;
  tc.max_depth = config.max_depth;
  tc.min_samples_leaf = config.min_samples_leaf;

  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  std::vector<double> f(n * classes, 0.0), residual(n);
  Rng rng(seed);
  for (std::size_t r = 0; r < config.rounds; ++r) {
    std::vector<DecisionTree> stage;
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        const double y = x.labels[i] == static_cast<int>(c) ? 1.0 : 0.0;
        residual[i] = y - 1.0 / (1.0 + std::exp(-f[i * classes + c]));
      }
      stage.push_back(DecisionTree::fit_regressor(x, rows, residual, tc, rng));
      for (std::size_t i = 0; i < n; ++i) f[i * classes + c] += config.lr * stage.back().predict_value(x.row(i));
    }
    model.stages.push_back(std::move(stage));
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < classes; ++c) {
        const double fc = f[i * classes + c];
        loss += x.labels[i] == static_cast<int>(c) ? softplus_neg(fc) : softplus_neg(-fc);
      }
    }
    model.loss_history.push_back(loss / static_cast<double>(n));
  }
  return model;
}

ProbMatrix gbt_predict_proba(const GbtModel& model, const LatentSet& x) {
  if (!model.trained()) throw StateError("gbt is not trained");
  ProbMatrix out(x.rows(), model.classes);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto s = model.scores(x.row(i));
    const double top = *std::max_element(s.begin(), s.end());
    double total = 0.0;
    auto row = out.row(i);
    for (std::size_t c = 0; c < s.size(); ++c) total += row[c] = std::exp(s[c] - top);
    for (auto& p : row) p /= total;
  }
  return out;
}

}  // namespace cavenet::synxrf
