#include <algorithm>
#include <numeric>

#include "cavenet/error.hpp"
#include "cavenet/kernels.hpp"
#include "cavenet/synxrf.hpp"

namespace cavenet::synxrf {

std::vector<std::size_t> KnnModel::neighbours(std::span<const float> x) const {
  if (x.size() != store.dim) throw ShapeError("knn query width mismatch");
  if (k < 1 || k > store.rows()) throw ConfigError("knn k must lie in [1, store size]");
  std::vector<std::pair<double, std::size_t>> d(store.rows());
  for (std::size_t i = 0; i < store.rows(); ++i) d[i] = {kernels::squared_distance(x, store.row(i)), i};
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = d[i].second;
  return out;
}

KnnModel knn_fit(const LatentSet& x, std::size_t classes, std::size_t k) {
  if (k < 1 || k > x.rows()) {
    throw ConfigError("knn k=" + std::to_string(k) + " exceeds the " + std::to_string(x.rows()) + " stored samples");
  }
  for (int l : x.labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) throw DataError("knn label out of range");
  }
  return KnnModel{classes, k, x};
}

ProbMatrix knn_predict_proba(const KnnModel& model, const LatentSet& x) {
  if (!model.trained()) throw StateError("knn is not fitted");
  ProbMatrix out(x.rows(), model.classes);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j : model.neighbours(x.row(i))) {
      out.row(i)[static_cast<std::size_t>(model.store.labels[j])] += 1.0;
    }
    for (auto& p : out.row(i)) p /= static_cast<double>(model.k);
  }
  return out;
}

}  // namespace cavenet::synxrf
