#include "cavenet/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cavenet/error.hpp"
#include "cavenet/probs.hpp"

namespace cavenet::synxrf {

// Recursive CART builder. Impurity is Gini for classification and the sum of
// squared deviations for regression; the best split maximizes the impurity
// decrease, first found wins on equal decrease.
class TreeBuilder {
 public:
  TreeBuilder(const LatentSet& x, std::span<const double> targets, std::size_t classes, const TreeConfig& cfg,
              Rng& rng)
      : x_(x), targets_(targets), classes_(classes), cfg_(cfg), rng_(rng) {}

  DecisionTree build(std::vector<std::size_t> rows) {
    if (rows.empty()) throw DataError("cannot fit a tree on zero samples");
    features_.resize(x_.dim);
    std::iota(features_.begin(), features_.end(), 0);
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  bool regression() const { return classes_ == 0; }

  std::vector<double> payload(const std::vector<std::size_t>& rows) const {
    if (regression()) {
      double s = 0.0;
      for (std::size_t r : rows) s += targets_[r];
      // Stored at float precision so a serialized tree predicts identically.
      return {static_cast<float>(s / static_cast<double>(rows.size()))};
    }
    std::vector<double> counts(classes_, 0.0);
    for (std::size_t r : rows) counts[static_cast<std::size_t>(x_.labels[r])] += 1.0;
    return counts;
  }

  // Impurity scaled by sample count (Gini * n, or SSE).
  struct Stats {
    std::vector<double> counts;
    double sum = 0.0, sum2 = 0.0;
    double n = 0.0;
  };
  void push(Stats& s, std::size_t r, double sign) const {
    s.n += sign;
    if (regression()) {
      s.sum += sign * targets_[r];
      s.sum2 += sign * targets_[r] * targets_[r];
    } else {
      s.counts[static_cast<std::size_t>(x_.labels[r])] += sign;
    }
  }
  double impurity(const Stats& s) const {
    if (s.n <= 0.0) return 0.0;
    if (regression()) return std::max(0.0, s.sum2 - s.sum * s.sum / s.n);
    double sq = 0.0;
    for (double c : s.counts) sq += c * c;
    return s.n - sq / s.n;
  }
  Stats empty_stats() const { return Stats{std::vector<double>(classes_, 0.0), 0.0, 0.0, 0.0}; }

  int grow(std::vector<std::size_t>& rows, std::size_t depth) {
    const int id = static_cast<int>(tree_.nodes_.size());
    tree_.nodes_.push_back(TreeNode{-1, 0.0f, -1, -1, payload(rows)});

    Stats all = empty_stats();
    for (std::size_t r : rows) push(all, r, 1.0);
    const double parent = impurity(all);
    const bool depth_ok = cfg_.max_depth == 0 || depth < cfg_.max_depth;
    const std::size_t min_leaf = std::max<std::size_t>(1, cfg_.min_samples_leaf);
    if (!depth_ok || parent <= 1e-12 || rows.size() < 2 * min_leaf) return id;

    // Partial Fisher-Yates draw of the candidate features.
    const std::size_t tries = cfg_.max_features == 0 ? x_.dim : std::min(cfg_.max_features, x_.dim);
    for (std::size_t i = 0; i < tries; ++i) {
      const std::size_t j = i + rng_.below(x_.dim - i);
      std::swap(features_[i], features_[j]);
    }
    std::vector<std::size_t> candidates(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(tries));

    double best_gain = -1.0;
    int best_feature = -1;
    float best_threshold = 0.0f;
    std::vector<std::size_t> sorted = rows;
    for (std::size_t f : candidates) {
      std::stable_sort(sorted.begin(), sorted.end(),
                       [&](std::size_t a, std::size_t b) { return x_.row(a)[f] < x_.row(b)[f]; });
      Stats left = empty_stats();
      Stats right = all;
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        push(left, sorted[i], 1.0);
        push(right, sorted[i], -1.0);
        const float lo = x_.row(sorted[i])[f], hi = x_.row(sorted[i + 1])[f];
        if (lo == hi || i + 1 < min_leaf || sorted.size() - i - 1 < min_leaf) continue;
        const double gain = parent - impurity(left) - impurity(right);
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          float mid = static_cast<float>((static_cast<double>(lo) + hi) / 2.0);
          if (!(mid >= lo && mid < hi)) mid = lo;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> lrows, rrows;
    for (std::size_t r : rows) {
      (x_.row(r)[static_cast<std::size_t>(best_feature)] <= best_threshold ? lrows : rrows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(lrows, depth + 1);
    const int r = grow(rrows, depth + 1);
    TreeNode& node = tree_.nodes_[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return id;
  }

  const LatentSet& x_;
  std::span<const double> targets_;
  std::size_t classes_;
  TreeConfig cfg_;
  Rng& rng_;
  std::vector<std::size_t> features_;
  DecisionTree tree_;
};

DecisionTree DecisionTree::fit_classifier(const LatentSet& x, const std::vector<std::size_t>& rows,
                                          std::size_t classes, const TreeConfig& config, Rng& rng) {
  if (classes == 0) throw ConfigError("classifier tree needs at least one class");
  return TreeBuilder(x, {}, classes, config, rng).build(rows);
}

DecisionTree DecisionTree::fit_regressor(const LatentSet& x, const std::vector<std::size_t>& rows,
                                         std::span<const double> targets, const TreeConfig& config, Rng& rng) {
  if (targets.size() != x.rows()) throw ShapeError("one regression target per sample required");
  return TreeBuilder(x, targets, 0, config, rng).build(rows);
}

const TreeNode& DecisionTree::leaf_for(std::span<const float> x) const {
  if (nodes_.empty()) throw StateError("tree is not fitted");
  std::size_t i = 0;
  while (!nodes_[i].leaf()) {
    const TreeNode& n = nodes_[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes_[i];
}

int DecisionTree::predict_class(std::span<const float> x) const {
  return static_cast<int>(argmax(leaf_for(x).value));
}

std::size_t DecisionTree::depth() const {
  std::vector<std::size_t> d(nodes_.size(), 0);
  std::size_t best = 0;
  // Children always have larger indices than their parent.
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes_[i].leaf()) {
      d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
    }
  }
  return best;
}

std::vector<float> DecisionTree::to_table(std::size_t value_width) const {
  std::vector<float> t;
  t.reserve(nodes_.size() * (4 + value_width));
  for (const auto& n : nodes_) {
    t.insert(t.end(), {static_cast<float>(n.feature), n.threshold, static_cast<float>(n.left),
                       static_cast<float>(n.right)});
    for (std::size_t k = 0; k < value_width; ++k) t.push_back(k < n.value.size() ? static_cast<float>(n.value[k]) : 0.0f);
  }
  return t;
}

DecisionTree DecisionTree::from_table(std::span<const float> table, std::size_t value_width) {
  const std::size_t width = 4 + value_width;
  if (table.empty() || table.size() % width != 0) throw DataError("malformed tree node table");
  DecisionTree tree;
  const std::size_t count = table.size() / width;
  for (std::size_t i = 0; i < count; ++i) {
    const float* row = table.data() + i * width;
    TreeNode n{static_cast<int>(row[0]), row[1], static_cast<int>(row[2]), static_cast<int>(row[3]),
               std::vector<double>(row + 4, row + width)};
    if (!n.leaf() && (n.left <= static_cast<int>(i) || n.right <= static_cast<int>(i) ||
                      n.left >= static_cast<int>(count) || n.right >= static_cast<int>(count))) {
      throw DataError("tree node table has an invalid child index");
    }
    tree.nodes_.push_back(std::move(n));
  }
  return tree;
}

}  // namespace cavenet::synxrf
