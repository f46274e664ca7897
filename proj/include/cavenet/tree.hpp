#pragma once

// CART decision tree over dense float features, shared by the random forest
// (classification, Gini) and gradient boosting (regression, squared error).
// Samples go left when x[feature] <= threshold.

#include <cstdint>
#include <span>
#include <vector>

#include "cavenet/latent.hpp"
#include "cavenet/rng.hpp"

namespace cavenet::synxrf {

struct TreeConfig {
  std::size_t max_depth = 0;         // 0 = unlimited
  std::size_t min_samples_leaf = 1;
  std::size_t max_features = 0;      // features tried per split; 0 = all
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  float threshold = 0.0f;
  int left = -1;
  int right = -1;
  // Leaf payload: class counts (classification) or {mean target} (regression).
  std::vector<double> value;

  bool leaf() const { return feature < 0; }
};

class DecisionTree {
 public:
  // `rows` selects (with repetition) the training samples.
  static DecisionTree fit_classifier(const LatentSet& x, const std::vector<std::size_t>& rows,
                                     std::size_t classes, const TreeConfig& config, Rng& rng);
  static DecisionTree fit_regressor(const LatentSet& x, const std::vector<std::size_t>& rows,
                                    std::span<const double> targets, const TreeConfig& config, Rng& rng);

  const TreeNode& leaf_for(std::span<const float> x) const;
  // Regression output.
  double predict_value(std::span<const float> x) const { return leaf_for(x).value[0]; }
  // Majority class of the leaf; ties go to the lowest index.
  int predict_class(std::span<const float> x) const;

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::size_t depth() const;

  // Node table: one row per node, [feature, threshold, left, right, value...].
  std::vector<float> to_table(std::size_t value_width) const;
  static DecisionTree from_table(std::span<const float> table, std::size_t value_width);

 private:
  std::vector<TreeNode> nodes_;
  friend class TreeBuilder;
};

}  // namespace cavenet::synxrf
