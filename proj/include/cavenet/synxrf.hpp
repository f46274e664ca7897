#pragma once

// Classical classifiers over latent vectors and their soft-vote ensemble.
// Every predict_proba returns one probability row per input row; ties in any
// argmax go to the lowest class index.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cavenet/latent.hpp"
#include "cavenet/probs.hpp"
#include "cavenet/tree.hpp"

namespace cavenet {
class Checkpoint;
}

namespace cavenet::synxrf {

// --- Linear SVM (one-vs-rest) ----------------------------------------------

struct SvmConfig {
  double lambda = 1e-3;
  std::size_t epochs = 40;
  double temperature = 1.0;
};

struct SvmModel {
  std::size_t classes = 0;
  std::size_t dim = 0;
  std::vector<double> weights;  // classes * dim
  std::vector<double> bias;     // classes
  double temperature = 1.0;
  // Inputs are standardized before the linear map.
  std::vector<double> mean, inv_scale;

  bool trained() const { return classes > 0; }
  std::vector<double> scores(std::span<const float> x) const;
};

// Pegasos-style stochastic subgradient descent on
// lambda/2 |w|^2 + mean hinge(1 - y (w.x + b)) per class.
SvmModel svm_fit(const LatentSet& x, std::size_t classes, const SvmConfig& config, std::uint64_t seed);
// softmax(scores / temperature)
ProbMatrix svm_predict_proba(const SvmModel& model, const LatentSet& x);

// --- Random forest -----------------------------------------------------------

struct RfConfig {
  std::size_t trees = 100;
  std::size_t max_features = 0;  // 0 = round(sqrt(dim))
  std::size_t max_depth = 0;
  std::size_t min_samples_leaf = 1;
  bool bootstrap = true;
};

struct RandomForestModel {
  std::size_t classes = 0;
  std::vector<DecisionTree> trees;

  bool trained() const { return classes > 0 && !trees.empty(); }
  // Per-class vote counts of the trees' hard predictions.
  std::vector<std::size_t> votes(std::span<const float> x) const;
};

RandomForestModel rf_fit(const LatentSet& x, std::size_t classes, const RfConfig& config, std::uint64_t seed,
                         std::size_t threads = 1);
// Fraction of trees voting for each class.
ProbMatrix rf_predict_proba(const RandomForestModel& model, const LatentSet& x);

// --- k nearest neighbours ----------------------------------------------------

struct KnnModel {
  std::size_t classes = 0;
  std::size_t k = 7;
  LatentSet store;

  bool trained() const { return classes > 0 && store.rows() > 0; }
  // Indices of the k nearest stored rows by Euclidean distance, nearest
  // first; equal distances keep the lower stored index first.
  std::vector<std::size_t> neighbours(std::span<const float> x) const;
};

KnnModel knn_fit(const LatentSet& x, std::size_t classes, std::size_t k = 7);
// Neighbour class frequencies / k.
ProbMatrix knn_predict_proba(const KnnModel& model, const LatentSet& x);

// --- Gradient-boosted trees --------------------------------------------------

struct GbtConfig {
  std::size_t rounds = 50;
  double lr = 0.1;
  std::size_t max_depth = 3;
  std::size_t min_samples_leaf = 1;
};

struct GbtModel {
  std::size_t classes = 0;
  double lr = 0.1;
  // stages[round][class]
  std::vector<std::vector<DecisionTree>> stages;
  // Training log-loss after each round (sum of the per-class binary losses,
  // averaged over samples).
  std::vector<double> loss_history;

  bool trained() const { return classes > 0 && !stages.empty(); }
  // Per-class additive scores using the first `rounds` stages (all by default).
  std::vector<double> scores(std::span<const float> x, std::size_t rounds = SIZE_MAX) const;
};

GbtModel gbt_fit(const LatentSet& x, std::size_t classes, const GbtConfig& config, std::uint64_t seed);
// softmax over the class scores.
ProbMatrix gbt_predict_proba(const GbtModel& model, const LatentSet& x);

// --- Ensemble ----------------------------------------------------------------

enum class VoteMode { soft, hard };

struct SynXrfConfig {
  SvmConfig svm;
  RfConfig rf;
  std::size_t knn_k = 7;
  GbtConfig gbt;
  VoteMode vote = VoteMode::soft;
};

inline constexpr std::array<const char*, 4> kMemberNames = {"svm", "rf", "knn", "gbt"};

struct SynXrfModel {
  std::size_t classes = 0;
  VoteMode vote = VoteMode::soft;
  SvmModel svm;
  RandomForestModel rf;
  KnnModel knn;
  GbtModel gbt;

  // Throws StateError if any member is untrained.
  std::array<ProbMatrix, 4> member_proba(const LatentSet& x) const;
  ProbMatrix predict_proba(const LatentSet& x) const;

  Checkpoint to_checkpoint() const;
  static SynXrfModel from_checkpoint(const Checkpoint& ckpt);
};

SynXrfModel synxrf_fit(const LatentSet& x, std::size_t classes, const SynXrfConfig& config, std::uint64_t seed,
                       std::size_t threads = 1);

VoteMode parse_vote_mode(const std::string& s);
const char* vote_mode_name(VoteMode mode);

}  // namespace cavenet::synxrf
