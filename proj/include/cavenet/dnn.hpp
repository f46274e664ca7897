#pragma once

// Fully connected classifier over latent vectors.

#include <cstdint>
#include <vector>

#include "cavenet/latent.hpp"
#include "cavenet/nn.hpp"
#include "cavenet/probs.hpp"

namespace cavenet {
class Checkpoint;
}

namespace cavenet::dnn {

struct DnnConfig {
  std::vector<std::size_t> hidden = {512, 256, 128};
  // Dropout follows each of the first `dropout_layers` hidden layers.
  float dropout = 0.3f;
  std::size_t dropout_layers = 2;
  std::size_t classes = 10;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::size_t folds = 5;

  void validate() const;
};

class DnnModel;
DnnModel fit_dnn(const DnnConfig& config, const LatentSet& train, std::uint64_t seed);

class DnnModel {
 public:
  DnnModel() = default;
  DnnModel(const DnnConfig& config, std::size_t input_dim, std::uint64_t seed);

  const DnnConfig& config() const { return config_; }
  std::size_t input_dim() const { return input_dim_; }

  // Inputs are standardized with the stored per-feature mean and scale
  // (identity until fit_standardizer is called).
  void fit_standardizer(const LatentSet& train);

  // x is [N, input_dim]; returns [N, classes] softmax rows.
  Tensor forward(const Tensor& x, bool training, Rng& rng) const;
  ProbMatrix predict_proba(const LatentSet& set) const;

  nn::ParamList parameters() const;
  std::vector<nn::Linear>& layers() { return layers_; }

  std::vector<double> fold_accuracies;
  // Training-set cross-entropy (eval mode) after each epoch of the final fit.
  std::vector<double> loss_history;

  Checkpoint to_checkpoint() const;
  static DnnModel from_checkpoint(const Checkpoint& ckpt);

 private:
  friend DnnModel fit_dnn(const DnnConfig&, const LatentSet&, std::uint64_t);
  Tensor standardize(const LatentSet& set) const;

  DnnConfig config_;
  std::size_t input_dim_ = 0;
  std::vector<float> mean_, inv_scale_;
  std::vector<nn::Linear> layers_;
};

// Fold index per sample: each class's samples, shuffled, are dealt
// round-robin over the folds. Throws DataError when a class has fewer
// samples than folds.
std::vector<std::size_t> stratified_folds(const std::vector<int>& labels, std::size_t folds, Rng& rng);

// Trains `epochs` epochs on `train` from a fresh model seeded by `seed`.
DnnModel fit_dnn(const DnnConfig& config, const LatentSet& train, std::uint64_t seed);

double accuracy(const ProbMatrix& probs, const std::vector<int>& labels);

// Stratified k-fold cross-validation followed by a full-data fit. Folds run
// on up to `threads` threads without changing the result.
DnnModel train_dnn(const DnnConfig& config, const LatentSet& latents, std::uint64_t seed,
                   std::size_t threads = 1);

}  // namespace cavenet::dnn
