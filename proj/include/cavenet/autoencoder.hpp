#pragma once

#include <cstdint>
#include <vector>

#include "cavenet/data.hpp"
#include "cavenet/latent.hpp"
#include "cavenet/nn.hpp"

namespace cavenet {
class Checkpoint;
}

namespace cavenet::ae {

using data::ImageRecord;
using data::LabeledDataset;
using data::Provenance;

struct AutoencoderConfig {
  std::size_t side = 32;
  // One stride-2 stage per width; side must be divisible by 2^stages.
  std::vector<std::size_t> widths = {8, 16, 32};
  std::size_t blocks_per_stage = 1;
  std::size_t latent_dim = 1024;
  std::size_t max_epochs = 40;
  std::size_t patience = 5;
  double min_delta = 1e-5;
  // lr == 0 keeps the weights frozen (no optimizer step).
  double lr = 1e-3;
  std::size_t batch_size = 16;

  void validate() const;  // throws ConfigError
  std::size_t bottleneck_side() const;
};

struct EpochLoss {
  std::size_t epoch = 0;  // 1-based
  double train = 0.0;
  double val = 0.0;
};

class Autoencoder {
 public:
  Autoencoder() = default;
  Autoencoder(const AutoencoderConfig& config, std::uint64_t seed);

  const AutoencoderConfig& config() const { return config_; }

  // [3,side,side] -> [latent_dim]
  Tensor encode(const Tensor& image) const;
  // [latent_dim] -> [3,side,side], values in (0,1)
  Tensor decode(const Tensor& z) const;
  Tensor reconstruct(const Tensor& image) const { return decode(encode(image)); }

  nn::ParamList parameters() const;

  std::vector<EpochLoss> history;
  std::size_t best_epoch = 0;

  Checkpoint to_checkpoint() const;
  static Autoencoder from_checkpoint(const Checkpoint& ckpt);

 private:
  AutoencoderConfig config_;
  nn::Conv2d stem_;
  std::vector<nn::ResidualBlock> encoder_;
  nn::Linear to_latent_;
  nn::Linear from_latent_;
  std::vector<nn::ConvTranspose2d> decoder_;
};

// Mean per-pixel MSE of reconstructions over the dataset.
double reconstruction_mse(const Autoencoder& model, const LabeledDataset& ds);
// MSE of always predicting the dataset's mean image.
double mean_image_mse(const LabeledDataset& ds);

// Adam on per-image MSE with shuffled mini-batches; early stopping on
// validation MSE. Returns the parameters of the best validation epoch.
Autoencoder train_autoencoder(const AutoencoderConfig& config, const LabeledDataset& train,
                              const LabeledDataset& val, std::uint64_t seed);

// Row i = encode(ds[i]); rows are independent so `threads` does not change
// the result.
LatentSet extract_latents(const Autoencoder& model, const LabeledDataset& ds, std::size_t threads = 1);

inline constexpr double kDefaultMergeFraction = 0.05;

// Appends reconstructions of floor(fraction * N) records chosen uniformly
// without replacement.
LabeledDataset merge_reconstructions(const Autoencoder& model, const LabeledDataset& ds,
                                     double fraction, Rng& rng);

}  // namespace cavenet::ae
