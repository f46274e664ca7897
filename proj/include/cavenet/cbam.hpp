#pragma once

// Attention-gated residual image classifier.
//
// refine(F) = M_c(G) * G with G = M_s(F) * F, i.e. the spatial gate is
// applied first and the channel gate is computed from, and applied to, the
// spatially gated map.

#include <cstdint>
#include <string>
#include <vector>

#include "cavenet/data.hpp"
#include "cavenet/nn.hpp"
#include "cavenet/probs.hpp"

namespace cavenet {
class Checkpoint;
}

namespace cavenet::cbam {

using data::LabeledDataset;

struct SpatialAttention {
  Tensor weight;  // [1, 2, k, k]
  Tensor bias;    // [1, 1, 1]
  std::size_t padding = 3;

  static SpatialAttention make(std::size_t kernel, Rng& rng);
  // [C,H,W] -> [1,H,W], entries in (0,1)
  Tensor map(const Tensor& f) const;
  // map(f) * f
  Tensor operator()(const Tensor& f) const;
  void collect(nn::ParamList& out, const std::string& prefix) const;
};

struct ChannelAttention {
  nn::Linear reduce;  // C -> C/r
  nn::Linear expand;  // C/r -> C

  static ChannelAttention make(std::size_t channels, std::size_t reduction, Rng& rng);
  // [C,H,W] -> [C,1,1], entries in (0,1)
  Tensor map(const Tensor& f) const;
  void collect(nn::ParamList& out, const std::string& prefix) const;
};

struct Cbam {
  SpatialAttention spatial;
  ChannelAttention channel;

  static Cbam make(std::size_t channels, std::size_t reduction, std::size_t kernel, Rng& rng);
  Tensor refine(const Tensor& f) const;
  void collect(nn::ParamList& out, const std::string& prefix) const;
};

enum class Layout { desk, resnet18 };

struct CbamConfig {
  Layout layout = Layout::desk;
  std::size_t side = 32;
  std::size_t classes = 10;
  std::vector<std::size_t> widths = {8, 16, 32};
  std::size_t blocks_per_stage = 2;
  std::size_t reduction = 4;
  std::size_t spatial_kernel = 7;
  bool use_attention = true;  // false = identity refine (ablation)
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  // Stop after this many epochs without a validation-accuracy gain; 0 = never.
  std::size_t patience = 0;

  // Full 18-layer layout: 4x4/s2 stem + 2x2 max pool, widths 64..512.
  static CbamConfig resnet18(std::size_t side, std::size_t classes);
  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

class CbamModel {
 public:
  CbamModel() = default;
  CbamModel(const CbamConfig& config, std::uint64_t seed);

  const CbamConfig& config() const { return config_; }
  // False for a default-constructed model.
  bool trained() const { return head_.weight.numel() > 0; }

  // [3,side,side] -> final feature map (before attention)
  Tensor features(const Tensor& image) const;
  // [3,side,side] -> [classes] probabilities
  Tensor forward(const Tensor& image) const;
  // Spatial attention map on the final feature map, [1,h,w].
  Tensor attention_map(const Tensor& image) const;

  ProbMatrix predict_proba(const LabeledDataset& ds, std::size_t threads = 1) const;
  nn::ParamList parameters() const;
  Cbam& attention() { return cbam_; }

  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;

  Checkpoint to_checkpoint() const;
  static CbamModel from_checkpoint(const Checkpoint& ckpt);

 private:
  CbamConfig config_;
  nn::Conv2d stem_;
  bool stem_pool_ = false;
  std::vector<nn::ResidualBlock> blocks_;
  Cbam cbam_;
  nn::Linear head_;
};

// Adam on per-image cross-entropy; keeps the parameters of the epoch with the
// best validation accuracy (earliest on ties).
CbamModel train_cbam(const CbamConfig& config, const LabeledDataset& train, const LabeledDataset& val,
                     std::uint64_t seed);

double accuracy(const ProbMatrix& probs, const LabeledDataset& ds);

}  // namespace cavenet::cbam
