#pragma once

// Soft-vote fusion of the CBAM image classifier with the two latent-space
// classifiers (DNN and Syn-XRF). Latent members see encode(image) from the
// shared autoencoder.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "cavenet/autoencoder.hpp"
#include "cavenet/cbam.hpp"
#include "cavenet/dnn.hpp"
#include "cavenet/error.hpp"
#include "cavenet/metrics.hpp"
#include "cavenet/synxrf.hpp"

namespace cavenet::fusion {

inline constexpr std::array<const char*, 3> kMemberNames = {"cbam", "dnn", "synxrf"};
inline constexpr const char* kFusedName = "cavenet";

// Re-raises a member failure with the member's name prepended, keeping the
// original error kind.
class MemberError : public Error {
 public:
  MemberError(std::string member, const Error& cause);
  const char* kind() const noexcept override { return kind_.c_str(); }
  const std::string& member() const { return member_; }

 private:
  std::string member_;
  std::string kind_;
};

struct CaveNet {
  std::shared_ptr<const ae::Autoencoder> autoencoder;
  std::shared_ptr<const cbam::CbamModel> cbam;
  std::shared_ptr<const dnn::DnnModel> dnn;
  std::shared_ptr<const synxrf::SynXrfModel> synxrf;
  // cbam, dnn, synxrf. Nonnegative with a positive sum.
  std::array<double, 3> weights = {1.0, 1.0, 1.0};

  // StateError for a missing member, ConfigError for bad weights, ShapeError
  // when member input sizes or class counts disagree.
  void validate() const;
  std::size_t classes() const;
};

enum class Execution { sequential, parallel };

struct Prediction {
  std::array<ProbMatrix, 3> members;  // cbam, dnn, synxrf
  ProbMatrix fused;
  std::vector<int> labels;  // argmax of fused rows, ties to the lowest class
};

// Weighted mean of the three member rows.
ProbMatrix fuse(const std::array<ProbMatrix, 3>& members, const std::array<double, 3>& weights);

// Members run concurrently under Execution::parallel; the result is
// identical to sequential evaluation. Throws ShapeError when the images do
// not match the autoencoder and CBAM input size.
Prediction cavenet_predict(const CaveNet& net, const data::LabeledDataset& images,
                           Execution exec = Execution::parallel, std::size_t threads = 1);

struct TrainConfig {
  ae::AutoencoderConfig autoencoder;
  dnn::DnnConfig dnn;
  synxrf::SynXrfConfig synxrf;
  cbam::CbamConfig cbam;
  std::array<double, 3> weights = {1.0, 1.0, 1.0};
  Execution exec = Execution::parallel;
  std::size_t threads = 1;
};

// Seed for each pipeline stage, derived from the run seed.
enum class Stage : std::uint64_t { autoencoder = 1, dnn, synxrf, cbam };
std::uint64_t stage_seed(std::uint64_t seed, Stage stage);

struct TrainResult {
  CaveNet net;
  LatentSet train_latents;
  LatentSet val_latents;
  // Validation reports in order cbam, dnn, synxrf, cavenet.
  std::vector<metrics::MetricsReport> reports;
};

// Autoencoder first, then latents, then DNN, Syn-XRF and CBAM (concurrently
// under Execution::parallel). Member failures surface as MemberError.
TrainResult cavenet_train_all(const TrainConfig& config, const data::LabeledDataset& train,
                              const data::LabeledDataset& val, std::uint64_t seed);

// Validation reports for each member and the fusion, in the order above.
std::vector<metrics::MetricsReport> evaluate_members(const Prediction& pred, const std::vector<int>& truth);

// CSV `id,predicted_class,p0..p{C-1}`; the class is the row argmax.
void write_predictions(const std::filesystem::path& path, const std::vector<std::string>& ids,
                       const ProbMatrix& probs);
void write_predictions(const std::filesystem::path& path, const std::vector<std::string>& ids,
                       const Prediction& pred);
struct PredictionRows {
  std::vector<std::string> ids;
  std::vector<int> labels;
  ProbMatrix probs;
};
PredictionRows read_predictions(const std::filesystem::path& path);

}  // namespace cavenet::fusion
