#pragma once

// Parameterized building blocks shared by the autoencoder and the CBAM
// classifier. Parameters are plain Tensors with requires_grad set; each block
// exposes them through `collect` with a dotted name prefix.

#include <optional>
#include <string>
#include <vector>

#include "cavenet/ops.hpp"
#include "cavenet/rng.hpp"
#include "cavenet/tensor.hpp"

namespace cavenet::nn {

struct NamedParam {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedParam>;

std::vector<Tensor> tensors(const ParamList& params);
std::size_t parameter_count(const ParamList& params);

using Snapshot = std::vector<std::vector<float>>;
Snapshot snapshot(const ParamList& params);
void restore(ParamList& params, const Snapshot& snap);

// Normal(0, sqrt(2 / fan_in)) initialized trainable tensor.
Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng);
Tensor trainable_zeros(Shape shape);

struct Conv2d {
  Tensor weight;  // [out, in, k, k]
  Tensor bias;    // [out, 1, 1]
  std::size_t stride = 1;
  std::size_t padding = 0;

  static Conv2d make(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                     std::size_t padding, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

struct ConvTranspose2d {
  Tensor weight;  // [in, out, k, k]
  Tensor bias;    // [out, 1, 1]
  std::size_t stride = 1;
  std::size_t padding = 0;

  static ConvTranspose2d make(std::size_t in, std::size_t out, std::size_t kernel,
                              std::size_t stride, std::size_t padding, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  static Linear make(std::size_t in, std::size_t out, Rng& rng);
  // x is [N, in]
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

// Basic residual block: relu(conv3x3(relu(conv(x))) + shortcut(x)). When
// `downsample` is set the first conv is 4x4/stride 2/pad 1 and the shortcut
// is a 2x2/stride 2 projection, which halves even spatial extents exactly.
struct ResidualBlock {
  Conv2d conv1;
  Conv2d conv2;
  std::optional<Conv2d> shortcut;

  static ResidualBlock make(std::size_t in, std::size_t out, bool downsample, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

}  // namespace cavenet::nn

namespace cavenet {
class Checkpoint;
}

namespace cavenet::nn {

// Stores every parameter as a block under its collected name.
void write_params(Checkpoint& ckpt, const ParamList& params);
// Copies blocks back into the (already shaped) parameters.
void read_params(const Checkpoint& ckpt, const ParamList& params);

}  // namespace cavenet::nn
