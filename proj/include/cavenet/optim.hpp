#pragma once

#include <span>
#include <vector>

#include "cavenet/tensor.hpp"

namespace cavenet {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// First and second moment estimates, one buffer per parameter tensor.
struct AdamState {
  std::size_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

// One bias-corrected Adam update using each parameter's accumulated gradient
// (parameters without a gradient buffer are treated as having zero gradient).
// Initializes `state` on first use. Throws ConfigError if lr <= 0.
void adam_step(std::span<Tensor> params, AdamState& state, const AdamConfig& config);

void zero_grads(std::span<Tensor> params);

}  // namespace cavenet
