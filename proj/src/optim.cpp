#include "cavenet/optim.hpp"

#include <cmath>
#include <string>

#include "cavenet/error.hpp"

namespace cavenet {

void adam_step(std::span<Tensor> params, AdamState& state, const AdamConfig& config) {
  if (!(config.lr > 0.0f)) {
    throw ConfigError("adam: learning rate must be positive, got " + std::to_string(config.lr));
  }
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].numel(), 0.0f);
      state.v[i].assign(params[i].numel(), 0.0f);
    }
  }
  if (state.m.size() != params.size()) {
    throw StateError("adam: optimizer state tracks " + std::to_string(state.m.size()) +
                     " tensors but " + std::to_string(params.size()) + " were given");
  }
  ++state.step;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& param = params[p];
    if (!param.has_grad()) continue;
    auto g = param.grad();
    auto w = param.mutable_data();
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = config.lr * (mi / c1) / (std::sqrt(vi / c2) + config.eps);
      w[i] = static_cast<float>(w[i] - update);
    }
  }
}

void zero_grads(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace cavenet
