#pragma once

// Named gradient-check cases, one per differentiable op plus the attention
// compositions. Each case draws one random instance from the given Rng and
// returns the gradcheck relative error.

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "cavenet/cbam.hpp"
#include "cavenet/ops.hpp"
#include "gradcheck.hpp"

namespace cavenet::testing {

struct GradCase {
  std::string name;
  std::function<double(Rng&)> run;
};

// Attention module assembled from gradcheck inputs:
// F, spatial weight, spatial bias, reduce W, reduce b, expand W, expand b.
inline cbam::Cbam module_from(const std::vector<Tensor>& in) {
  return cbam::Cbam{cbam::SpatialAttention{in[1], in[2], in[1].dim(2) / 2},
                    cbam::ChannelAttention{nn::Linear{in[3], in[4]}, nn::Linear{in[5], in[6]}}};
}

inline std::vector<Tensor> random_module_inputs(std::size_t c, std::size_t hw, Rng& rng) {
  const std::size_t hidden = std::max<std::size_t>(1, c / 4);
  return {spaced_tensor({c, hw, hw}, rng),   grad_input({1, 2, 7, 7}, rng), grad_input({1, 1, 1}, rng),
          grad_input({c, hidden}, rng),      grad_input({hidden}, rng),     grad_input({hidden, c}, rng),
          grad_input({c}, rng)};
}

inline constexpr double kModuleStep = 1e-2;

inline std::vector<GradCase> grad_cases() {
  std::vector<GradCase> cases;
  auto unary = [&cases](std::string name, std::function<Tensor(const Tensor&)> op, Shape shape, bool spaced) {
    cases.push_back({std::move(name), [op, shape, spaced](Rng& rng) {
                       Tensor x = spaced ? spaced_tensor(shape, rng) : grad_input(shape, rng);
                       return gradcheck([op](const auto& in) { return op(in[0]); }, {x}, rng);
                     }});
  };
  auto binary = [&cases](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> op, Shape a,
                         Shape b) {
    cases.push_back({std::move(name), [op, a, b](Rng& rng) {
                       return gradcheck([op](const auto& in) { return op(in[0], in[1]); },
                                        {grad_input(a, rng), grad_input(b, rng)}, rng);
                     }});
  };

  binary("add", [](const Tensor& a, const Tensor& b) { return add(a, b); }, {3, 2, 4}, {3, 1, 1});
  binary("sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); }, {2, 5}, {5});
  binary("mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); }, {3, 2, 4}, {1, 2, 4});
  unary("scale", [](const Tensor& x) { return scale(x, -1.7f); }, {3, 4}, false);
  binary("matmul", [](const Tensor& a, const Tensor& b) { return matmul(a, b); }, {3, 4}, {4, 2});
  cases.push_back({"linear", [](Rng& rng) {
                     return gradcheck([](const auto& in) { return linear(in[0], in[1], in[2]); },
                                      {grad_input({3, 5}, rng), grad_input({5, 4}, rng), grad_input({4}, rng)}, rng);
                   }});
  binary("conv2d_stride1", [](const Tensor& x, const Tensor& k) { return conv2d(x, k, 1, 1); }, {2, 5, 5},
         {3, 2, 3, 3});
  binary("conv2d_stride2", [](const Tensor& x, const Tensor& k) { return conv2d(x, k, 2, 1); }, {2, 5, 5},
         {3, 2, 3, 3});
  binary("conv2d_transpose", [](const Tensor& x, const Tensor& k) { return conv2d_transpose(x, k, 2, 1); },
         {2, 3, 3}, {2, 3, 4, 4});
  unary("pool2d_avg", [](const Tensor& x) { return pool2d(x, PoolKind::avg, 2, 2); }, {2, 4, 5}, false);
  unary("pool2d_max", [](const Tensor& x) { return pool2d(x, PoolKind::max, 2, 1); }, {2, 4, 4}, true);
  unary("global_pool_avg", [](const Tensor& x) { return global_pool(x, PoolKind::avg); }, {3, 3, 3}, false);
  unary("global_pool_max", [](const Tensor& x) { return global_pool(x, PoolKind::max); }, {3, 3, 3}, true);
  unary("channel_pool_avg", [](const Tensor& x) { return channel_pool(x, PoolKind::avg); }, {3, 3, 4}, false);
  unary("channel_pool_max", [](const Tensor& x) { return channel_pool(x, PoolKind::max); }, {3, 3, 4}, true);
  cases.push_back({"concat", [](Rng& rng) {
                     return gradcheck(
                         [](const auto& in) {
                           const std::vector<Tensor> parts = {in[0], in[1]};
                           return concat(parts);
                         },
                         {grad_input({1, 3, 3}, rng), grad_input({2, 3, 3}, rng)}, rng);
                   }});
  unary("relu", [](const Tensor& x) { return relu(x); }, {12}, true);
  unary("sigmoid", [](const Tensor& x) { return sigmoid(x); }, {10}, false);
  unary("softmax_axis0", [](const Tensor& x) { return softmax(x, 0); }, {4, 2}, false);
  unary("softmax_axis1", [](const Tensor& x) { return softmax(x, 1); }, {3, 5}, false);
  unary("sum", [](const Tensor& x) { return sum(x); }, {2, 3, 2}, false);
  unary("mean", [](const Tensor& x) { return mean(x); }, {2, 3, 2}, false);
  binary("mse_loss", [](const Tensor& a, const Tensor& b) { return mse_loss(a, b); }, {3, 4}, {3, 4});
  cases.push_back({"cross_entropy", [](Rng& rng) {
                     Tensor probs = softmax(grad_input({4, 5}, rng), 1);
                     std::vector<int> labels(4);
                     for (auto& l : labels) l = static_cast<int>(rng.below(5));
                     return gradcheck([labels](const auto& in) { return cross_entropy(in[0], labels); }, {probs},
                                      rng);
                   }});
  cases.push_back({"dropout", [](Rng& rng) {
                     const std::uint64_t mask_seed = rng.next();
                     return gradcheck(
                         [mask_seed](const auto& in) {
                           Rng mask(mask_seed);
                           return dropout(in[0], 0.4f, true, mask);
                         },
                         {grad_input({4, 6}, rng)}, rng);
                   }});
  unary("reshape", [](const Tensor& x) { return x.reshape({4, 3}); }, {2, 6}, false);
  cases.push_back({"cbam_spatial", [](Rng& rng) {
                     return gradcheck([](const auto& in) { return module_from(in).spatial(in[0]); },
                                      random_module_inputs(3, 4, rng), rng, kModuleStep, true);
                   }});
  cases.push_back({"cbam_refine", [](Rng& rng) {
                     return gradcheck([](const auto& in) { return module_from(in).refine(in[0]); },
                                      random_module_inputs(2, 4, rng), rng, kModuleStep, true);
                   }});
  return cases;
}

}  // namespace cavenet::testing
