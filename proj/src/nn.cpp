#include "cavenet/nn.hpp"

#include <cmath>

#include "cavenet/checkpoint.hpp"
#include "cavenet/error.hpp"

namespace cavenet::nn {

std::vector<Tensor> tensors(const ParamList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

std::size_t parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

Snapshot snapshot(const ParamList& params) {
  Snapshot snap;
  snap.reserve(params.size());
  for (const auto& p : params) snap.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return snap;
}

void restore(ParamList& params, const Snapshot& snap) {
  if (snap.size() != params.size()) throw StateError("restore: snapshot size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].tensor.mutable_data();
    if (dst.size() != snap[i].size()) throw StateError("restore: tensor size mismatch");
    std::copy(snap[i].begin(), snap[i].end(), dst.begin());
  }
}

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.mutable_data()) v = static_cast<float>(rng.normal(0.0, sd));
  t.set_requires_grad(true);
  return t;
}

Tensor trainable_zeros(Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

Conv2d Conv2d::make(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                    std::size_t padding, Rng& rng) {
  return Conv2d{he_normal({out, in, kernel, kernel}, in * kernel * kernel, rng),
                trainable_zeros({out, 1, 1}), stride, padding};
}

Tensor Conv2d::operator()(const Tensor& x) const {
  return add(conv2d(x, weight, stride, padding), bias);
}

void Conv2d::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

ConvTranspose2d ConvTranspose2d::make(std::size_t in, std::size_t out, std::size_t kernel,
                                      std::size_t stride, std::size_t padding, Rng& rng) {
  // Each output pixel receives about in * k^2 / stride^2 contributions.
  const std::size_t fan = std::max<std::size_t>(1, in * kernel * kernel / (stride * stride));
  return ConvTranspose2d{he_normal({in, out, kernel, kernel}, fan, rng),
                         trainable_zeros({out, 1, 1}), stride, padding};
}

Tensor ConvTranspose2d::operator()(const Tensor& x) const {
  return add(conv2d_transpose(x, weight, stride, padding), bias);
}

void ConvTranspose2d::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Linear Linear::make(std::size_t in, std::size_t out, Rng& rng) {
  return Linear{he_normal({in, out}, in, rng), trainable_zeros({out})};
}

Tensor Linear::operator()(const Tensor& x) const { return linear(x, weight, bias); }

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

ResidualBlock ResidualBlock::make(std::size_t in, std::size_t out, bool downsample, Rng& rng) {
  ResidualBlock b;
  b.conv1 = downsample ? Conv2d::make(in, out, 4, 2, 1, rng) : Conv2d::make(in, out, 3, 1, 1, rng);
  b.conv2 = Conv2d::make(out, out, 3, 1, 1, rng);
  // Scale the second conv down so each block starts close to its shortcut.
  for (auto& v : b.conv2.weight.mutable_data()) v *= 0.5f;
  if (downsample) {
    b.shortcut = Conv2d::make(in, out, 2, 2, 0, rng);
  } else if (in != out) {
    b.shortcut = Conv2d::make(in, out, 1, 1, 0, rng);
  }
  return b;
}

Tensor ResidualBlock::operator()(const Tensor& x) const {
  Tensor h = conv2(relu(conv1(x)));
  Tensor skip = shortcut ? (*shortcut)(x) : x;
  return relu(add(h, skip));
}

void ResidualBlock::collect(ParamList& out, const std::string& prefix) const {
  conv1.collect(out, prefix + ".conv1");
  conv2.collect(out, prefix + ".conv2");
  if (shortcut) shortcut->collect(out, prefix + ".shortcut");
}

}  // namespace cavenet::nn

namespace cavenet::nn {

void write_params(Checkpoint& ckpt, const ParamList& params) {
  for (const auto& p : params) ckpt.add(p.name, p.tensor);
}

void read_params(const Checkpoint& ckpt, const ParamList& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    ckpt.load_into(p.name, t);
  }
}

}  // namespace cavenet::nn
