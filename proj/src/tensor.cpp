#include "cavenet/tensor.hpp"

#include <numeric>
#include <sstream>

#include "cavenet/error.hpp"

namespace cavenet {

namespace {
thread_local Tape* t_active_tape = nullptr;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor() : node_(std::make_shared<detail::TensorNode>()) {}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : node_(std::make_shared<detail::TensorNode>()) {
  for (auto extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive: " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor of shape " + shape_str(shape) + " given " +
                     std::to_string(values.size()) + " elements");
  }
  node_->shape = std::move(shape);
  node_->data = std::move(values);
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0f); }

Tensor Tensor::full(Shape shape, float value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<float>(n, value));
}

Tensor Tensor::scalar(float value) { return Tensor({1}, {value}); }

float Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

std::span<float> Tensor::grad_mut() const {
  if (node_->grad.empty()) node_->grad.assign(node_->data.size(), 0.0f);
  return node_->grad;
}

void Tensor::zero_grad() const {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data); }

Tensor Tensor::reshape(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("reshape " + shape_str(this->shape()) + " -> " + shape_str(shape));
  }
  Tensor out(std::move(shape), node_->data);
  Tape* tape = active_tape();
  if (tape != nullptr && requires_grad()) {
    out.set_requires_grad(true);
    Tensor in = *this;
    tape->record("reshape", [in, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      auto gi = in.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    });
  }
  return out;
}

void Tape::record(std::string name, std::function<void()> backward) {
  entries_.push_back({std::move(name), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
  }
  Tensor seed = loss;
  seed.grad_mut()[0] += 1.0f;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->backward();
}

void Tape::clear() { entries_.clear(); }

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(entries_.size());
  for (const auto& e : entries_) names.push_back(e.name);
  return names;
}

TapeScope::TapeScope(Tape& tape) : previous_(t_active_tape) { t_active_tape = &tape; }
TapeScope::~TapeScope() { t_active_tape = previous_; }

Tape* active_tape() { return t_active_tape; }

}  // namespace cavenet
