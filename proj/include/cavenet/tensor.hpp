#pragma once

// Dense float tensors with reverse-mode automatic differentiation.
//
// Layout is row-major; images use the [C, H, W] convention and batched 2-D
// data uses [N, features]. A Tensor is a shared handle: copies alias the same
// storage. Differentiable ops record a backward closure on the thread's
// active Tape (see TapeScope) when at least one operand requires a gradient.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cavenet {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct TensorNode {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until first written
  bool requires_grad = false;
};
}  // namespace detail

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<float> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor scalar(float value);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }
  bool empty() const { return node_->data.empty(); }

  std::span<const float> data() const { return node_->data; }
  // Direct element access for initialization and optimizer updates. Writing
  // through this after the tensor has been used in a recorded op invalidates
  // the recorded backward pass.
  std::span<float> mutable_data() { return node_->data; }
  float operator[](std::size_t i) const { return node_->data[i]; }
  float item() const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient buffer; empty span if nothing has been accumulated.
  std::span<const float> grad() const { return node_->grad; }
  // Gradient buffer, allocated (zeroed) on first use. Tensor is a handle, so
  // this mutates shared storage even through a const handle.
  std::span<float> grad_mut() const;
  void zero_grad() const;

  // New tensor with copied data and no gradient tracking.
  Tensor detach() const;
  // Differentiable reshape; element count must match.
  Tensor reshape(Shape shape) const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode> node_;
};

// Ordered record of executed differentiable operations.
class Tape {
 public:
  void record(std::string name, std::function<void()> backward);
  // Seeds d(loss)/d(loss) = 1 and replays the record in reverse order.
  // `loss` must have exactly one element.
  void backward(const Tensor& loss);
  void clear();
  std::size_t size() const { return entries_.size(); }
  std::vector<std::string> op_names() const;

 private:
  struct Entry {
    std::string name;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
};

// Makes `tape` the active tape of the calling thread for the scope lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

}  // namespace cavenet
