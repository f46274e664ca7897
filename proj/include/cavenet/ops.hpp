#pragma once

// Differentiable tensor operations. Every op checks its operand shapes,
// throws ShapeError naming them on mismatch, and throws NumericError if the
// forward result contains NaN or infinity.

#include <span>

#include "cavenet/rng.hpp"
#include "cavenet/tensor.hpp"

namespace cavenet {

enum class PoolKind { max, avg };

// Elementwise with broadcasting: ranks are right-aligned and every extent
// pair must be equal or contain a 1.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// x [N,in], weight [in,out], bias [out] -> [N,out]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// input [C,H,W], kernel [C_out,C,kh,kw]. (H + 2*padding - kh) must be a
// multiple of stride, and likewise for W.
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding);
// input [C_in,H,W], kernel [C_in,C_out,kh,kw]; output extent is
// (H - 1) * stride - 2 * padding + kh. This is the adjoint of conv2d with the
// same kernel tensor.
Tensor conv2d_transpose(const Tensor& input, const Tensor& kernel, std::size_t stride,
                        std::size_t padding);

// Sliding-window pooling over [C,H,W] with floor semantics: output extent is
// (H - window) / stride + 1, trailing rows and columns that do not fill a
// window are dropped. Max ties resolve to the first element in scan order.
Tensor pool2d(const Tensor& input, PoolKind kind, std::size_t window, std::size_t stride);
// [C,H,W] -> [C,1,1]
Tensor global_pool(const Tensor& input, PoolKind kind);
// Reduction across channels: [C,H,W] -> [1,H,W]
Tensor channel_pool(const Tensor& input, PoolKind kind);
// Concatenation along axis 0.
Tensor concat(std::span<const Tensor> parts);

Tensor relu(const Tensor& t);
Tensor sigmoid(const Tensor& t);
// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& t, std::size_t axis);

Tensor sum(const Tensor& t);
Tensor mean(const Tensor& t);

// (1/N) * sum (pred - target)^2 over all N elements.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

inline constexpr float kLogEpsilon = 1e-12f;
// probs is [N,C] (or [C] for one sample); returns -(1/N) sum log(max(p, 1e-12))
// at the labelled entries.
Tensor cross_entropy(const Tensor& probs, std::span<const int> labels);

// Inverted dropout: in training mode each element is zeroed with probability
// `rate` and survivors are scaled by 1/(1-rate). Identity in eval mode.
Tensor dropout(const Tensor& t, float rate, bool training, Rng& rng);

}  // namespace cavenet
