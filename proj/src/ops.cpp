#include "cavenet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "cavenet/error.hpp"
#include "cavenet/kernels.hpp"

namespace cavenet {
namespace {

void check_finite(const Tensor& t, const char* op) {
  for (float v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
  }
}

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Marks `out` as tracked and records `fn` if any input needs a gradient.
template <class Fn>
void record(const char* name, Tensor& out, std::initializer_list<const Tensor*> inputs, Fn fn) {
  if (!tracking(inputs)) return;
  out.set_requires_grad(true);
  active_tape()->record(name, std::move(fn));
}

// ---------------------------------------------------------------------------
// Broadcasting

struct Broadcast {
  Shape out;
  std::vector<std::size_t> a_strides;
  std::vector<std::size_t> b_strides;
  bool same = false;
};

std::vector<std::size_t> contiguous_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size());
  std::size_t acc = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  Broadcast plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank - a.size(), 1), pb(rank - b.size(), 1);
  pa.insert(pa.end(), a.begin(), a.end());
  pb.insert(pb.end(), b.begin(), b.end());
  plan.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                       shape_str(b));
    }
    plan.out[i] = std::max(pa[i], pb[i]);
  }
  auto sa = contiguous_strides(pa);
  auto sb = contiguous_strides(pb);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] == 1) sa[i] = 0;
    if (pb[i] == 1) sb[i] = 0;
  }
  plan.a_strides = std::move(sa);
  plan.b_strides = std::move(sb);
  return plan;
}

// Calls fn(out_index, a_index, b_index) for every output element in order.
template <class Fn>
void for_each_broadcast(const Broadcast& plan, Fn&& fn) {
  const std::size_t n = shape_numel(plan.out);
  if (plan.same) {
    for (std::size_t i = 0; i < n; ++i) fn(i, i, i);
    return;
  }
  const std::size_t rank = plan.out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    fn(o, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += plan.a_strides[d];
      ib += plan.b_strides[d];
      if (idx[d] < plan.out[d]) break;
      ia -= plan.a_strides[d] * idx[d];
      ib -= plan.b_strides[d] * idx[d];
      idx[d] = 0;
    }
  }
}

enum class BinOp { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  auto plan = std::make_shared<Broadcast>(plan_broadcast(a.shape(), b.shape(), name));
  Tensor out = Tensor::zeros(plan->out);
  auto o = out.mutable_data();
  auto ad = a.data();
  auto bd = b.data();
  for_each_broadcast(*plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    switch (op) {
      case BinOp::add: o[i] = ad[ia] + bd[ib]; break;
      case BinOp::sub: o[i] = ad[ia] - bd[ib]; break;
      case BinOp::mul: o[i] = ad[ia] * bd[ib]; break;
    }
  });
  check_finite(out, name);
  record(name, out, {&a, &b}, [a, b, out, plan, op]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    std::vector<double> ga(a.requires_grad() ? a.numel() : 0);
    std::vector<double> gb(b.requires_grad() ? b.numel() : 0);
    auto ad = a.data();
    auto bd = b.data();
    for_each_broadcast(*plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      const double gi = g[i];
      switch (op) {
        case BinOp::add:
          if (!ga.empty()) ga[ia] += gi;
          if (!gb.empty()) gb[ib] += gi;
          break;
        case BinOp::sub:
          if (!ga.empty()) ga[ia] += gi;
          if (!gb.empty()) gb[ib] -= gi;
          break;
        case BinOp::mul:
          if (!ga.empty()) ga[ia] += gi * bd[ib];
          if (!gb.empty()) gb[ib] += gi * ad[ia];
          break;
      }
    });
    if (!ga.empty()) {
      auto dst = a.grad_mut();
      for (std::size_t i = 0; i < ga.size(); ++i) dst[i] += static_cast<float>(ga[i]);
    }
    if (!gb.empty()) {
      auto dst = b.grad_mut();
      for (std::size_t i = 0; i < gb.size(); ++i) dst[i] += static_cast<float>(gb[i]);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Convolution helpers

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kh, kw;
  std::size_t stride, padding;
  std::size_t out_h, out_w;
};

std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                        const char* op, const Shape& input, const Shape& kernel) {
  const std::size_t padded = in + 2 * pad;
  if (padded < k || (padded - k) % stride != 0) {
    throw ShapeError(std::string(op) + ": non-integral output extent for input " +
                     shape_str(input) + ", kernel " + shape_str(kernel) + ", stride " +
                     std::to_string(stride) + ", padding " + std::to_string(pad));
  }
  return (padded - k) / stride + 1;
}

// col [C*kh*kw, out_h*out_w]
void im2col(const float* x, const ConvGeometry& g, float* col) {
  const std::size_t plane = g.out_h * g.out_w;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const float* xc = x + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj, ++row) {
        float* dst = col + row * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          float* drow = dst + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(drow, drow + g.out_w, 0.0f);
            continue;
          }
          const float* srow = xc + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            drow[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width))
                           ? 0.0f
                           : srow[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

// Scatter-add of col back onto x (the adjoint of im2col).
void col2im(const float* col, const ConvGeometry& g, float* x) {
  const std::size_t plane = g.out_h * g.out_w;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    float* xc = x + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj, ++row) {
        const float* src = col + row * plane;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          float* xrow = xc + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
            xrow[static_cast<std::size_t>(ix)] += src[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
  }
}

void add_into(std::span<float> dst, std::span<const float> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::mul, "mul"); }

Tensor scale(const Tensor& a, float factor) {
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.mutable_data();
  auto ad = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = ad[i] * factor;
  check_finite(out, "scale");
  record("scale", out, {&a}, [a, out, factor]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto ga = a.grad_mut();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  kernels::gemm_nn(m, n, k, a.data(), b.data(), out.mutable_data());
  check_finite(out, "matmul");
  record("matmul", out, {&a, &b}, [a, b, out, m, k, n]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    if (a.requires_grad()) kernels::gemm_nt(m, k, n, g, b.data(), a.grad_mut(), true);
    if (b.requires_grad()) kernels::gemm_tn(k, n, m, a.data(), g, b.grad_mut(), true);
  });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (bias.rank() != 1 || weight.rank() != 2 || bias.dim(0) != weight.dim(1)) {
    throw ShapeError("linear: weight " + shape_str(weight.shape()) + " and bias " +
                     shape_str(bias.shape()) + " disagree");
  }
  return add(matmul(x, weight), bias.reshape({1, bias.dim(0)}));
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding) {
  require_rank(input, 3, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (kernel.dim(1) != input.dim(0)) {
    throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " does not match input " +
                     shape_str(input.shape()));
  }
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), kernel.dim(2), kernel.dim(3),
                 stride, padding, 0, 0};
  g.out_h = conv_extent(g.height, g.kh, stride, padding, "conv2d", input.shape(), kernel.shape());
  g.out_w = conv_extent(g.width, g.kw, stride, padding, "conv2d", input.shape(), kernel.shape());
  const std::size_t cout = kernel.dim(0);
  const std::size_t rows = g.channels * g.kh * g.kw;
  const std::size_t plane = g.out_h * g.out_w;

  auto col = std::make_shared<std::vector<float>>(rows * plane);
  im2col(input.data().data(), g, col->data());
  Tensor out = Tensor::zeros({cout, g.out_h, g.out_w});
  kernels::gemm_nn(cout, plane, rows, kernel.data(), *col, out.mutable_data());
  check_finite(out, "conv2d");

  record("conv2d", out, {&input, &kernel}, [input, kernel, out, col, g, cout, rows, plane]() mutable {
    if (!out.has_grad()) return;
    auto go = out.grad();
    if (kernel.requires_grad()) kernels::gemm_nt(cout, rows, plane, go, *col, kernel.grad_mut(), true);
    if (input.requires_grad()) {
      std::vector<float> dcol(rows * plane);
      kernels::gemm_tn(rows, plane, cout, kernel.data(), go, dcol);
      col2im(dcol.data(), g, input.grad_mut().data());
    }
  });
  return out;
}

Tensor conv2d_transpose(const Tensor& input, const Tensor& kernel, std::size_t stride,
                        std::size_t padding) {
  require_rank(input, 3, "conv2d_transpose", "input");
  require_rank(kernel, 4, "conv2d_transpose", "kernel");
  if (stride == 0) throw ShapeError("conv2d_transpose: stride must be positive");
  if (kernel.dim(0) != input.dim(0)) {
    throw ShapeError("conv2d_transpose: kernel " + shape_str(kernel.shape()) +
                     " does not match input " + shape_str(input.shape()));
  }
  const std::size_t cin = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t cout = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  const std::ptrdiff_t oh = static_cast<std::ptrdiff_t>((h - 1) * stride + kh) -
                            static_cast<std::ptrdiff_t>(2 * padding);
  const std::ptrdiff_t ow = static_cast<std::ptrdiff_t>((w - 1) * stride + kw) -
                            static_cast<std::ptrdiff_t>(2 * padding);
  if (oh <= 0 || ow <= 0) {
    throw ShapeError("conv2d_transpose: empty output for input " + shape_str(input.shape()) +
                     " and kernel " + shape_str(kernel.shape()));
  }
  // Geometry of the forward convolution this op is the adjoint of.
  ConvGeometry g{cout, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), kh, kw,
                 stride, padding, h, w};
  const std::size_t rows = cout * kh * kw;
  const std::size_t plane = h * w;

  std::vector<float> col(rows * plane);
  kernels::gemm_tn(rows, plane, cin, kernel.data(), input.data(), col);
  Tensor out = Tensor::zeros({cout, g.height, g.width});
  col2im(col.data(), g, out.mutable_data().data());
  check_finite(out, "conv2d_transpose");

  record("conv2d_transpose", out, {&input, &kernel},
         [input, kernel, out, g, cin, rows, plane]() mutable {
           if (!out.has_grad()) return;
           std::vector<float> gcol(rows * plane);
           im2col(out.grad().data(), g, gcol.data());
           if (input.requires_grad()) {
             kernels::gemm_nn(cin, plane, rows, kernel.data(), gcol, input.grad_mut(), true);
           }
           if (kernel.requires_grad()) {
             kernels::gemm_nt(cin, rows, plane, input.data(), gcol, kernel.grad_mut(), true);
           }
         });
  return out;
}

Tensor pool2d(const Tensor& input, PoolKind kind, std::size_t window, std::size_t stride) {
  require_rank(input, 3, "pool2d", "input");
  if (window == 0) throw ShapeError("pool2d: empty window");
  if (stride == 0) throw ShapeError("pool2d: stride must be positive");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (window > h || window > w) {
    throw ShapeError("pool2d: window " + std::to_string(window) + " larger than input " +
                     shape_str(input.shape()));
  }
  const std::size_t oh = (h - window) / stride + 1;
  const std::size_t ow = (w - window) / stride + 1;
  Tensor out = Tensor::zeros({c, oh, ow});
  auto o = out.mutable_data();
  auto x = input.data();
  auto argmax = std::make_shared<std::vector<std::size_t>>(kind == PoolKind::max ? o.size() : 0);
  const double inv = 1.0 / static_cast<double>(window * window);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t oi = (ch * oh + oy) * ow + ox;
        double acc = 0.0;
        float best = -std::numeric_limits<float>::infinity();
        std::size_t best_i = 0;
        for (std::size_t ky = 0; ky < window; ++ky) {
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::size_t xi = (ch * h + oy * stride + ky) * w + ox * stride + kx;
            acc += x[xi];
            if (x[xi] > best) {
              best = x[xi];
              best_i = xi;
            }
          }
        }
        if (kind == PoolKind::max) {
          o[oi] = best;
          (*argmax)[oi] = best_i;
        } else {
          o[oi] = static_cast<float>(acc * inv);
        }
      }
    }
  }
  check_finite(out, "pool2d");
  record("pool2d", out, {&input},
         [input, out, kind, window, stride, argmax, c, h, w, oh, ow, inv]() mutable {
           if (!out.has_grad()) return;
           auto g = out.grad();
           auto gi = input.grad_mut();
           if (kind == PoolKind::max) {
             for (std::size_t i = 0; i < g.size(); ++i) gi[(*argmax)[i]] += g[i];
             return;
           }
           for (std::size_t ch = 0; ch < c; ++ch) {
             for (std::size_t oy = 0; oy < oh; ++oy) {
               for (std::size_t ox = 0; ox < ow; ++ox) {
                 const float share = static_cast<float>(g[(ch * oh + oy) * ow + ox] * inv);
                 for (std::size_t ky = 0; ky < window; ++ky) {
                   for (std::size_t kx = 0; kx < window; ++kx) {
                     gi[(ch * h + oy * stride + ky) * w + ox * stride + kx] += share;
                   }
                 }
               }
             }
           }
         });
  return out;
}

Tensor global_pool(const Tensor& input, PoolKind kind) {
  require_rank(input, 3, "global_pool", "input");
  const std::size_t c = input.dim(0), plane = input.dim(1) * input.dim(2);
  Tensor out = Tensor::zeros({c, 1, 1});
  auto o = out.mutable_data();
  auto x = input.data();
  auto argmax = std::make_shared<std::vector<std::size_t>>(c, 0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* p = x.data() + ch * plane;
    if (kind == PoolKind::avg) {
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      o[ch] = static_cast<float>(acc / static_cast<double>(plane));
    } else {
      std::size_t best = 0;
      for (std::size_t i = 1; i < plane; ++i) {
        if (p[i] > p[best]) best = i;
      }
      o[ch] = p[best];
      (*argmax)[ch] = ch * plane + best;
    }
  }
  check_finite(out, "global_pool");
  record("global_pool", out, {&input}, [input, out, kind, argmax, c, plane]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto gi = input.grad_mut();
    for (std::size_t ch = 0; ch < c; ++ch) {
      if (kind == PoolKind::max) {
        gi[(*argmax)[ch]] += g[ch];
      } else {
        const float share = static_cast<float>(g[ch] / static_cast<double>(plane));
        for (std::size_t i = 0; i < plane; ++i) gi[ch * plane + i] += share;
      }
    }
  });
  return out;
}

Tensor channel_pool(const Tensor& input, PoolKind kind) {
  require_rank(input, 3, "channel_pool", "input");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2), plane = h * w;
  if (c == 0) throw ShapeError("channel_pool: zero channels");
  Tensor out = Tensor::zeros({1, h, w});
  auto o = out.mutable_data();
  auto x = input.data();
  auto argmax = std::make_shared<std::vector<std::size_t>>(kind == PoolKind::max ? plane : 0);
  for (std::size_t i = 0; i < plane; ++i) {
    if (kind == PoolKind::avg) {
      double acc = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) acc += x[ch * plane + i];
      o[i] = static_cast<float>(acc / static_cast<double>(c));
    } else {
      std::size_t best = i;
      for (std::size_t ch = 1; ch < c; ++ch) {
        if (x[ch * plane + i] > x[best]) best = ch * plane + i;
      }
      o[i] = x[best];
      (*argmax)[i] = best;
    }
  }
  check_finite(out, "channel_pool");
  record("channel_pool", out, {&input}, [input, out, kind, argmax, c, plane]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto gi = input.grad_mut();
    for (std::size_t i = 0; i < plane; ++i) {
      if (kind == PoolKind::max) {
        gi[(*argmax)[i]] += g[i];
      } else {
        const float share = static_cast<float>(g[i] / static_cast<double>(c));
        for (std::size_t ch = 0; ch < c; ++ch) gi[ch * plane + i] += share;
      }
    }
  });
  return out;
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t lead = 0;
  for (const auto& p : parts) {
    if (p.rank() != tail.size() + 1 || !std::equal(tail.begin(), tail.end(), p.shape().begin() + 1)) {
      throw ShapeError("concat: incompatible shapes " + shape_str(parts[0].shape()) + " and " +
                       shape_str(p.shape()));
    }
    lead += p.dim(0);
  }
  Shape shape{lead};
  shape.insert(shape.end(), tail.begin(), tail.end());
  std::vector<float> values;
  values.reserve(shape_numel(shape));
  bool any_grad = false;
  for (const auto& p : parts) {
    values.insert(values.end(), p.data().begin(), p.data().end());
    any_grad = any_grad || p.requires_grad();
  }
  Tensor out(std::move(shape), std::move(values));
  if (active_tape() != nullptr && any_grad) {
    out.set_requires_grad(true);
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    active_tape()->record("concat", [inputs, out]() mutable {
      if (!out.has_grad()) return;
      auto g = out.grad();
      std::size_t offset = 0;
      for (auto& in : inputs) {
        if (in.requires_grad()) add_into(in.grad_mut(), g.subspan(offset, in.numel()));
        offset += in.numel();
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& t) {
  Tensor out = Tensor::zeros(t.shape());
  auto o = out.mutable_data();
  auto x = t.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] > 0.0f ? x[i] : 0.0f;
  check_finite(out, "relu");
  record("relu", out, {&t}, [t, out]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto x = t.data();
    auto gi = t.grad_mut();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0f) gi[i] += g[i];
    }
  });
  return out;
}

Tensor sigmoid(const Tensor& t) {
  Tensor out = Tensor::zeros(t.shape());
  auto o = out.mutable_data();
  auto x = t.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double v = x[i];
    o[i] = static_cast<float>(v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                       : std::exp(v) / (1.0 + std::exp(v)));
  }
  check_finite(out, "sigmoid");
  record("sigmoid", out, {&t}, [t, out]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto y = out.data();
    auto gi = t.grad_mut();
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * y[i] * (1.0f - y[i]);
  });
  return out;
}

Tensor softmax(const Tensor& t, std::size_t axis) {
  if (axis >= t.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(t.shape()));
  }
  const auto& s = t.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Tensor out = Tensor::zeros(s);
  auto o = out.mutable_data();
  auto x = t.data();
  std::vector<double> e(len);
  for (std::size_t a = 0; a < outer; ++a) {
    for (std::size_t b = 0; b < inner; ++b) {
      const std::size_t base = a * len * inner + b;
      float mx = x[base];
      for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, x[base + i * inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        e[i] = std::exp(static_cast<double>(x[base + i * inner]) - mx);
        total += e[i];
      }
      for (std::size_t i = 0; i < len; ++i) o[base + i * inner] = static_cast<float>(e[i] / total);
    }
  }
  check_finite(out, "softmax");
  record("softmax", out, {&t}, [t, out, outer, inner, len]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto y = out.data();
    auto gi = t.grad_mut();
    for (std::size_t a = 0; a < outer; ++a) {
      for (std::size_t b = 0; b < inner; ++b) {
        const std::size_t base = a * len * inner + b;
        double dotp = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
          dotp += static_cast<double>(g[base + i * inner]) * y[base + i * inner];
        }
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t k = base + i * inner;
          gi[k] += static_cast<float>(y[k] * (g[k] - dotp));
        }
      }
    }
  });
  return out;
}

Tensor sum(const Tensor& t) {
  double acc = 0.0;
  for (float v : t.data()) acc += v;
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  check_finite(out, "sum");
  record("sum", out, {&t}, [t, out]() mutable {
    if (!out.has_grad()) return;
    const float g = out.grad()[0];
    for (auto& v : t.grad_mut()) v += g;
  });
  return out;
}

Tensor mean(const Tensor& t) { return scale(sum(t), 1.0f / static_cast<float>(t.numel())); }

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                     shape_str(target.shape()));
  }
  auto p = pred.data();
  auto q = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - q[i];
    acc += d * d;
  }
  const double n = static_cast<double>(p.size());
  Tensor out = Tensor::scalar(static_cast<float>(acc / n));
  check_finite(out, "mse_loss");
  record("mse_loss", out, {&pred, &target}, [pred, target, out, n]() mutable {
    if (!out.has_grad()) return;
    const double g = out.grad()[0];
    auto p = pred.data();
    auto q = target.data();
    if (pred.requires_grad()) {
      auto gp = pred.grad_mut();
      for (std::size_t i = 0; i < gp.size(); ++i) {
        gp[i] += static_cast<float>(2.0 * g * (static_cast<double>(p[i]) - q[i]) / n);
      }
    }
    if (target.requires_grad()) {
      auto gt = target.grad_mut();
      for (std::size_t i = 0; i < gt.size(); ++i) {
        gt[i] -= static_cast<float>(2.0 * g * (static_cast<double>(p[i]) - q[i]) / n);
      }
    }
  });
  return out;
}

Tensor cross_entropy(const Tensor& probs, std::span<const int> labels) {
  std::size_t rows = 0, classes = 0;
  if (probs.rank() == 1) {
    rows = 1;
    classes = probs.dim(0);
  } else if (probs.rank() == 2) {
    rows = probs.dim(0);
    classes = probs.dim(1);
  } else {
    throw ShapeError("cross_entropy: probabilities must be [N,C] or [C], got " +
                     shape_str(probs.shape()));
  }
  if (labels.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(rows) + " rows");
  }
  auto p = probs.data();
  double acc = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw DataError("cross_entropy: label " + std::to_string(labels[r]) + " outside [0," +
                      std::to_string(classes) + ")");
    }
    const double v = p[r * classes + static_cast<std::size_t>(labels[r])];
    acc -= std::log(std::max(v, static_cast<double>(kLogEpsilon)));
  }
  Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(rows)));
  check_finite(out, "cross_entropy");
  std::vector<int> lab(labels.begin(), labels.end());
  record("cross_entropy", out, {&probs}, [probs, out, lab, rows, classes]() mutable {
    if (!out.has_grad()) return;
    const double g = out.grad()[0];
    auto p = probs.data();
    auto gp = probs.grad_mut();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t k = r * classes + static_cast<std::size_t>(lab[r]);
      if (p[k] >= kLogEpsilon) {
        gp[k] -= static_cast<float>(g / (static_cast<double>(rows) * p[k]));
      }
    }
  });
  return out;
}

Tensor dropout(const Tensor& t, float rate, bool training, Rng& rng) {
  if (!(rate >= 0.0f && rate < 1.0f)) {
    throw ConfigError("dropout: rate must lie in [0,1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0f) return t;
  const float keep_scale = 1.0f / (1.0f - rate);
  auto mask = std::make_shared<std::vector<float>>(t.numel());
  for (auto& m : *mask) m = rng.bernoulli(rate) ? 0.0f : keep_scale;
  Tensor out = Tensor::zeros(t.shape());
  auto o = out.mutable_data();
  auto x = t.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * (*mask)[i];
  check_finite(out, "dropout");
  record("dropout", out, {&t}, [t, out, mask]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto gi = t.grad_mut();
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * (*mask)[i];
  });
  return out;
}

}  // namespace cavenet
