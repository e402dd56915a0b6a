// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Differentiable primitives over Tensor<T>. Every op validates its operand
// extents eagerly and records a closure that propagates gradients to the
// inputs that require them.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "avss/numerics/gemm.hpp"
#include "avss/numerics/tensor.hpp"

namespace avss {

namespace detail {

inline std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

// Splits `shape` around `axis` into (outer, extent, inner) products.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

inline void check_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size()) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + to_string(shape));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                         " vs " + to_string(b.shape()));
  }
}

template <typename T>
T* grad_of(detail::Node<T>& n, std::size_t i) {
  auto& p = *n.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

// Maps each flat index of `out` to the flat index of `in` under numpy-style
// broadcasting of size-1 axes. Ranks must be equal.
inline std::vector<std::size_t> broadcast_map(const Shape& in, const Shape& out) {
  const std::size_t r = out.size();
  const auto in_strides = strides_of(in);
  std::vector<std::size_t> map(numel(out));
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < map.size(); ++flat) {
    std::size_t src = 0;
    for (std::size_t a = 0; a < r; ++a) {
      if (in[a] != 1) src += idx[a] * in_strides[a];
    }
    map[flat] = src;
    for (std::size_t a = r; a-- > 0;) {
      if (++idx[a] < out[a]) break;
      idx[a] = 0;
    }
  }
  return map;
}

template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df) {
  std::vector<T> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return Tensor<T>::make_result(x.shape(), std::move(out), {x.node()},
                                [df](detail::Node<T>& n) {
                                  T* gx = grad_of(n, 0);
                                  if (!gx) return;
                                  const auto& xin = n.parents[0]->data;
                                  for (std::size_t i = 0; i < n.grad.size(); ++i) {
                                    gx[i] += n.grad[i] * df(xin[i], n.data[i]);
                                  }
                                });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a.node(), b.node()},
                                [](detail::Node<T>& n) {
                                  for (std::size_t p = 0; p < 2; ++p) {
                                    if (T* g = detail::grad_of(n, p)) {
                                      for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a.node(), b.node()},
                                [](detail::Node<T>& n) {
                                  if (T* g = detail::grad_of(n, 0)) {
                                    for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
                                  }
                                  if (T* g = detail::grad_of(n, 1)) {
                                    for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] -= n.grad[i];
                                  }
                                });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a.node(), b.node()},
                                [](detail::Node<T>& n) {
                                  const auto& av = n.parents[0]->data;
                                  const auto& bv = n.parents[1]->data;
                                  if (T* g = detail::grad_of(n, 0)) {
                                    for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * bv[i];
                                  }
                                  if (T* g = detail::grad_of(n, 1)) {
                                    for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * av[i];
                                  }
                                });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return detail::unary(x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
  return detail::unary(x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

// ---------------------------------------------------------------------------
// Activations

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  // Subgradient at the kink is 0.
  return detail::unary(x, [](T v) { return v > T(0) ? v : T(0); },
                       [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2)) {
  return detail::unary(x, [slope](T v) { return v > T(0) ? v : slope * v; },
                       [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary(x, [](T v) { return std::tanh(v); },
                       [](T, T y) { return T(1) - y * y; });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " +
                         to_string(shape));
  }
  return Tensor<T>::make_result(std::move(shape), x.storage(), {x.node()},
                                [](detail::Node<T>& n) {
                                  if (T* g = detail::grad_of(n, 0)) {
                                    for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
                                  }
                                });
}

/// Output axis i takes input axis perm[i].
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const Shape& in = x.shape();
  const std::size_t r = in.size();
  if (perm.size() != r) throw DimensionError("permute: rank mismatch for " + to_string(in));
  std::vector<bool> seen(r, false);
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (perm[i] >= r || seen[perm[i]]) throw DimensionError("permute: invalid axis order");
    seen[perm[i]] = true;
    out_shape[i] = in[perm[i]];
  }
  const auto in_strides = detail::strides_of(in);
  std::vector<std::size_t> src(x.size());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t flat = 0; flat < src.size(); ++flat) {
    std::size_t s = 0;
    for (std::size_t a = 0; a < r; ++a) s += idx[a] * in_strides[perm[a]];
    src[flat] = s;
    for (std::size_t a = r; a-- > 0;) {
      if (++idx[a] < out_shape[a]) break;
      idx[a] = 0;
    }
  }
  std::vector<T> out(x.size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[src[i]];
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), {x.node()},
                                [src = std::move(src)](detail::Node<T>& n) {
                                  if (T* g = detail::grad_of(n, 0)) {
                                    for (std::size_t i = 0; i < n.grad.size(); ++i) g[src[i]] += n.grad[i];
                                  }
                                });
}

/// Broadcasts size-1 axes of `x` up to `shape` (equal rank required).
template <typename T>
Tensor<T> expand(const Tensor<T>& x, const Shape& shape) {
  const Shape& in = x.shape();
  bool ok = in.size() == shape.size();
  for (std::size_t a = 0; ok && a < in.size(); ++a) ok = in[a] == shape[a] || in[a] == 1;
  if (!ok) {
    throw DimensionError("expand: cannot broadcast " + to_string(in) + " to " + to_string(shape));
  }
  auto map = detail::broadcast_map(in, shape);
  std::vector<T> out(map.size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[map[i]];
  return Tensor<T>::make_result(shape, std::move(out), {x.node()},
                                [map = std::move(map)](detail::Node<T>& n) {
                                  if (T* g = detail::grad_of(n, 0)) {
                                    for (std::size_t i = 0; i < n.grad.size(); ++i) g[map[i]] += n.grad[i];
                                  }
                                });
}

/// Sums over `axes`, keeping them as size-1 extents.
template <typename T>
Tensor<T> sum_axes(const Tensor<T>& x, const std::vector<std::size_t>& axes) {
  Shape out_shape = x.shape();
  for (std::size_t a : axes) {
    detail::check_axis(x.shape(), a, "sum_axes");
    out_shape[a] = 1;
  }
  auto map = detail::broadcast_map(out_shape, x.shape());
  std::vector<T> out(numel(out_shape), T(0));
  const auto xd = x.data();
  for (std::size_t i = 0; i < map.size(); ++i) out[map[i]] += xd[i];
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), {x.node()},
                                [map = std::move(map)](detail::Node<T>& n) {
                                  if (T* g = detail::grad_of(n, 0)) {
                                    for (std::size_t i = 0; i < map.size(); ++i) g[i] += n.grad[map[i]];
                                  }
                                });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  return Tensor<T>::make_result(Shape{}, {total}, {x.node()}, [](detail::Node<T>& n) {
    if (T* g = detail::grad_of(n, 0)) {
      const std::size_t count = n.parents[0]->data.size();
      for (std::size_t i = 0; i < count; ++i) g[i] += n.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Shape out_shape = parts.front().shape();
  detail::check_axis(out_shape, axis, "concat");
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) throw DimensionError("concat: rank mismatch " + to_string(s));
    for (std::size_t a = 0; a < s.size(); ++a) {
      if (a != axis && s[a] != parts.front().shape()[a]) {
        throw DimensionError("concat: shape mismatch " + to_string(parts.front().shape()) + " vs " +
                             to_string(s));
      }
    }
    out_shape[axis] += s[axis];
  }
  const auto split = detail::split_axis(out_shape, axis);
  std::vector<T> out(numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  std::vector<typename Tensor<T>::NodePtr> nodes;
  for (const auto& p : parts) {
    const std::size_t ext = p.shape()[axis];
    const auto pd = p.data();
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(pd.begin() + o * ext * split.inner, ext * split.inner,
                  out.begin() + (o * split.extent + offset) * split.inner);
    }
    offsets.push_back(offset);
    offset += ext;
    nodes.push_back(p.node());
  }
  return Tensor<T>::make_result(
      std::move(out_shape), std::move(out), std::move(nodes),
      [split, offsets, axis](detail::Node<T>& n) {
        for (std::size_t pi = 0; pi < n.parents.size(); ++pi) {
          T* g = detail::grad_of(n, pi);
          if (!g) continue;
          const std::size_t ext = n.parents[pi]->shape[axis];
          for (std::size_t o = 0; o < split.outer; ++o) {
            const T* src = n.grad.data() + (o * split.extent + offsets[pi]) * split.inner;
            T* dst = g + o * ext * split.inner;
            for (std::size_t i = 0; i < ext * split.inner; ++i) dst[i] += src[i];
          }
        }
      });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  detail::check_axis(x.shape(), axis, "slice");
  if (length == 0 || start + length > x.shape()[axis]) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") exceeds axis " + std::to_string(axis) +
                         " of " + to_string(x.shape()));
  }
  const auto split = detail::split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::vector<T> out(numel(out_shape));
  const auto xd = x.data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(xd.begin() + (o * split.extent + start) * split.inner, length * split.inner,
                out.begin() + o * length * split.inner);
  }
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), {x.node()},
                                [split, start, length](detail::Node<T>& n) {
                                  T* g = detail::grad_of(n, 0);
                                  if (!g) return;
                                  for (std::size_t o = 0; o < split.outer; ++o) {
                                    const T* src = n.grad.data() + o * length * split.inner;
                                    T* dst = g + (o * split.extent + start) * split.inner;
                                    for (std::size_t i = 0; i < length * split.inner; ++i) dst[i] += src[i];
                                  }
                                });
}

/// Zero-pads `axis` with `before` and `after` entries.
template <typename T>
Tensor<T> pad(const Tensor<T>& x, std::size_t axis, std::size_t before, std::size_t after) {
  detail::check_axis(x.shape(), axis, "pad");
  const auto split = detail::split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] += before + after;
  const std::size_t out_ext = out_shape[axis];
  std::vector<T> out(numel(out_shape), T(0));
  const auto xd = x.data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(xd.begin() + o * split.extent * split.inner, split.extent * split.inner,
                out.begin() + (o * out_ext + before) * split.inner);
  }
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), {x.node()},
                                [split, before, out_ext](detail::Node<T>& n) {
                                  T* g = detail::grad_of(n, 0);
                                  if (!g) return;
                                  for (std::size_t o = 0; o < split.outer; ++o) {
                                    const T* src = n.grad.data() + (o * out_ext + before) * split.inner;
                                    T* dst = g + o * split.extent * split.inner;
                                    for (std::size_t i = 0; i < split.extent * split.inner; ++i) dst[i] += src[i];
                                  }
                                });
}

/// out[..., j, ...] = x[..., indices[j], ...] along `axis`.
template <typename T>
Tensor<T> index_select(const Tensor<T>& x, std::size_t axis, const std::vector<std::size_t>& indices) {
  detail::check_axis(x.shape(), axis, "index_select");
  if (indices.empty()) throw DimensionError("index_select: empty index list");
  for (std::size_t i : indices) {
    if (i >= x.shape()[axis]) {
      throw DimensionError("index_select: index " + std::to_string(i) + " out of range for " +
                           to_string(x.shape()));
    }
  }
  const auto split = detail::split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = indices.size();
  std::vector<T> out(numel(out_shape));
  const auto xd = x.data();
  const std::size_t m = indices.size();
  for (std::size_t o = 0; o < split.outer; ++o) {
    for (std::size_t j = 0; j < m; ++j) {
      std::copy_n(xd.begin() + (o * split.extent + indices[j]) * split.inner, split.inner,
                  out.begin() + (o * m + j) * split.inner);
    }
  }
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), {x.node()},
                                [split, indices, m](detail::Node<T>& n) {
                                  T* g = detail::grad_of(n, 0);
                                  if (!g) return;
                                  for (std::size_t o = 0; o < split.outer; ++o) {
                                    for (std::size_t j = 0; j < m; ++j) {
                                      const T* src = n.grad.data() + (o * m + j) * split.inner;
                                      T* dst = g + (o * split.extent + indices[j]) * split.inner;
                                      for (std::size_t i = 0; i < split.inner; ++i) dst[i] += src[i];
                                    }
                                  }
                                });
}

// ---------------------------------------------------------------------------
// Linear algebra

/// [m,k]x[k,n] or batched [B,m,k]x[B,k,n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool batched = sa.size() == 3;
  const bool ok = (sa.size() == 2 || sa.size() == 3) && sb.size() == sa.size() &&
                  sa[sa.size() - 1] == sb[sb.size() - 2] && (!batched || sa[0] == sb[0]);
  if (!ok) {
    throw DimensionError("matmul: incompatible shapes " + to_string(sa) + " and " + to_string(sb));
  }
  const std::size_t batch = batched ? sa[0] : 1;
  const std::size_t m = sa[sa.size() - 2], k = sa.back(), n = sb.back();
  Shape out_shape = batched ? Shape{batch, m, n} : Shape{m, n};
  std::vector<T> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    detail::gemm(false, false, m, n, k, a.data().data() + i * m * k, b.data().data() + i * k * n,
                 out.data() + i * m * n, false);
  }
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), {a.node(), b.node()},
                                [batch, m, n, k](detail::Node<T>& node) {
                                  const T* av = node.parents[0]->data.data();
                                  const T* bv = node.parents[1]->data.data();
                                  T* ga = detail::grad_of(node, 0);
                                  T* gb = detail::grad_of(node, 1);
                                  for (std::size_t i = 0; i < batch; ++i) {
                                    const T* dc = node.grad.data() + i * m * n;
                                    if (ga) detail::gemm(false, true, m, k, n, dc, bv + i * k * n, ga + i * m * k, true);
                                    if (gb) detail::gemm(true, false, k, n, m, av + i * m * k, dc, gb + i * k * n, true);
                                  }
                                });
}

/// y = x W^T + b for x [N, in], W [out, in], b [out] (b may be undefined).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  if (sx.size() != 2 || sw.size() != 2 || sx[1] != sw[1] ||
      (bias.defined() && bias.shape() != Shape{sw[0]})) {
    throw DimensionError("linear: input " + to_string(sx) + " incompatible with weight " +
                         to_string(sw));
  }
  const std::size_t rows = sx[0], in = sx[1], outf = sw[0];
  std::vector<T> out(rows * outf);
  detail::gemm(false, true, rows, outf, in, x.data().data(), weight.data().data(), out.data(), false);
  if (bias.defined()) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t o = 0; o < outf; ++o) out[r * outf + o] += bias[o];
  }
  std::vector<typename Tensor<T>::NodePtr> parents{x.node(), weight.node()};
  if (bias.defined()) parents.push_back(bias.node());
  return Tensor<T>::make_result(Shape{rows, outf}, std::move(out), std::move(parents),
                                [rows, in, outf](detail::Node<T>& n) {
                                  const T* xv = n.parents[0]->data.data();
                                  const T* wv = n.parents[1]->data.data();
                                  if (T* gx = detail::grad_of(n, 0)) detail::gemm(false, false, rows, in, outf, n.grad.data(), wv, gx, true);
                                  if (T* gw = detail::grad_of(n, 1)) detail::gemm(true, false, outf, in, rows, n.grad.data(), xv, gw, true);
                                  if (n.parents.size() > 2) {
                                    if (T* gb = detail::grad_of(n, 2)) {
                                      for (std::size_t r = 0; r < rows; ++r)
                                        for (std::size_t o = 0; o < outf; ++o) gb[o] += n.grad[r * outf + o];
                                    }
                                  }
                                });
}

// ---------------------------------------------------------------------------
// Convolution

struct ConvSpec {
  std::vector<std::size_t> stride;    // per spatial dim, default 1
  std::vector<std::size_t> padding;   // symmetric zero padding, default 0
  std::vector<std::size_t> dilation;  // default 1
};

namespace detail {

// Convolution geometry normalized to three spatial dims.
struct ConvGeometry {
  std::size_t batch = 0, cin = 0, cout = 0;
  std::size_t in[3]{1, 1, 1}, k[3]{1, 1, 1}, out[3]{1, 1, 1};
  std::size_t stride[3]{1, 1, 1}, pad[3]{0, 0, 0}, dil[3]{1, 1, 1};

  std::size_t in_size() const { return in[0] * in[1] * in[2]; }
  std::size_t out_size() const { return out[0] * out[1] * out[2]; }
  std::size_t col_rows() const { return cin * k[0] * k[1] * k[2]; }
  bool pointwise() const {
    for (int d = 0; d < 3; ++d)
      if (k[d] != 1 || stride[d] != 1 || pad[d] != 0) return false;
    return true;
  }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const std::size_t osz = g.out_size();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin; ++c) {
    const T* xc = x + c * g.in_size();
    for (std::size_t kd = 0; kd < g.k[0]; ++kd)
      for (std::size_t kh = 0; kh < g.k[1]; ++kh)
        for (std::size_t kw = 0; kw < g.k[2]; ++kw, ++row) {
          T* dst = cols + row * osz;
          for (std::size_t od = 0; od < g.out[0]; ++od) {
            const long id = static_cast<long>(od * g.stride[0] + kd * g.dil[0]) - static_cast<long>(g.pad[0]);
            for (std::size_t oh = 0; oh < g.out[1]; ++oh) {
              const long ih = static_cast<long>(oh * g.stride[1] + kh * g.dil[1]) - static_cast<long>(g.pad[1]);
              T* d = dst + (od * g.out[1] + oh) * g.out[2];
              if (id < 0 || id >= static_cast<long>(g.in[0]) || ih < 0 || ih >= static_cast<long>(g.in[1])) {
                std::fill_n(d, g.out[2], T(0));
                continue;
              }
              const T* src = xc + (static_cast<std::size_t>(id) * g.in[1] + static_cast<std::size_t>(ih)) * g.in[2];
              for (std::size_t ow = 0; ow < g.out[2]; ++ow) {
                const long iw = static_cast<long>(ow * g.stride[2] + kw * g.dil[2]) - static_cast<long>(g.pad[2]);
                d[ow] = (iw < 0 || iw >= static_cast<long>(g.in[2])) ? T(0) : src[iw];
              }
            }
          }
        }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* x) {
  const std::size_t osz = g.out_size();
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.cin; ++c) {
    T* xc = x + c * g.in_size();
    for (std::size_t kd = 0; kd < g.k[0]; ++kd)
      for (std::size_t kh = 0; kh < g.k[1]; ++kh)
        for (std::size_t kw = 0; kw < g.k[2]; ++kw, ++row) {
          const T* src = cols + row * osz;
          for (std::size_t od = 0; od < g.out[0]; ++od) {
            const long id = static_cast<long>(od * g.stride[0] + kd * g.dil[0]) - static_cast<long>(g.pad[0]);
            if (id < 0 || id >= static_cast<long>(g.in[0])) continue;
            for (std::size_t oh = 0; oh < g.out[1]; ++oh) {
              const long ih = static_cast<long>(oh * g.stride[1] + kh * g.dil[1]) - static_cast<long>(g.pad[1]);
              if (ih < 0 || ih >= static_cast<long>(g.in[1])) continue;
              const T* s = src + (od * g.out[1] + oh) * g.out[2];
              T* dst = xc + (static_cast<std::size_t>(id) * g.in[1] + static_cast<std::size_t>(ih)) * g.in[2];
              for (std::size_t ow = 0; ow < g.out[2]; ++ow) {
                const long iw = static_cast<long>(ow * g.stride[2] + kw * g.dil[2]) - static_cast<long>(g.pad[2]);
                if (iw >= 0 && iw < static_cast<long>(g.in[2])) dst[iw] += s[ow];
              }
            }
          }
        }
  }
}

inline ConvGeometry conv_geometry(const Shape& xs, const Shape& ks, const ConvSpec& spec, std::size_t dims) {
  if (dims < 1 || dims > 3) throw DimensionError("conv_nd: dims must be 1, 2 or 3");
  if (xs.size() != dims + 2 || ks.size() != dims + 2) {
    throw DimensionError("conv_nd: input " + to_string(xs) + " and kernel " + to_string(ks) +
                         " must both have rank " + std::to_string(dims + 2));
  }
  if (xs[1] != ks[1]) {
    throw DimensionError("conv_nd: input channels " + std::to_string(xs[1]) + " of " + to_string(xs) +
                         " do not match kernel " + to_string(ks));
  }
  auto pick = [dims](const std::vector<std::size_t>& v, std::size_t i, std::size_t dflt) {
    if (v.empty()) return dflt;
    if (v.size() != dims) throw DimensionError("conv_nd: spec vector length must equal dims");
    return v[i];
  };
  ConvGeometry g;
  g.batch = xs[0];
  g.cin = xs[1];
  g.cout = ks[0];
  const std::size_t lead = 3 - dims;
  for (std::size_t i = 0; i < dims; ++i) {
    const std::size_t d = lead + i;
    g.in[d] = xs[2 + i];
    g.k[d] = ks[2 + i];
    g.stride[d] = pick(spec.stride, i, 1);
    g.pad[d] = pick(spec.padding, i, 0);
    g.dil[d] = pick(spec.dilation, i, 1);
    if (g.stride[d] == 0 || g.dil[d] == 0) throw DimensionError("conv_nd: zero stride or dilation");
    const std::size_t span = g.dil[d] * (g.k[d] - 1) + 1;
    if (span > g.in[d] + 2 * g.pad[d]) {
      throw DimensionError("conv_nd: kernel " + to_string(ks) + " exceeds padded input " + to_string(xs));
    }
    g.out[d] = (g.in[d] + 2 * g.pad[d] - span) / g.stride[d] + 1;
  }
  return g;
}

}  // namespace detail

/// Cross-correlation over `dims` trailing spatial axes.
/// input [B, Cin, S...], kernel [Cout, Cin, K...], bias [Cout] or undefined.
template <typename T>
Tensor<T> conv_nd(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                  const ConvSpec& spec, std::size_t dims) {
  const auto g = detail::conv_geometry(input.shape(), kernel.shape(), spec, dims);
  if (bias.defined() && bias.shape() != Shape{g.cout}) {
    throw DimensionError("conv_nd: bias shape " + to_string(bias.shape()) + " does not match kernel " +
                         to_string(kernel.shape()));
  }
  Shape out_shape{g.batch, g.cout};
  for (std::size_t i = 0; i < dims; ++i) out_shape.push_back(g.out[3 - dims + i]);

  const std::size_t osz = g.out_size(), rows = g.col_rows();
  std::vector<T> out(g.batch * g.cout * osz);
  std::vector<T> cols(g.pointwise() ? 0 : rows * osz);
  const T* x = input.data().data();
  const T* w = kernel.data().data();
  for (std::size_t b = 0; b < g.batch; ++b) {
    const T* xb = x + b * g.cin * g.in_size();
    const T* c = xb;
    if (!g.pointwise()) {
      detail::im2col(g, xb, cols.data());
      c = cols.data();
    }
    T* ob = out.data() + b * g.cout * osz;
    detail::gemm(false, false, g.cout, osz, rows, w, c, ob, false);
    if (bias.defined()) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        const T bv = bias[co];
        T* row = ob + co * osz;
        for (std::size_t p = 0; p < osz; ++p) row[p] += bv;
      }
    }
  }

  std::vector<typename Tensor<T>::NodePtr> parents{input.node(), kernel.node()};
  if (bias.defined()) parents.push_back(bias.node());
  return Tensor<T>::make_result(
      std::move(out_shape), std::move(out), std::move(parents), [g](detail::Node<T>& n) {
        const std::size_t osz = g.out_size(), rows = g.col_rows();
        const T* x = n.parents[0]->data.data();
        const T* w = n.parents[1]->data.data();
        T* gx = detail::grad_of(n, 0);
        T* gw = detail::grad_of(n, 1);
        T* gb = n.parents.size() > 2 ? detail::grad_of(n, 2) : nullptr;
        std::vector<T> cols(g.pointwise() ? 0 : rows * osz);
        std::vector<T> dcols(gx && !g.pointwise() ? rows * osz : 0);
        for (std::size_t b = 0; b < g.batch; ++b) {
          const T* dout = n.grad.data() + b * g.cout * osz;
          const T* xb = x + b * g.cin * g.in_size();
          if (gw) {
            const T* c = xb;
            if (!g.pointwise()) {
              detail::im2col(g, xb, cols.data());
              c = cols.data();
            }
            detail::gemm(false, true, g.cout, rows, osz, dout, c, gw, true);
          }
          if (gx) {
            T* gxb = gx + b * g.cin * g.in_size();
            if (g.pointwise()) {
              detail::gemm(true, false, rows, osz, g.cout, w, dout, gxb, true);
            } else {
              detail::gemm(true, false, rows, osz, g.cout, w, dout, dcols.data(), false);
              detail::col2im(g, dcols.data(), gxb);
            }
          }
          if (gb) {
            for (std::size_t co = 0; co < g.cout; ++co) {
              T acc = T(0);
              for (std::size_t p = 0; p < osz; ++p) acc += dout[co * osz + p];
              gb[co] += acc;
            }
          }
        }
      });
}

/// Non-overlapping average pooling over the trailing `dims` axes with
/// per-axis window `window`; trailing remainders are dropped.
template <typename T>
Tensor<T> avg_pool(const Tensor<T>& x, const std::vector<std::size_t>& window) {
  const std::size_t dims = window.size();
  const Shape& xs = x.shape();
  if (dims < 1 || dims > 3 || xs.size() < dims + 1) {
    throw DimensionError("avg_pool: unsupported window rank for " + to_string(xs));
  }
  std::size_t in[3]{1, 1, 1}, k[3]{1, 1, 1}, o[3]{1, 1, 1};
  std::size_t lead = 1;
  for (std::size_t i = 0; i < xs.size() - dims; ++i) lead *= xs[i];
  Shape out_shape(xs.begin(), xs.end() - static_cast<long>(dims));
  for (std::size_t i = 0; i < dims; ++i) {
    const std::size_t d = 3 - dims + i;
    in[d] = xs[xs.size() - dims + i];
    k[d] = window[i];
    if (k[d] == 0 || k[d] > in[d]) throw DimensionError("avg_pool: window larger than input " + to_string(xs));
    o[d] = in[d] / k[d];
    out_shape.push_back(o[d]);
  }
  const std::size_t isz = in[0] * in[1] * in[2], osz = o[0] * o[1] * o[2];
  const T inv = T(1) / static_cast<T>(k[0] * k[1] * k[2]);
  // Precomputed source offsets of each output cell's window.
  std::vector<std::size_t> taps;
  taps.reserve(osz * k[0] * k[1] * k[2]);
  for (std::size_t a = 0; a < o[0]; ++a)
    for (std::size_t b = 0; b < o[1]; ++b)
      for (std::size_t c = 0; c < o[2]; ++c)
        for (std::size_t i = 0; i < k[0]; ++i)
          for (std::size_t j = 0; j < k[1]; ++j)
            for (std::size_t l = 0; l < k[2]; ++l)
              taps.push_back(((a * k[0] + i) * in[1] + b * k[1] + j) * in[2] + c * k[2] + l);
  const std::size_t win = k[0] * k[1] * k[2];
  std::vector<T> out(lead * osz);
  const auto xd = x.data();
  for (std::size_t L = 0; L < lead; ++L)
    for (std::size_t p = 0; p < osz; ++p) {
      T acc = T(0);
      for (std::size_t t = 0; t < win; ++t) acc += xd[L * isz + taps[p * win + t]];
      out[L * osz + p] = acc * inv;
    }
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), {x.node()},
                                [taps = std::move(taps), lead, isz, osz, win, inv](detail::Node<T>& n) {
                                  T* g = detail::grad_of(n, 0);
                                  if (!g) return;
                                  for (std::size_t L = 0; L < lead; ++L)
                                    for (std::size_t p = 0; p < osz; ++p) {
                                      const T d = n.grad[L * osz + p] * inv;
                                      for (std::size_t t = 0; t < win; ++t) g[L * isz + taps[p * win + t]] += d;
                                    }
                                });
}

// ---------------------------------------------------------------------------
// Normalization

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  detail::check_axis(x.shape(), axis, "softmax");
  const auto s = detail::split_axis(x.shape(), axis);
  std::vector<T> out(x.size());
  const auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t e = 0; e < s.extent; ++e) mx = std::max(mx, xd[base + e * s.inner]);
      T total = T(0);
      for (std::size_t e = 0; e < s.extent; ++e) {
        const T v = std::exp(xd[base + e * s.inner] - mx);
        out[base + e * s.inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= total;
    }
  return Tensor<T>::make_result(x.shape(), std::move(out), {x.node()}, [s](detail::Node<T>& n) {
    T* g = detail::grad_of(n, 0);
    if (!g) return;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.extent * s.inner + i;
        T dot = T(0);
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t j = base + e * s.inner;
          dot += n.grad[j] * n.data[j];
        }
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t j = base + e * s.inner;
          g[j] += n.data[j] * (n.grad[j] - dot);
        }
      }
  });
}

enum class NormMode { kTrain, kEval };

/// Running statistics of a batch-norm layer; updated in train mode.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  explicit BatchNormState(std::size_t channels = 1)
      : running_mean(Shape{channels}, T(0)), running_var(Shape{channels}, T(1)) {}
};

/// Per-channel normalization of x [N, C, ...] followed by gamma/beta.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, NormMode mode) {
  const Shape& xs = x.shape();
  if (xs.size() < 2) throw DimensionError("batch_norm: need [N, C, ...], got " + to_string(xs));
  const std::size_t batch = xs[0], ch = xs[1];
  if (gamma.shape() != Shape{ch} || beta.shape() != Shape{ch} ||
      state.running_mean.shape() != Shape{ch}) {
    throw DimensionError("batch_norm: parameter shapes do not match channels of " + to_string(xs));
  }
  if (mode == NormMode::kTrain && batch < 2) {
    throw ContractError("batch_norm: degenerate batch of size " + std::to_string(batch) +
                        " in train mode");
  }
  std::size_t inner = 1;
  for (std::size_t i = 2; i < xs.size(); ++i) inner *= xs[i];
  const std::size_t count = batch * inner;
  const auto xd = x.data();

  std::vector<T> mu(ch), inv_std(ch);
  if (mode == NormMode::kTrain) {
    for (std::size_t c = 0; c < ch; ++c) {
      T m = T(0);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < inner; ++i) m += xd[(b * ch + c) * inner + i];
      m /= static_cast<T>(count);
      T v = T(0);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < inner; ++i) {
          const T d = xd[(b * ch + c) * inner + i] - m;
          v += d * d;
        }
      v /= static_cast<T>(count);
      mu[c] = m;
      inv_std[c] = T(1) / std::sqrt(v + state.eps);
      auto rm = state.running_mean.mutable_data();
      auto rv = state.running_var.mutable_data();
      const T unbiased = count > 1 ? v * static_cast<T>(count) / static_cast<T>(count - 1) : v;
      rm[c] = (T(1) - state.momentum) * rm[c] + state.momentum * m;
      rv[c] = (T(1) - state.momentum) * rv[c] + state.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mu[c] = state.running_mean[c];
      inv_std[c] = T(1) / std::sqrt(state.running_var[c] + state.eps);
    }
  }

  std::vector<T> xhat(x.size()), out(x.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t j = (b * ch + c) * inner + i;
        xhat[j] = (xd[j] - mu[c]) * inv_std[c];
        out[j] = gamma[c] * xhat[j] + beta[c];
      }

  const bool train = mode == NormMode::kTrain;
  return Tensor<T>::make_result(
      xs, std::move(out), {x.node(), gamma.node(), beta.node()},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), batch, ch, inner, count,
       train](detail::Node<T>& n) {
        const auto& gam = n.parents[1]->data;
        T* gx = detail::grad_of(n, 0);
        T* gg = detail::grad_of(n, 1);
        T* gbeta = detail::grad_of(n, 2);
        for (std::size_t c = 0; c < ch; ++c) {
          T sum_dy = T(0), sum_dy_xhat = T(0);
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t j = (b * ch + c) * inner + i;
              sum_dy += n.grad[j];
              sum_dy_xhat += n.grad[j] * xhat[j];
            }
          if (gg) gg[c] += sum_dy_xhat;
          if (gbeta) gbeta[c] += sum_dy;
          if (!gx) continue;
          const T scale_c = gam[c] * inv_std[c];
          const T inv_n = T(1) / static_cast<T>(count);
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t j = (b * ch + c) * inner + i;
              if (train) {
                gx[j] += scale_c * (n.grad[j] - inv_n * sum_dy - xhat[j] * inv_n * sum_dy_xhat);
              } else {
                gx[j] += scale_c * n.grad[j];
              }
            }
        }
      });
}

// ---------------------------------------------------------------------------
// Complex-valued helpers over [N, 2, ...] tensors (channel 0 real, 1 imag)

/// Rescales each complex cell so its magnitude becomes bound * tanh(|z|),
/// preserving phase. Every component therefore stays within [-bound, bound].
template <typename T>
Tensor<T> complex_tanh_bound(const Tensor<T>& x, T bound) {
  const Shape& xs = x.shape();
  if (xs.size() < 2 || xs[1] != 2) {
    throw DimensionError("complex_tanh_bound: expected [N, 2, ...], got " + to_string(xs));
  }
  std::size_t inner = 1;
  for (std::size_t i = 2; i < xs.size(); ++i) inner *= xs[i];
  const std::size_t batch = xs[0];
  // g(r) = bound * tanh(r) / r and h(r) = g'(r) / r, with series near 0.
  auto gain = [bound](T r) {
    if (r < T(1e-3)) return bound * (T(1) - r * r / T(3));
    return bound * std::tanh(r) / r;
  };
  auto slope = [bound](T r) {
    if (r < T(1e-3)) return bound * (T(-2) / T(3) + T(8) * r * r / T(15));
    const T t = std::tanh(r);
    return bound * (r * (T(1) - t * t) - t) / (r * r * r);
  };
  std::vector<T> out(x.size());
  const auto xd = x.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t re = b * 2 * inner + i, im = re + inner;
      const T r = std::hypot(xd[re], xd[im]);
      const T gv = gain(r);
      out[re] = gv * xd[re];
      out[im] = gv * xd[im];
      // Rounding can push a saturated cell an ulp past the bound.
      const T m = std::hypot(out[re], out[im]);
      if (m > bound) {
        out[re] *= bound / m;
        out[im] *= bound / m;
      }
    }
  return Tensor<T>::make_result(xs, std::move(out), {x.node()},
                                [gain, slope, batch, inner](detail::Node<T>& n) {
                                  T* g = detail::grad_of(n, 0);
                                  if (!g) return;
                                  const auto& xv = n.parents[0]->data;
                                  for (std::size_t b = 0; b < batch; ++b)
                                    for (std::size_t i = 0; i < inner; ++i) {
                                      const std::size_t re = b * 2 * inner + i, im = re + inner;
                                      const T a = xv[re], c = xv[im];
                                      const T r = std::hypot(a, c);
                                      const T gv = gain(r), h = slope(r);
                                      const T da = n.grad[re], dc = n.grad[im];
                                      g[re] += da * (gv + a * a * h) + dc * (a * c * h);
                                      g[im] += da * (a * c * h) + dc * (gv + c * c * h);
                                    }
                                });
}

/// Euclidean norm of each leading-axis item: x [N, ...] -> [N]. The
/// subgradient at a zero item is taken as 0.
template <typename T>
Tensor<T> item_l2_norm(const Tensor<T>& x) {
  if (x.rank() < 1) throw DimensionError("item_l2_norm: need a leading axis");
  const std::size_t batch = x.shape()[0];
  const std::size_t inner = x.size() / batch;
  std::vector<T> out(batch, T(0));
  const auto xd = x.data();
  for (std::size_t b = 0; b < batch; ++b) {
    T acc = T(0);
    for (std::size_t i = 0; i < inner; ++i) acc += xd[b * inner + i] * xd[b * inner + i];
    out[b] = std::sqrt(acc);
  }
  return Tensor<T>::make_result(Shape{batch}, std::move(out), {x.node()},
                                [batch, inner](detail::Node<T>& n) {
                                  T* g = detail::grad_of(n, 0);
                                  if (!g) return;
                                  const auto& xv = n.parents[0]->data;
                                  for (std::size_t b = 0; b < batch; ++b) {
                                    if (n.data[b] == T(0)) continue;
                                    const T s = n.grad[b] / n.data[b];
                                    for (std::size_t i = 0; i < inner; ++i) g[b * inner + i] += s * xv[b * inner + i];
                                  }
                                });
}

/// Cellwise complex product of [N, 2, ...] tensors.
template <typename T>
Tensor<T> complex_mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "complex_mul");
  if (a.rank() < 2 || a.shape()[1] != 2) {
    throw DimensionError("complex_mul: expected [N, 2, ...], got " + to_string(a.shape()));
  }
  auto ar = slice(a, 1, 0, 1), ai = slice(a, 1, 1, 1);
  auto br = slice(b, 1, 0, 1), bi = slice(b, 1, 1, 1);
  return concat<T>({sub(mul(ar, br), mul(ai, bi)), add(mul(ar, bi), mul(ai, br))}, 1);
}

}  // namespace avss
