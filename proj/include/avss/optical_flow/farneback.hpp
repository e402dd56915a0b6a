// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Dense two-frame motion estimation by polynomial expansion. Each frame is
// locally approximated by f(p) ~ p^T A p + b^T p + c (p = (x, y), x along
// columns); a displacement d turns b into b - 2 A d, which is solved for in a
// Gaussian-weighted neighborhood, coarse to fine over an image pyramid.

#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "avss/optical_flow/frames.hpp"

namespace avss::flow {

struct FlowParams {
  int pyramid_levels = 3;
  double pyramid_scale = 0.5;
  int window_size = 13;
  int iterations = 3;
  int poly_n = 5;
  double poly_sigma = 1.1;

  void validate() const {
    if (pyramid_levels < 1) throw std::invalid_argument("flow: pyramid_levels must be >= 1");
    if (!(pyramid_scale > 0.0 && pyramid_scale < 1.0)) {
      throw std::invalid_argument("flow: pyramid_scale must lie in (0, 1)");
    }
    if (window_size < 1 || window_size % 2 == 0) throw std::invalid_argument("flow: window_size must be odd");
    if (iterations < 1) throw std::invalid_argument("flow: iterations must be >= 1");
    if (poly_n < 3 || poly_n % 2 == 0) throw std::invalid_argument("flow: poly_n must be odd and >= 3");
    if (!(poly_sigma > 0.0)) throw std::invalid_argument("flow: poly_sigma must be positive");
  }

  /// Extent of level `level` for a base extent.
  std::size_t level_extent(std::size_t base, int level) const {
    return static_cast<std::size_t>(std::lround(static_cast<double>(base) * std::pow(pyramid_scale, level)));
  }
};

/// Quadratic expansion coefficients per pixel.
struct PolyCoeffs {
  std::size_t height = 0, width = 0;
  std::vector<double> a11, a12, a22;  // A = [[a11, a12], [a12, a22]]
  std::vector<double> b1, b2;         // b = (b1, b2) along (x, y)
  std::vector<double> c;
};

namespace detail {

inline std::vector<double> gaussian_kernel(int radius, double sigma) {
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += k[i + radius];
  }
  for (double& v : k) v /= total;
  return k;
}

// 6x6 inverse by Gauss-Jordan elimination with partial pivoting.
inline std::array<std::array<double, 6>, 6> invert6(std::array<std::array<double, 6>, 6> m) {
  std::array<std::array<double, 6>, 6> inv{};
  for (int i = 0; i < 6; ++i) inv[i][i] = 1.0;
  for (int col = 0; col < 6; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 6; ++r)
      if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
    std::swap(m[col], m[pivot]);
    std::swap(inv[col], inv[pivot]);
    const double d = m[col][col];
    for (int j = 0; j < 6; ++j) {
      m[col][j] /= d;
      inv[col][j] /= d;
    }
    for (int r = 0; r < 6; ++r) {
      if (r == col) continue;
      const double f = m[r][col];
      for (int j = 0; j < 6; ++j) {
        m[r][j] -= f * m[col][j];
        inv[r][j] -= f * inv[col][j];
      }
    }
  }
  return inv;
}

// Separable correlation with replicated borders; `horizontal` selects the axis.
inline std::vector<double> correlate(const std::vector<double>& src, std::size_t h, std::size_t w,
                                     const std::vector<double>& kernel, bool horizontal) {
  const int r = static_cast<int>(kernel.size() / 2);
  std::vector<double> out(h * w, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) {
        long yy = static_cast<long>(y), xx = static_cast<long>(x);
        if (horizontal) xx = std::clamp(xx + k, 0L, static_cast<long>(w) - 1);
        else yy = std::clamp(yy + k, 0L, static_cast<long>(h) - 1);
        acc += kernel[k + r] * src[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)];
      }
      out[y * w + x] = acc;
    }
  return out;
}

inline double bilinear(const std::vector<double>& img, std::size_t h, std::size_t w, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  return (1 - fy) * ((1 - fx) * img[y0 * w + x0] + fx * img[y0 * w + x1]) +
         fy * ((1 - fx) * img[y1 * w + x0] + fx * img[y1 * w + x1]);
}

// Bilinear resize with pixel-center alignment.
inline std::vector<double> resize(const std::vector<double>& src, std::size_t sh, std::size_t sw,
                                  std::size_t dh, std::size_t dw) {
  std::vector<double> out(dh * dw);
  const double ry = static_cast<double>(sh) / static_cast<double>(dh);
  const double rx = static_cast<double>(sw) / static_cast<double>(dw);
  for (std::size_t y = 0; y < dh; ++y)
    for (std::size_t x = 0; x < dw; ++x) {
      out[y * dw + x] = bilinear(src, sh, sw, (static_cast<double>(y) + 0.5) * ry - 0.5,
                                 (static_cast<double>(x) + 0.5) * rx - 0.5);
    }
  return out;
}

inline GrayImage downscale(const GrayImage& img, std::size_t dh, std::size_t dw, double scale) {
  // Anti-alias blur sized to the decimation factor.
  const double sigma = std::max((1.0 / scale - 1.0) * 0.5, 1e-3);
  const int radius = std::max(1, static_cast<int>(std::round(sigma * 2.5)));
  const auto k = gaussian_kernel(radius, sigma);
  auto blurred = correlate(correlate(img.pixels, img.height, img.width, k, true), img.height, img.width, k, false);
  GrayImage out(dh, dw);
  out.pixels = resize(blurred, img.height, img.width, dh, dw);
  return out;
}

inline FlowField resize_flow(const FlowField& f, std::size_t dh, std::size_t dw) {
  FlowField out(dh, dw);
  const double sx = static_cast<double>(dw) / static_cast<double>(f.width);
  const double sy = static_cast<double>(dh) / static_cast<double>(f.height);
  out.dx = resize(f.dx, f.height, f.width, dh, dw);
  out.dy = resize(f.dy, f.height, f.width, dh, dw);
  for (double& v : out.dx) v *= sx;
  for (double& v : out.dy) v *= sy;
  return out;
}

}  // namespace detail

/// Weighted least-squares quadratic fit in every poly_n x poly_n neighborhood
/// with Gaussian applicability of scale poly_sigma. Borders replicate edges.
inline PolyCoeffs polynomial_expansion(const GrayImage& img, int poly_n, double poly_sigma) {
  if (poly_n < 1 || poly_n % 2 == 0) throw std::invalid_argument("polynomial_expansion: poly_n must be odd");
  if (img.height < static_cast<std::size_t>(poly_n) || img.width < static_cast<std::size_t>(poly_n)) {
    throw std::invalid_argument("polynomial_expansion: image " + std::to_string(img.height) + "x" +
                                std::to_string(img.width) + " smaller than neighborhood " + std::to_string(poly_n));
  }
  const int r = poly_n / 2;
  std::vector<double> g(2 * r + 1), gx(2 * r + 1), gxx(2 * r + 1);
  for (int i = -r; i <= r; ++i) {
    g[i + r] = std::exp(-(i * i) / (2.0 * poly_sigma * poly_sigma));
    gx[i + r] = i * g[i + r];
    gxx[i + r] = i * i * g[i + r];
  }
  // Basis order: 1, x, y, x^2, y^2, xy. Exponent pairs (px, py) per basis.
  constexpr std::array<std::array<int, 2>, 6> kPow{{{0, 0}, {1, 0}, {0, 1}, {2, 0}, {0, 2}, {1, 1}}};
  std::array<std::array<double, 6>, 6> gram{};
  for (int a = 0; a < 6; ++a)
    for (int b = 0; b < 6; ++b) {
      double acc = 0.0;
      for (int y = -r; y <= r; ++y)
        for (int x = -r; x <= r; ++x) {
          acc += g[x + r] * g[y + r] * std::pow(x, kPow[a][0] + kPow[b][0]) * std::pow(y, kPow[a][1] + kPow[b][1]);
        }
      gram[a][b] = acc;
    }
  const auto inv = detail::invert6(gram);

  const std::size_t h = img.height, w = img.width;
  const std::array<const std::vector<double>*, 3> kx{&g, &gx, &gxx};
  std::array<std::vector<double>, 3> rows;
  for (int i = 0; i < 3; ++i) rows[i] = detail::correlate(img.pixels, h, w, *kx[i], true);
  std::array<std::vector<double>, 6> moments;
  for (int a = 0; a < 6; ++a) {
    moments[a] = detail::correlate(rows[kPow[a][0]], h, w, *kx[kPow[a][1]], false);
  }

  PolyCoeffs out;
  out.height = h;
  out.width = w;
  for (auto* v : {&out.a11, &out.a12, &out.a22, &out.b1, &out.b2, &out.c}) v->resize(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    std::array<double, 6> coef{};
    for (int a = 0; a < 6; ++a) {
      double acc = 0.0;
      for (int b = 0; b < 6; ++b) acc += inv[a][b] * moments[b][i];
      coef[a] = acc;
    }
    out.c[i] = coef[0];
    out.b1[i] = coef[1];
    out.b2[i] = coef[2];
    out.a11[i] = coef[3];
    out.a22[i] = coef[4];
    out.a12[i] = 0.5 * coef[5];
  }
  return out;
}

namespace detail {

// Iterative displacement refinement at one pyramid level.
inline void refine_level(const PolyCoeffs& p1, const PolyCoeffs& p2, FlowField& flow, const FlowParams& params) {
  const std::size_t h = p1.height, w = p1.width, n = h * w;
  const double win_sigma = 0.3 * ((params.window_size - 1) * 0.5 - 1.0) + 0.8;
  const auto wk = gaussian_kernel(params.window_size / 2, win_sigma);
  std::array<std::vector<double>, 5> terms;
  for (auto& t : terms) t.assign(n, 0.0);
  for (int it = 0; it < params.iterations; ++it) {
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = y * w + x;
        const double dx = flow.dx[i], dy = flow.dy[i];
        const double sy = static_cast<double>(y) + dy, sx = static_cast<double>(x) + dx;
        const double a11 = 0.5 * (p1.a11[i] + bilinear(p2.a11, h, w, sy, sx));
        const double a12 = 0.5 * (p1.a12[i] + bilinear(p2.a12, h, w, sy, sx));
        const double a22 = 0.5 * (p1.a22[i] + bilinear(p2.a22, h, w, sy, sx));
        const double db1 = -0.5 * (bilinear(p2.b1, h, w, sy, sx) - p1.b1[i]) + a11 * dx + a12 * dy;
        const double db2 = -0.5 * (bilinear(p2.b2, h, w, sy, sx) - p1.b2[i]) + a12 * dx + a22 * dy;
        terms[0][i] = a11 * a11 + a12 * a12;
        terms[1][i] = a12 * (a11 + a22);
        terms[2][i] = a12 * a12 + a22 * a22;
        terms[3][i] = a11 * db1 + a12 * db2;
        terms[4][i] = a12 * db1 + a22 * db2;
      }
    std::array<std::vector<double>, 5> agg;
    for (int k = 0; k < 5; ++k) agg[k] = correlate(correlate(terms[k], h, w, wk, true), h, w, wk, false);
    for (std::size_t i = 0; i < n; ++i) {
      const double g11 = agg[0][i], g12 = agg[1][i], g22 = agg[2][i];
      const double det = g11 * g22 - g12 * g12;
      const double scale = g11 * g22 + g12 * g12 + 1e-30;
      if (std::abs(det) < 1e-9 * scale) continue;
      flow.dx[i] = (g22 * agg[3][i] - g12 * agg[4][i]) / det;
      flow.dy[i] = (g11 * agg[4][i] - g12 * agg[3][i]) / det;
    }
  }
}

}  // namespace detail

/// Flow from `prev` to `next`: prev(p) ~ next(p + flow(p)).
inline FlowField estimate_flow_pair(const GrayImage& prev, const GrayImage& next, const FlowParams& params,
                                    const std::optional<FlowField>& init = std::nullopt) {
  params.validate();
  if (prev.height != next.height || prev.width != next.width) {
    throw std::invalid_argument("estimate_flow_pair: frame sizes differ (" + std::to_string(prev.height) + "x" +
                                std::to_string(prev.width) + " vs " + std::to_string(next.height) + "x" +
                                std::to_string(next.width) + ")");
  }
  if (init && (init->height != prev.height || init->width != prev.width)) {
    throw std::invalid_argument("estimate_flow_pair: initial flow does not match frame size");
  }
  const int top = params.pyramid_levels - 1;
  const std::size_t coarse_h = params.level_extent(prev.height, top);
  const std::size_t coarse_w = params.level_extent(prev.width, top);
  if (coarse_h < static_cast<std::size_t>(params.poly_n) || coarse_w < static_cast<std::size_t>(params.poly_n)) {
    throw std::invalid_argument("estimate_flow_pair: coarsest pyramid level " + std::to_string(coarse_h) + "x" +
                                std::to_string(coarse_w) + " is smaller than poly_n " +
                                std::to_string(params.poly_n));
  }

  std::vector<GrayImage> pyr1{prev}, pyr2{next};
  for (int l = 1; l <= top; ++l) {
    const std::size_t lh = params.level_extent(prev.height, l), lw = params.level_extent(prev.width, l);
    pyr1.push_back(detail::downscale(prev, lh, lw, std::pow(params.pyramid_scale, l)));
    pyr2.push_back(detail::downscale(next, lh, lw, std::pow(params.pyramid_scale, l)));
  }

  FlowField flow = init ? detail::resize_flow(*init, coarse_h, coarse_w) : FlowField(coarse_h, coarse_w);
  for (int l = top; l >= 0; --l) {
    const auto& a = pyr1[static_cast<std::size_t>(l)];
    if (flow.height != a.height || flow.width != a.width) flow = detail::resize_flow(flow, a.height, a.width);
    const auto p1 = polynomial_expansion(a, params.poly_n, params.poly_sigma);
    const auto p2 = polynomial_expansion(pyr2[static_cast<std::size_t>(l)], params.poly_n, params.poly_sigma);
    detail::refine_level(p1, p2, flow, params);
  }
  return flow;
}

/// Consecutive-pair flows; each pair is warm-started from its predecessor.
inline std::vector<FlowField> flow_sequence(const FrameSequence& seq, const FlowParams& params) {
  if (seq.size() < 2) {
    throw std::invalid_argument("flow_sequence: need at least 2 frames, got " + std::to_string(seq.size()));
  }
  seq.validate();
  std::vector<FlowField> flows;
  flows.reserve(seq.size() - 1);
  std::optional<FlowField> warm;
  for (std::size_t k = 0; k + 1 < seq.size(); ++k) {
    flows.push_back(estimate_flow_pair(seq.frames[k], seq.frames[k + 1], params, warm));
    warm = flows.back();
  }
  return flows;
}

}  // namespace avss::flow
