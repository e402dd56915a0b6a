// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Visual encoders: the lip network over gray frame stacks and the motion
// network over optical-flow stacks.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "avss/networks/config.hpp"
#include "avss/numerics/layers.hpp"

namespace avss::networks {

/// Conv (no bias) -> batch norm -> activation.
template <typename T>
struct ConvBnBlock {
  Conv<T> conv;
  BatchNorm<T> bn;
  T leak = T(0);  // 0 gives relu

  ConvBnBlock() = default;
  ConvBnBlock(Conv<T> c, T leak_ = T(0)) : conv(std::move(c)), bn(conv.out_channels()), leak(leak_) {}

  Tensor<T> operator()(const Tensor<T>& x, NormMode mode) {
    auto y = bn(conv(x), mode);
    return leak == T(0) ? relu(y) : leaky_relu(y, leak);
  }

  void collect(const std::string& prefix, StateDict<T>& out) const {
    conv.collect(join(prefix, "conv"), out);
    bn.collect(join(prefix, "bn"), out);
  }
};

/// Mean over every axis after the first two: [B, C, ...] -> [B, C].
template <typename T>
Tensor<T> global_average(const Tensor<T>& x) {
  std::vector<std::size_t> window(x.shape().begin() + 2, x.shape().end());
  return reshape(avg_pool(x, window), {x.extent(0), x.extent(1)});
}

/// 3-D front end over (time, y, x), then 2-D blocks per frame, global pooling
/// and a linear head: x_v [B, 1, N, H, W] -> f_v [B, K_v, N].
template <typename T>
struct LipNetwork {
  std::size_t frames = 0, height = 0, width = 0;
  ConvBnBlock<T> front;
  std::vector<ConvBnBlock<T>> trunk;
  Linear<T> head;

  LipNetwork() = default;
  LipNetwork(const ModelConfig& cfg, std::mt19937_64& rng)
      : frames(cfg.frames), height(cfg.height), width(cfg.width) {
    const std::size_t c = cfg.lip_channels;
    front = ConvBnBlock<T>(Conv<T>(3, 1, c, {3, 5, 5}, ConvSpec{{1, 2, 2}, {1, 2, 2}, {}}, rng, false));
    trunk.emplace_back(Conv<T>(2, c, 2 * c, {3, 3}, ConvSpec{{2, 2}, {1, 1}, {}}, rng, false));
    trunk.emplace_back(Conv<T>(2, 2 * c, 2 * c, {3, 3}, ConvSpec{{2, 2}, {1, 1}, {}}, rng, false));
    head = Linear<T>(2 * c, cfg.visual_channels, rng);
  }

  Tensor<T> operator()(const Tensor<T>& x_v, NormMode mode) {
    const Shape& s = x_v.shape();
    if (s.size() != 5 || s[1] != 1 || s[2] != frames || s[3] != height || s[4] != width) {
      throw DimensionError("lip_forward: expected [B, 1, " + std::to_string(frames) + ", " + std::to_string(height) +
                           ", " + std::to_string(width) + "], got " + to_string(s));
    }
    const std::size_t b = s[0];
    auto y = front(x_v, mode);  // [B, c, N, H/2, W/2]
    const std::size_t h2 = y.extent(3) / 2, w2 = y.extent(4) / 2;
    y = avg_pool(y, {1, 2, 2});
    const std::size_t c = y.extent(1);
    y = reshape(permute(y, {0, 2, 1, 3, 4}), {b * frames, c, h2, w2});
    for (auto& blk : trunk) y = blk(y, mode);
    auto f = head(global_average(y));  // [B * N, K_v]
    return permute(reshape(f, {b, frames, head.out_features()}), {0, 2, 1});
  }

  void collect(const std::string& prefix, StateDict<T>& out) const {
    front.collect(join(prefix, "front"), out);
    for (std::size_t i = 0; i < trunk.size(); ++i) trunk[i].collect(join(prefix, "trunk" + std::to_string(i)), out);
    head.collect(join(prefix, "head"), out);
  }
};

/// 3-D convolution whose kernel starts as a 2-D kernel replicated over time
/// and divided by the temporal extent.
template <typename T>
Conv<T> inflated_conv(std::size_t cin, std::size_t cout, std::size_t kt, std::size_t k, ConvSpec spec,
                      std::mt19937_64& rng) {
  Conv<T> planar(2, cin, cout, {k, k}, {}, rng, false);
  Conv<T> conv(3, cin, cout, {kt, k, k}, std::move(spec), rng, false);
  auto w = conv.weight.mutable_data();
  const auto p = planar.weight.data();
  for (std::size_t oi = 0; oi < cout * cin; ++oi)
    for (std::size_t t = 0; t < kt; ++t)
      for (std::size_t j = 0; j < k * k; ++j) w[(oi * kt + t) * k * k + j] = p[oi * k * k + j] / static_cast<T>(kt);
  return conv;
}

/// Inflated 3-D trunk over flow stacks: x_m [B, 2, N-1, H, W] ->
/// f_m_raw [B, C_m, T_m].
template <typename T>
struct MotionNetwork {
  std::size_t steps = 0, height = 0, width = 0;
  std::vector<ConvBnBlock<T>> trunk;

  MotionNetwork() = default;
  MotionNetwork(const ModelConfig& cfg, std::mt19937_64& rng)
      : steps(cfg.frames - 1), height(cfg.height), width(cfg.width) {
    const std::size_t c = cfg.motion_channels;
    const std::size_t mid = std::max<std::size_t>(1, c / 2);
    trunk.emplace_back(inflated_conv<T>(2, mid, 3, 3, ConvSpec{{1, 2, 2}, {1, 1, 1}, {}}, rng));
    trunk.emplace_back(inflated_conv<T>(mid, c, 3, 3, ConvSpec{{2, 2, 2}, {1, 1, 1}, {}}, rng));
  }

  Tensor<T> operator()(const Tensor<T>& x_m, NormMode mode) {
    const Shape& s = x_m.shape();
    if (s.size() != 5 || s[1] != 2 || s[2] != steps || s[3] != height || s[4] != width) {
      throw DimensionError("motion_forward: expected [B, 2, " + std::to_string(steps) + ", " +
                           std::to_string(height) + ", " + std::to_string(width) + "], got " + to_string(s));
    }
    Tensor<T> y = x_m;
    for (auto& blk : trunk) y = blk(y, mode);
    // Pool space, keep time.
    const std::size_t b = y.extent(0), c = y.extent(1), t = y.extent(2);
    return reshape(avg_pool(y, {y.extent(3), y.extent(4)}), {b, c, t});
  }

  void collect(const std::string& prefix, StateDict<T>& out) const {
    for (std::size_t i = 0; i < trunk.size(); ++i) trunk[i].collect(join(prefix, "trunk" + std::to_string(i)), out);
  }
};

}  // namespace avss::networks
