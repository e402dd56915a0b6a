// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <random>
#include <string>
#include <vector>

#include "avss/numerics/layers.hpp"

namespace avss::fusion {

/// y = x + relu(BN(conv1d_dilated(x))), non-causal and length-preserving.
/// The convolution carries no bias since batch norm removes it.
template <typename T>
struct TcnBlock {
  Conv<T> conv;
  BatchNorm<T> bn;

  TcnBlock() = default;
  TcnBlock(std::size_t width, std::size_t kernel, std::size_t dilation, std::mt19937_64& rng)
      : conv(1, width, width, {kernel}, ConvSpec{{1}, {dilation * (kernel - 1) / 2}, {dilation}}, rng, false),
        bn(width) {
    if (kernel % 2 == 0) throw DimensionError("TcnBlock: kernel size must be odd to preserve length");
  }

  Tensor<T> operator()(const Tensor<T>& x, NormMode mode) { return add(x, relu(bn(conv(x), mode))); }

  void collect(const std::string& prefix, StateDict<T>& out) const {
    conv.collect(join(prefix, "conv"), out);
    bn.collect(join(prefix, "bn"), out);
  }
};

/// Blocks with dilations 1, 2, 4, ... at constant channel width.
template <typename T>
struct TcnStack {
  std::size_t width = 0;
  std::vector<TcnBlock<T>> blocks;

  TcnStack() = default;
  TcnStack(std::size_t width_, std::size_t depth, std::size_t kernel, std::mt19937_64& rng) : width(width_) {
    for (std::size_t i = 0; i < depth; ++i) blocks.emplace_back(width, kernel, std::size_t{1} << i, rng);
  }

  /// f [B, K_v, T_v] -> [B, K_v, T_v].
  Tensor<T> operator()(const Tensor<T>& f, NormMode mode) {
    if (f.rank() != 3 || f.extent(1) != width) {
      throw DimensionError("tcn_apply: input " + to_string(f.shape()) + " does not match stack width " +
                           std::to_string(width));
    }
    Tensor<T> y = f;
    for (auto& b : blocks) y = b(y, mode);
    return y;
  }

  void collect(const std::string& prefix, StateDict<T>& out) const {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(join(prefix, "block" + std::to_string(i)), out);
  }
};

}  // namespace avss::fusion
