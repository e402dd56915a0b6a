// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// U-Net mask estimator over [B, 2, F, T] spectrograms (channel 0 real,
// channel 1 imaginary). The fused feature enters at the bottleneck only.

#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "avss/networks/config.hpp"
#include "avss/networks/encoders.hpp"

namespace avss::networks {

template <typename T>
struct Encoded {
  Tensor<T> f_a;               // [B, C, F', T']
  std::vector<Tensor<T>> skips;  // skips[l]: input of encoder level l
};

/// Nearest-neighbour x2 upsampling of the last two axes.
template <typename T>
Tensor<T> upsample2(const Tensor<T>& x) {
  auto doubled = [](std::size_t n) {
    std::vector<std::size_t> idx(2 * n);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i / 2;
    return idx;
  };
  const std::size_t r = x.rank();
  return index_select(index_select(x, r - 2, doubled(x.extent(r - 2))), r - 1, doubled(x.extent(r - 1)));
}

template <typename T>
struct SeparatorUNet {
  ModelConfig config;
  std::vector<ConvBnBlock<T>> encoder;
  std::vector<ConvBnBlock<T>> decoder;  // decoder[l] mirrors encoder[l]
  Conv<T> head;

  SeparatorUNet() = default;
  SeparatorUNet(const ModelConfig& cfg, std::mt19937_64& rng) : config(cfg) {
    const std::size_t L = cfg.unet_depth, base = cfg.base_channels;
    auto enc_in = [&](std::size_t l) { return l == 0 ? std::size_t{2} : base << (l - 1); };
    for (std::size_t l = 0; l < L; ++l) {
      encoder.emplace_back(Conv<T>(2, enc_in(l), base << l, {3, 3}, ConvSpec{{2, 2}, {1, 1}, {}}, rng, false),
                           T(0.2));
    }
    decoder.resize(L);
    for (std::size_t l = L; l-- > 0;) {
      const std::size_t in = (l == L - 1 ? cfg.bottleneck_channels() + cfg.visual_channels : base << l) + enc_in(l);
      const std::size_t out = l == 0 ? base : base << (l - 1);
      decoder[l] = ConvBnBlock<T>(Conv<T>(2, in, out, {3, 3}, ConvSpec{{1, 1}, {1, 1}, {}}, rng, false));
    }
    head = Conv<T>(2, base, 2, {1, 1}, {}, rng);
  }

  /// x_a [B, 2, F, T] -> bottleneck and skips; F and T are zero-padded up to
  /// multiples of 2^L first.
  Encoded<T> encode(const Tensor<T>& x_a, NormMode mode) {
    const Shape& s = x_a.shape();
    const std::size_t f = config.freq_bins(), t = config.spec_frames();
    if (s.size() != 4 || s[1] != 2 || s[2] != f || s[3] != t) {
      throw DimensionError("encode_audio: expected [B, 2, " + std::to_string(f) + ", " + std::to_string(t) +
                           "], got " + to_string(s));
    }
    Tensor<T> y = pad(pad(x_a, 2, 0, config.padded_freq() - f), 3, 0, config.padded_frames() - t);
    Encoded<T> out;
    for (auto& level : encoder) {
      out.skips.push_back(y);
      y = level(y, mode);
    }
    out.f_a = y;
    return out;
  }

  /// f_avm [B, C + K_v, F', T'] -> bounded complex mask [B, 2, F, T].
  Tensor<T> decode(const Tensor<T>& f_avm, const std::vector<Tensor<T>>& skips, NormMode mode) {
    const Shape& s = f_avm.shape();
    const std::size_t ch = config.bottleneck_channels() + config.visual_channels;
    if (s.size() != 4 || s[1] != ch || s[2] != config.bottleneck_freq() || s[3] != config.bottleneck_frames()) {
      throw DimensionError("decode_mask: expected [B, " + std::to_string(ch) + ", " +
                           std::to_string(config.bottleneck_freq()) + ", " +
                           std::to_string(config.bottleneck_frames()) + "], got " + to_string(s));
    }
    if (skips.size() != decoder.size()) {
      throw DimensionError("decode_mask: expected " + std::to_string(decoder.size()) + " skips, got " +
                           std::to_string(skips.size()));
    }
    Tensor<T> y = f_avm;
    for (std::size_t l = decoder.size(); l-- > 0;) {
      y = upsample2(y);
      if (y.extent(2) != skips[l].extent(2) || y.extent(3) != skips[l].extent(3) || y.extent(0) != skips[l].extent(0)) {
        throw DimensionError("decode_mask: skip " + std::to_string(l) + " has shape " + to_string(skips[l].shape()) +
                             ", decoder feature " + to_string(y.shape()));
      }
      y = decoder[l](concat<T>({y, skips[l]}, 1), mode);
    }
    y = complex_tanh_bound(head(y), static_cast<T>(config.clip_bound));
    return slice(slice(y, 2, 0, config.freq_bins()), 3, 0, config.spec_frames());
  }

  /// Zero head weights with bias (atanh(1 / clip), 0): every cell of the mask
  /// becomes exactly 1 + 0i.
  void rig_unit_mask() {
    for (T& w : head.weight.mutable_data()) w = T(0);
    auto b = head.bias.mutable_data();
    b[0] = static_cast<T>(std::atanh(1.0 / config.clip_bound));
    b[1] = T(0);
  }

  void collect(const std::string& prefix, StateDict<T>& out) const {
    for (std::size_t l = 0; l < encoder.size(); ++l) encoder[l].collect(join(prefix, "enc" + std::to_string(l)), out);
    for (std::size_t l = 0; l < decoder.size(); ++l) decoder[l].collect(join(prefix, "dec" + std::to_string(l)), out);
    head.collect(join(prefix, "head"), out);
  }
};

}  // namespace avss::networks
