// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <random>
#include <string>

#include "avss/numerics/layers.hpp"

namespace avss::fusion {

struct CmaShape {
  std::size_t visual_channels = 0;  // K_v
  std::size_t visual_frames = 0;    // T_v
  std::size_t audio_channels = 0;   // C
  std::size_t audio_freq = 0;       // F'
  std::size_t audio_frames = 0;     // T'
  std::size_t dim = 0;              // d
  std::size_t heads = 1;
};

template <typename T>
struct CmaOutput {
  Tensor<T> output;   // [B, K_v, T_v]
  Tensor<T> weights;  // [B * heads, T_v, T_v], rows sum to 1
};

/// Cross-modal attention: lambda * softmax(Q K^T / sqrt(d)) V + f_vm, with
/// queries and keys from the visual tokens and values from the audio tokens.
template <typename T>
struct CmaLayer {
  CmaShape shape;
  Tensor<T> lambda_gate;  // [1], starts at 0
  Conv<T> q_proj, k_proj, v_proj, out_proj;
  Linear<T> token_pool;  // F' * T' audio tokens -> T_v positions

  CmaLayer() = default;
  CmaLayer(const CmaShape& s, std::mt19937_64& rng) : shape(s) {
    if (s.dim == 0 || s.heads == 0 || s.dim % s.heads != 0) {
      throw DimensionError("CmaLayer: dim " + std::to_string(s.dim) + " must be a positive multiple of heads " +
                           std::to_string(s.heads));
    }
    lambda_gate = constant_parameter<T>({1}, T(0));
    q_proj = Conv<T>(2, s.visual_channels, s.dim, {1, 1}, {}, rng);
    // A key bias shifts every score of a row equally, which softmax ignores.
    k_proj = Conv<T>(2, s.visual_channels, s.dim, {1, 1}, {}, rng, false);
    v_proj = Conv<T>(2, s.audio_channels, s.dim, {1, 1}, {}, rng);
    token_pool = Linear<T>(s.audio_freq * s.audio_frames, s.visual_frames, rng);
    out_proj = Conv<T>(2, s.dim, s.visual_channels, {1, 1}, {}, rng);
  }

  CmaOutput<T> operator()(const Tensor<T>& f_vm, const Tensor<T>& f_a) const {
    const auto& s = shape;
    const Shape& sv = f_vm.shape();
    const Shape& sa = f_a.shape();
    if (sv.size() != 3 || sv[1] != s.visual_channels || sv[2] != s.visual_frames) {
      throw DimensionError("cross_modal_attention: visual tokens " + to_string(sv) + " do not match [B, " +
                           std::to_string(s.visual_channels) + ", " + std::to_string(s.visual_frames) + "]");
    }
    if (sa.size() != 4 || sa[0] != sv[0] || sa[1] != s.audio_channels || sa[2] != s.audio_freq ||
        sa[3] != s.audio_frames) {
      throw DimensionError("cross_modal_attention: audio tokens " + to_string(sa) + " do not match [" +
                           std::to_string(sv[0]) + ", " + std::to_string(s.audio_channels) + ", " +
                           std::to_string(s.audio_freq) + ", " + std::to_string(s.audio_frames) + "]");
    }
    const std::size_t b = sv[0], tv = s.visual_frames, h = s.heads, dh = s.dim / s.heads;
    const auto visual = reshape(f_vm, {b, s.visual_channels, 1, tv});

    // [B, d, ..., T_v] -> [B * heads, T_v, d / heads]
    auto split_heads = [&](const Tensor<T>& x) {
      return reshape(permute(reshape(x, {b, h, dh, tv}), {0, 1, 3, 2}), {b * h, tv, dh});
    };
    const auto q = split_heads(q_proj(visual));
    const auto k = split_heads(k_proj(visual));
    const auto v_tokens = reshape(v_proj(f_a), {b * s.dim, s.audio_freq * s.audio_frames});
    const auto v = split_heads(token_pool(v_tokens));

    const auto scores = scale(matmul(q, permute(k, {0, 2, 1})), T(1) / std::sqrt(static_cast<T>(dh)));
    auto weights = softmax(scores, 2);
    const auto attended = matmul(weights, v);  // [B * heads, T_v, dh]
    const auto merged = reshape(permute(reshape(attended, {b, h, tv, dh}), {0, 1, 3, 2}), {b, s.dim, 1, tv});
    const auto projected = reshape(out_proj(merged), {b, s.visual_channels, tv});
    const auto gate = expand(reshape(lambda_gate, {1, 1, 1}), projected.shape());
    return {add(mul(gate, projected), f_vm), weights};
  }

  void collect(const std::string& prefix, StateDict<T>& out) const {
    out.param(join(prefix, "lambda"), lambda_gate);
    q_proj.collect(join(prefix, "q_proj"), out);
    k_proj.collect(join(prefix, "k_proj"), out);
    v_proj.collect(join(prefix, "v_proj"), out);
    token_pool.collect(join(prefix, "token_pool"), out);
    out_proj.collect(join(prefix, "out_proj"), out);
  }
};

}  // namespace avss::fusion
