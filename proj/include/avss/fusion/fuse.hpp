// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "avss/fusion/cma.hpp"
#include "avss/fusion/film.hpp"
#include "avss/fusion/tcn.hpp"

namespace avss::fusion {

using avss::to_string;

enum class FusionMode { kCrossModal, kConcatenation, kAddition, kLipOnly };

inline std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::kCrossModal: return "cross_modal";
    case FusionMode::kConcatenation: return "concatenation";
    case FusionMode::kAddition: return "addition";
    case FusionMode::kLipOnly: return "lip_only";
  }
  return "?";
}

inline FusionMode parse_fusion_mode(const std::string& s) {
  if (s == "cross_modal") return FusionMode::kCrossModal;
  if (s == "concatenation" || s == "concat") return FusionMode::kConcatenation;
  if (s == "addition" || s == "add") return FusionMode::kAddition;
  if (s == "lip_only") return FusionMode::kLipOnly;
  throw std::invalid_argument("unknown fusion mode '" + s +
                              "' (expected cross_modal, concatenation, addition or lip_only)");
}

inline bool uses_motion(FusionMode m) { return m != FusionMode::kLipOnly; }

struct FusionConfig {
  FusionMode mode = FusionMode::kCrossModal;
  bool cma_enabled = true;
  std::size_t visual_channels = 64;  // K_v
  std::size_t motion_dim = 64;       // K_o
  std::size_t motion_channels = 0;   // C_m
  std::size_t motion_frames = 0;     // T_m
  std::size_t visual_frames = 25;    // T_v
  std::size_t audio_channels = 0;    // C
  std::size_t audio_freq = 0;        // F'
  std::size_t audio_frames = 0;      // T'
  std::size_t tcn_depth = 2;
  std::size_t tcn_kernel = 3;
  std::size_t cma_dim = 32;
  std::size_t cma_heads = 1;

  bool attention_active() const { return mode == FusionMode::kCrossModal && cma_enabled; }
  std::size_t output_channels() const { return audio_channels + visual_channels; }
};

template <typename T>
struct FusedFeature {
  Tensor<T> f_vm;   // [B, K_v, T_v]
  Tensor<T> f_avm;  // [B, C + K_v, F', T']
  std::optional<Tensor<T>> attention;
};

/// Nearest-in-time source frame for each of `out` positions over `in` frames.
inline std::vector<std::size_t> tiling_indices(std::size_t in, std::size_t out) {
  std::vector<std::size_t> idx(out);
  for (std::size_t t = 0; t < out; ++t) {
    idx[t] = std::min(in - 1, static_cast<std::size_t>((static_cast<double>(t) + 0.5) * static_cast<double>(in) /
                                                       static_cast<double>(out)));
  }
  return idx;
}

/// Visual/motion fusion followed by joint audio-visual feature assembly.
/// cross_modal  : FiLM(f_v | f_m) -> TCN -> CMA (optional)
/// concatenation: 1x1 conv over [f_v; f_m] -> TCN
/// addition     : TCN(f_v + f_m)
/// lip_only     : TCN(f_v)
template <typename T>
struct Fusion {
  FusionConfig config;
  MotionProjector<T> motion;
  FilmGenerator<T> film;
  Conv<T> concat_proj;
  TcnStack<T> tcn;
  CmaLayer<T> cma;

  Fusion() = default;
  Fusion(const FusionConfig& c, std::mt19937_64& rng) : config(c) {
    if (c.mode == FusionMode::kAddition && c.motion_dim != c.visual_channels) {
      throw DimensionError("fusion: addition mode needs K_o == K_v, got " + std::to_string(c.motion_dim) +
                           " and " + std::to_string(c.visual_channels));
    }
    if (uses_motion(c.mode)) motion = MotionProjector<T>(c.motion_channels, c.motion_frames, c.motion_dim, rng);
    if (c.mode == FusionMode::kCrossModal) film = FilmGenerator<T>(c.motion_dim, c.visual_channels, rng);
    if (c.mode == FusionMode::kConcatenation) {
      concat_proj = Conv<T>(1, c.visual_channels + c.motion_dim, c.visual_channels, {1}, {}, rng);
    }
    tcn = TcnStack<T>(c.visual_channels, c.tcn_depth, c.tcn_kernel, rng);
    if (c.attention_active()) {
      cma = CmaLayer<T>(CmaShape{c.visual_channels, c.visual_frames, c.audio_channels, c.audio_freq,
                                 c.audio_frames, c.cma_dim, c.cma_heads},
                        rng);
    }
  }

  /// f_v [B, K_v, T_v]; f_m_raw [B, C_m, T_m] (ignored in lip_only mode);
  /// f_a [B, C, F', T'].
  FusedFeature<T> operator()(const Tensor<T>& f_v, const Tensor<T>& f_m_raw, const Tensor<T>& f_a, NormMode mode) {
    const auto& c = config;
    if (f_v.rank() != 3 || f_v.extent(1) != c.visual_channels || f_v.extent(2) != c.visual_frames) {
      throw DimensionError("fuse: lip feature " + to_string(f_v.shape()) + " does not match [B, " +
                           std::to_string(c.visual_channels) + ", " + std::to_string(c.visual_frames) + "]");
    }
    if (f_a.rank() != 4 || f_a.extent(0) != f_v.extent(0) || f_a.extent(1) != c.audio_channels ||
        f_a.extent(2) != c.audio_freq || f_a.extent(3) != c.audio_frames) {
      throw DimensionError("fuse: audio bottleneck " + to_string(f_a.shape()) + " does not match [B, " +
                           std::to_string(c.audio_channels) + ", " + std::to_string(c.audio_freq) + ", " +
                           std::to_string(c.audio_frames) + "]");
    }
    FusedFeature<T> out;
    Tensor<T> visual;
    switch (c.mode) {
      case FusionMode::kCrossModal: visual = film(f_v, motion(f_m_raw)); break;
      case FusionMode::kConcatenation: {
        const auto f_m = broadcast_channels(motion(f_m_raw), Shape{f_v.extent(0), c.motion_dim, c.visual_frames});
        visual = concat_proj(concat<T>({f_v, f_m}, 1));
        break;
      }
      case FusionMode::kAddition: visual = add(f_v, broadcast_channels(motion(f_m_raw), f_v.shape())); break;
      case FusionMode::kLipOnly: visual = f_v; break;
    }
    out.f_vm = tcn(visual, mode);
    if (c.attention_active()) {
      auto att = cma(out.f_vm, f_a);
      out.f_vm = att.output;
      out.attention = att.weights;
    }
    out.f_avm = concat<T>({f_a, tile(out.f_vm)}, 1);
    return out;
  }

  /// [B, K_v, T_v] -> [B, K_v, F', T'] by nearest-in-time frame repetition.
  Tensor<T> tile(const Tensor<T>& f_vm) const {
    const auto& c = config;
    const std::size_t b = f_vm.extent(0);
    const auto in_time = index_select(f_vm, 2, tiling_indices(c.visual_frames, c.audio_frames));
    return expand(reshape(in_time, {b, c.visual_channels, 1, c.audio_frames}),
                  {b, c.visual_channels, c.audio_freq, c.audio_frames});
  }

  void collect(const std::string& prefix, StateDict<T>& out) const {
    if (uses_motion(config.mode)) motion.collect(join(prefix, "motion"), out);
    if (config.mode == FusionMode::kCrossModal) film.collect(join(prefix, "film"), out);
    if (config.mode == FusionMode::kConcatenation) concat_proj.collect(join(prefix, "concat"), out);
    tcn.collect(join(prefix, "tcn"), out);
    if (config.attention_active()) cma.collect(join(prefix, "cma"), out);
  }
};

}  // namespace avss::fusion
