// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <random>
#include <string>

#include "avss/numerics/layers.hpp"

namespace avss::fusion {

/// Folds the motion encoder's time axis into its channels and projects the
/// resulting C_m * T_m vector to the motion embedding f_m of width K_o.
template <typename T>
struct MotionProjector {
  std::size_t channels = 0;  // C_m
  std::size_t frames = 0;    // T_m
  Linear<T> proj;

  MotionProjector() = default;
  MotionProjector(std::size_t c_m, std::size_t t_m, std::size_t k_o, std::mt19937_64& rng)
      : channels(c_m), frames(t_m), proj(c_m * t_m, k_o, rng) {}

  /// [B, C_m, T_m] -> [B, C_m * T_m], row-major (channel-major) layout.
  Tensor<T> flatten(const Tensor<T>& f_m_raw) const {
    const Shape& s = f_m_raw.shape();
    if (s.size() != 3 || s[1] != channels || s[2] != frames) {
      throw DimensionError("match_motion_dims: expected [B, " + std::to_string(channels) + ", " +
                           std::to_string(frames) + "], got " + to_string(s));
    }
    return reshape(f_m_raw, {s[0], channels * frames});
  }

  Tensor<T> operator()(const Tensor<T>& f_m_raw) const { return proj(flatten(f_m_raw)); }

  void collect(const std::string& prefix, StateDict<T>& out) const { proj.collect(join(prefix, "proj"), out); }
};

/// FiLM: out = gamma(f_m) * f_v + beta(f_m), broadcast over time.
template <typename T>
struct FilmGenerator {
  Linear<T> gamma_layer;
  Linear<T> beta_layer;

  FilmGenerator() = default;
  FilmGenerator(std::size_t k_o, std::size_t k_v, std::mt19937_64& rng)
      : gamma_layer(k_o, k_v, rng), beta_layer(k_o, k_v, rng) {
    // Start near the identity modulation.
    auto gb = gamma_layer.bias.mutable_data();
    std::fill(gb.begin(), gb.end(), T(1));
    for (auto* w : {&gamma_layer.weight, &beta_layer.weight}) {
      for (T& v : w->mutable_data()) v *= T(0.1);
    }
    auto bb = beta_layer.bias.mutable_data();
    std::fill(bb.begin(), bb.end(), T(0));
  }

  std::size_t input_dim() const { return gamma_layer.in_features(); }
  std::size_t output_dim() const { return gamma_layer.out_features(); }

  /// f_v [B, K_v, T_v], f_m [B, K_o] -> [B, K_v, T_v].
  Tensor<T> operator()(const Tensor<T>& f_v, const Tensor<T>& f_m) const {
    const Shape& sv = f_v.shape();
    const Shape& sm = f_m.shape();
    if (sm.size() != 2 || sm[1] != input_dim()) {
      throw DimensionError("film_modulate: motion feature " + to_string(sm) + " does not match generator input " +
                           std::to_string(input_dim()));
    }
    if (sv.size() != 3 || sv[1] != output_dim() || sv[0] != sm[0]) {
      throw DimensionError("film_modulate: lip feature " + to_string(sv) + " does not match generator output " +
                           std::to_string(output_dim()) + " for batch " + std::to_string(sm[0]));
    }
    const auto g = broadcast_channels(gamma_layer(f_m), sv);
    const auto b = broadcast_channels(beta_layer(f_m), sv);
    return add(mul(g, f_v), b);
  }

  void collect(const std::string& prefix, StateDict<T>& out) const {
    gamma_layer.collect(join(prefix, "gamma"), out);
    beta_layer.collect(join(prefix, "beta"), out);
  }
};

}  // namespace avss::fusion
