// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Parameterized building blocks shared by the fusion layers and networks.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "avss/numerics/ops.hpp"

namespace avss {

/// Trainable parameters plus non-trainable buffers (batch-norm statistics),
/// both keyed by dotted names. Tensors share storage with the owning layer.
template <typename T>
struct StateDict {
  NamedTensors<T> params;
  NamedTensors<T> buffers;

  void param(const std::string& name, const Tensor<T>& t) { params.push_back({name, t}); }
  void buffer(const std::string& name, const Tensor<T>& t) { buffers.push_back({name, t}); }
};

inline std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

/// Uniform draw in [lo, hi) from the top 53 bits of a 64-bit engine; keeps
/// initialization identical across standard-library implementations.
inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename T>
Tensor<T> uniform_parameter(const Shape& shape, double bound, std::mt19937_64& rng) {
  std::vector<T> v(numel(shape));
  for (T& x : v) x = static_cast<T>(uniform(rng, -bound, bound));
  return Tensor<T>::parameter(shape, std::move(v));
}

template <typename T>
Tensor<T> constant_parameter(const Shape& shape, T value) {
  return Tensor<T>::parameter(shape, std::vector<T>(numel(shape), value));
}

/// y = x W^T + b over the last axis of a rank-2 input.
template <typename T>
struct Linear {
  Tensor<T> weight;  // [out, in]
  Tensor<T> bias;    // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng, bool with_bias = true) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight = uniform_parameter<T>({out, in}, bound, rng);
    if (with_bias) bias = uniform_parameter<T>({out}, bound, rng);
  }

  std::size_t in_features() const { return weight.extent(1); }
  std::size_t out_features() const { return weight.extent(0); }

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }

  void collect(const std::string& prefix, StateDict<T>& out) const {
    out.param(join(prefix, "weight"), weight);
    if (bias.defined()) out.param(join(prefix, "bias"), bias);
  }
};

/// N-d convolution layer with uniform fan-in initialization.
template <typename T>
struct Conv {
  Tensor<T> weight;  // [cout, cin, k...]
  Tensor<T> bias;    // [cout]
  ConvSpec spec;
  std::size_t dims = 2;

  Conv() = default;
  Conv(std::size_t dims_, std::size_t cin, std::size_t cout, const std::vector<std::size_t>& kernel,
       ConvSpec spec_, std::mt19937_64& rng, bool with_bias = true)
      : spec(std::move(spec_)), dims(dims_) {
    if (kernel.size() != dims) throw DimensionError("Conv: kernel rank must equal dims");
    Shape shape{cout, cin};
    std::size_t fan_in = cin;
    for (std::size_t k : kernel) {
      shape.push_back(k);
      fan_in *= k;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    weight = uniform_parameter<T>(shape, bound, rng);
    if (with_bias) bias = uniform_parameter<T>({cout}, bound, rng);
  }

  std::size_t in_channels() const { return weight.extent(1); }
  std::size_t out_channels() const { return weight.extent(0); }

  Tensor<T> operator()(const Tensor<T>& x) const { return conv_nd(x, weight, bias, spec, dims); }

  void collect(const std::string& prefix, StateDict<T>& out) const {
    out.param(join(prefix, "weight"), weight);
    if (bias.defined()) out.param(join(prefix, "bias"), bias);
  }
};

template <typename T>
struct BatchNorm {
  Tensor<T> gamma;
  Tensor<T> beta;
  BatchNormState<T> state;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels)
      : gamma(constant_parameter<T>({channels}, T(1))), beta(constant_parameter<T>({channels}, T(0))),
        state(channels) {}

  Tensor<T> operator()(const Tensor<T>& x, NormMode mode) { return batch_norm(x, gamma, beta, state, mode); }

  void collect(const std::string& prefix, StateDict<T>& out) const {
    out.param(join(prefix, "gamma"), gamma);
    out.param(join(prefix, "beta"), beta);
    out.buffer(join(prefix, "running_mean"), state.running_mean);
    out.buffer(join(prefix, "running_var"), state.running_var);
  }
};

/// Broadcasts a per-item channel vector [B, C] over the trailing axes of `like`.
template <typename T>
Tensor<T> broadcast_channels(const Tensor<T>& v, const Shape& like) {
  Shape s(like.size(), 1);
  s[0] = v.extent(0);
  s[1] = v.extent(1);
  return expand(reshape(v, s), like);
}

}  // namespace avss
