// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "avss/numerics/tensor.hpp"

namespace avss {

template <typename T>
struct AdamWOptions {
  T lr = T(1e-4);
  T weight_decay = T(1e-2);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

/// AdamW with decoupled weight decay. Moment buffers are allocated per
/// parameter at construction and keep the parameter's shape.
template <typename T>
class AdamW {
 public:
  AdamW(NamedTensors<T> params, AdamWOptions<T> options = {})
      : params_(std::move(params)), options_(options) {
    for (const auto& p : params_) {
      first_.emplace_back(p.value.size(), T(0));
      second_.emplace_back(p.value.size(), T(0));
    }
  }

  /// One update from the parameters' current gradients. Gradients are left
  /// untouched.
  void step() {
    for (const auto& p : params_) {
      if (!p.value.has_grad()) {
        throw ContractError("adamw_step: parameter '" + p.name + "' has no gradient");
      }
    }
    ++step_count_;
    const T b1 = options_.beta1, b2 = options_.beta2;
    const T correction1 = T(1) - std::pow(b1, static_cast<T>(step_count_));
    const T correction2 = T(1) - std::pow(b2, static_cast<T>(step_count_));
    const T decay = T(1) - options_.lr * options_.weight_decay;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto w = params_[i].value.mutable_data();
      const auto g = params_[i].value.grad();
      auto& m = first_[i];
      auto& v = second_[i];
      for (std::size_t j = 0; j < w.size(); ++j) {
        w[j] *= decay;
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
        const T m_hat = m[j] / correction1;
        const T v_hat = v[j] / correction2;
        w[j] -= options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
  }

  T lr() const { return options_.lr; }
  void set_lr(T lr) { options_.lr = lr; }
  const AdamWOptions<T>& options() const { return options_; }

  std::uint64_t step_count() const { return step_count_; }
  void set_step_count(std::uint64_t n) { step_count_ = n; }

  const NamedTensors<T>& parameters() const { return params_; }
  std::vector<T>& first_moment(std::size_t i) { return first_[i]; }
  std::vector<T>& second_moment(std::size_t i) { return second_[i]; }

 private:
  NamedTensors<T> params_;
  AdamWOptions<T> options_;
  std::vector<std::vector<T>> first_;
  std::vector<std::vector<T>> second_;
  std::uint64_t step_count_ = 0;
};

/// Learning rate halved every `halving_interval` iterations.
template <typename T>
T halving_schedule(T base_lr, std::uint64_t iteration, std::uint64_t halving_interval) {
  return base_lr * std::pow(T(0.5), static_cast<T>(iteration / halving_interval));
}

}  // namespace avss
