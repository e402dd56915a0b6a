// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "avss/numerics/tensor.hpp"

namespace avss {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // name of the parameter with the largest error
  std::size_t checked = 0;
  std::size_t skipped = 0;  // coordinates left out as sitting on a kink
};

struct GradCheckOptions {
  double step = 1e-5;
  /// When positive, the numeric gradient is the Richardson extrapolation
  /// (4 D(h) - D(2h)) / 3 of central differences at h = `step` and 2h. The
  /// stencil is taken to straddle a relu kink when D(h) and D(2h) disagree,
  /// or when the second difference S(t) = (f(x+t) - 2 f(x) + f(x-t)) / t
  /// fails S(2h) = 2 S(h), by more than kink_tolerance * (1 + |D(h)|), plus
  /// the roundoff floor of S in the second test. The second test catches
  /// kinks much closer than h, which bias D(h) and D(2h) alike. A kinked
  /// coordinate is retried at steps 10 to 10^4 times smaller and skipped if
  /// every stencil is kinked.
  double kink_tolerance = 0.0;
};

/// Compares reverse-mode gradients of a scalar loss against central finite
/// differences, one perturbed element at a time. The relative error of a
/// parameter is ||autodiff - numeric|| / max(||autodiff||, ||numeric||, 1e-6).
inline GradCheckResult gradient_check(const std::function<Tensor<double>()>& loss_fn, NamedTensors<double> params,
                                      GradCheckOptions options = {}) {
  for (auto& p : params) p.value.zero_grad();
  backward(loss_fn());
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) {
    analytic.emplace_back(p.value.has_grad()
                              ? std::vector<double>(p.value.grad().begin(), p.value.grad().end())
                              : std::vector<double>(p.value.size(), 0.0));
    p.value.zero_grad();
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  // Central and second differences at step h.
  auto stencil = [&](std::span<double> values, std::size_t j, double h) {
    const double saved = values[j];
    values[j] = saved + h;
    const double up = loss_fn().item();
    values[j] = saved - h;
    const double down = loss_fn().item();
    values[j] = saved;
    return std::pair{(up - down) / (2.0 * h), up + down};
  };
  auto central = [&](std::span<double> values, std::size_t j, double h) { return stencil(values, j, h).first; };
  const bool kinks = options.kink_tolerance > 0.0;
  const double base = kinks ? loss_fn().item() : 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].value.mutable_data();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t j = 0; j < values.size(); ++j) {
      ++result.checked;
      double numeric = 0.0;
      if (!kinks) {
        numeric = central(values, j, options.step);
      } else {
        // A kink inside the stencil makes the two step sizes disagree; retry
        // once with a stencil a hundred times narrower before giving up.
        bool smooth = false;
        for (const double h : {options.step, options.step * 1e-1, options.step * 1e-2, options.step * 1e-3, options.step * 1e-4}) {
          const auto [fine, fine_sum] = stencil(values, j, h);
          const auto [coarse, coarse_sum] = stencil(values, j, 2.0 * h);
          numeric = (4.0 * fine - coarse) / 3.0;
          const double curvature = (coarse_sum - 2.0 * base) / (2.0 * h) - 2.0 * (fine_sum - 2.0 * base) / h;
          const double tol = options.kink_tolerance * (1.0 + std::abs(fine));
          const double noise = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(base)) / h;
          smooth = std::abs(coarse - fine) <= tol && std::abs(curvature) <= tol + noise;
          if (smooth) break;
        }
        if (!smooth) {
          ++result.skipped;
          continue;
        }
      }
      const double a = analytic[pi][j];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-6});
    const double rel = std::sqrt(diff2) / denom;
    if (result.worst.empty() || rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst = params[pi].name;
    }
  }
  return result;
}

}  // namespace avss
