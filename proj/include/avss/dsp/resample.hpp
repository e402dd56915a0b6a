// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "avss/dsp/waveform.hpp"

namespace avss::dsp {

namespace detail {

inline double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 50; ++k) {
    term *= (x / (2.0 * k)) * (x / (2.0 * k));
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

}  // namespace detail

/// Band-limited resampling with a Kaiser-windowed sinc kernel (half-width
/// `taps` input samples, beta 8.6). The cutoff follows the lower of the two
/// Nyquist rates.
inline Waveform resample(const Waveform& in, double target_rate, int taps = 32) {
  if (std::abs(in.sample_rate - target_rate) < 1e-9) return in;
  const double ratio = target_rate / in.sample_rate;
  const double cutoff = std::min(1.0, ratio);
  const double beta = 8.6;
  const double i0_beta = detail::bessel_i0(beta);
  const auto n_out = static_cast<std::size_t>(std::floor(static_cast<double>(in.samples.size()) * ratio));
  const double half_width = taps / cutoff;
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  const long n_in = static_cast<long>(in.samples.size());
  for (std::size_t n = 0; n < n_out; ++n) {
    const double t = static_cast<double>(n) / ratio;
    const long lo = static_cast<long>(std::ceil(t - half_width));
    const long hi = static_cast<long>(std::floor(t + half_width));
    double acc = 0.0;
    for (long k = std::max(lo, 0L); k <= std::min(hi, n_in - 1); ++k) {
      const double x = t - static_cast<double>(k);
      const double u = x / half_width;
      if (std::abs(u) >= 1.0) continue;
      const double arg = std::numbers::pi * cutoff * x;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
      const double win = detail::bessel_i0(beta * std::sqrt(1.0 - u * u)) / i0_beta;
      acc += in.samples[static_cast<std::size_t>(k)] * cutoff * sinc * win;
    }
    out.samples[n] = acc;
  }
  return out;
}

}  // namespace avss::dsp
