// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "avss/dsp/stft.hpp"

namespace avss::dsp {

inline constexpr double kMaskFloor = 1e-8;
inline constexpr double kDefaultClipBound = 10.0;

/// Complex ratio mask on an F x T grid; every cell has magnitude <= clip_bound.
struct ComplexMask {
  std::size_t freq_bins = 0;
  std::size_t frames = 0;
  std::vector<double> real;
  std::vector<double> imag;
  double clip_bound = kDefaultClipBound;

  ComplexMask() = default;
  ComplexMask(std::size_t f, std::size_t t, double bound)
      : freq_bins(f), frames(t), real(f * t, 0.0), imag(f * t, 0.0), clip_bound(bound) {}

  std::complex<double> at(std::size_t i) const { return {real[i], imag[i]}; }
  std::size_t cells() const { return real.size(); }
};

inline void require_same_grid(std::size_t f1, std::size_t t1, std::size_t f2, std::size_t t2, const char* op) {
  if (f1 != f2 || t1 != t2) {
    throw ShapeError(std::string(op) + ": grid " + std::to_string(f1) + "x" + std::to_string(t1) +
                     " does not match " + std::to_string(f2) + "x" + std::to_string(t2));
  }
}

/// Cellwise target / mixture with |mixture| floored at kMaskFloor; the result
/// magnitude is clipped to clip_bound preserving phase.
inline ComplexMask ideal_complex_mask(const ComplexSpectrogram& target, const ComplexSpectrogram& mixture,
                                      double clip_bound = kDefaultClipBound) {
  require_same_grid(target.freq_bins, target.frames, mixture.freq_bins, mixture.frames, "ideal_complex_mask");
  ComplexMask m(target.freq_bins, target.frames, clip_bound);
  for (std::size_t i = 0; i < m.cells(); ++i) {
    std::complex<double> den{mixture.real[i], mixture.imag[i]};
    const double mag = std::abs(den);
    if (mag < kMaskFloor) den = mag > 0.0 ? den * (kMaskFloor / mag) : std::complex<double>{kMaskFloor, 0.0};
    std::complex<double> q = std::complex<double>{target.real[i], target.imag[i]} / den;
    const double qm = std::abs(q);
    if (qm > clip_bound) q *= clip_bound / qm;
    m.real[i] = q.real();
    m.imag[i] = q.imag();
  }
  return m;
}

/// Cellwise complex product mask * mixture.
inline ComplexSpectrogram apply_mask(const ComplexMask& mask, const ComplexSpectrogram& mixture) {
  require_same_grid(mask.freq_bins, mask.frames, mixture.freq_bins, mixture.frames, "apply_mask");
  ComplexSpectrogram out(mixture.freq_bins, mixture.frames, mixture.config);
  for (std::size_t i = 0; i < mask.cells(); ++i) {
    const double a = mask.real[i], b = mask.imag[i];
    const double c = mixture.real[i], d = mixture.imag[i];
    out.real[i] = a * c - b * d;
    out.imag[i] = a * d + b * c;
  }
  return out;
}

inline ComplexMask unit_mask(std::size_t freq_bins, std::size_t frames, double clip_bound = kDefaultClipBound) {
  ComplexMask m(freq_bins, frames, clip_bound);
  std::fill(m.real.begin(), m.real.end(), 1.0);
  return m;
}

}  // namespace avss::dsp
