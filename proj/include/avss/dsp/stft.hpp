// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "avss/dsp/fft.hpp"
#include "avss/dsp/waveform.hpp"

namespace avss::dsp {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InputTooShortError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Periodic Hann window of length n.
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

struct StftConfig {
  double sample_rate = 8000.0;
  std::size_t fft_size = 256;
  std::size_t win_length = 256;
  std::size_t hop = 64;

  std::size_t freq_bins() const { return fft_size / 2 + 1; }

  /// Throws std::invalid_argument unless fft_size is a power of two,
  /// hop <= win_length <= fft_size, and the squared analysis/synthesis window
  /// overlap-adds to a constant at this hop.
  void validate() const {
    if (sample_rate <= 0) throw std::invalid_argument("stft: sample_rate must be positive");
    if (!is_power_of_two(fft_size)) throw std::invalid_argument("stft: fft_size must be a power of two");
    if (hop == 0 || hop > win_length || win_length > fft_size) {
      throw std::invalid_argument("stft: require 0 < hop <= win_length <= fft_size");
    }
    if (win_length % 2 != 0) throw std::invalid_argument("stft: win_length must be even");
    const auto w = hann_window(win_length);
    std::vector<double> ola(hop, 0.0);
    for (std::size_t i = 0; i < win_length; ++i) ola[i % hop] += w[i] * w[i];
    for (double v : ola) {
      if (std::abs(v - ola[0]) > 1e-9 * ola[0]) {
        throw std::invalid_argument("stft: Hann window of length " + std::to_string(win_length) +
                                    " does not overlap-add to a constant at hop " + std::to_string(hop));
      }
    }
  }

  /// Frame count produced for a signal of `samples` samples.
  std::size_t frames_for(std::size_t samples) const {
    const std::size_t padded = samples + 2 * (win_length / 2);
    return (padded - win_length) / hop + 1;
  }
};

/// F x T complex grid, row-major by frequency bin: index f * frames + t.
struct ComplexSpectrogram {
  std::size_t freq_bins = 0;
  std::size_t frames = 0;
  std::vector<double> real;
  std::vector<double> imag;
  StftConfig config;

  ComplexSpectrogram() = default;
  ComplexSpectrogram(std::size_t f, std::size_t t, StftConfig cfg)
      : freq_bins(f), frames(t), real(f * t, 0.0), imag(f * t, 0.0), config(cfg) {}

  std::size_t index(std::size_t f, std::size_t t) const { return f * frames + t; }
  std::complex<double> at(std::size_t f, std::size_t t) const {
    return {real[index(f, t)], imag[index(f, t)]};
  }
  void set(std::size_t f, std::size_t t, std::complex<double> z) {
    real[index(f, t)] = z.real();
    imag[index(f, t)] = z.imag();
  }
  bool same_shape(const ComplexSpectrogram& o) const {
    return freq_bins == o.freq_bins && frames == o.frames;
  }
  double energy() const {
    double e = 0.0;
    for (std::size_t i = 0; i < real.size(); ++i) e += real[i] * real[i] + imag[i] * imag[i];
    return e;
  }
};

/// Hann-windowed one-sided STFT of a signal reflect-padded by win_length/2 on
/// both ends.
inline ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg) {
  cfg.validate();
  const std::size_t n = w.samples.size();
  if (n < cfg.win_length) {
    throw InputTooShortError("stft: signal of " + std::to_string(n) + " samples is shorter than one window (" +
                             std::to_string(cfg.win_length) + ")");
  }
  const std::size_t half = cfg.win_length / 2;
  std::vector<double> padded(n + 2 * half);
  for (std::size_t i = 0; i < padded.size(); ++i) {
    const long j = static_cast<long>(i) - static_cast<long>(half);
    long src = j < 0 ? -j : j;
    if (src >= static_cast<long>(n)) src = 2 * (static_cast<long>(n) - 1) - src;
    padded[i] = w.samples[static_cast<std::size_t>(src)];
  }
  const auto window = hann_window(cfg.win_length);
  const Fft fft(cfg.fft_size);
  const std::size_t frames = cfg.frames_for(n);
  ComplexSpectrogram spec(cfg.freq_bins(), frames, cfg);
  std::vector<std::complex<double>> buf(cfg.fft_size);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (std::size_t i = 0; i < cfg.win_length; ++i) buf[i] = padded[t * cfg.hop + i] * window[i];
    fft.forward(buf);
    for (std::size_t f = 0; f < spec.freq_bins; ++f) spec.set(f, t, buf[f]);
  }
  return spec;
}

/// Inverse of stft() by weighted overlap-add, normalized by the summed
/// squared window. Output length defaults to (T - 1) * hop; a larger
/// `length` is honored and any uncovered tail is zero.
inline Waveform istft(const ComplexSpectrogram& s, std::optional<std::size_t> length = std::nullopt) {
  const StftConfig& cfg = s.config;
  cfg.validate();
  if (s.freq_bins != cfg.freq_bins() || s.real.size() != s.freq_bins * s.frames ||
      s.imag.size() != s.real.size()) {
    throw ShapeError("istft: spectrogram has " + std::to_string(s.freq_bins) + " bins, expected " +
                     std::to_string(cfg.freq_bins()));
  }
  const std::size_t half = cfg.win_length / 2;
  const std::size_t padded_len = (s.frames - 1) * cfg.hop + cfg.win_length;
  std::vector<double> acc(padded_len, 0.0), wsum(padded_len, 0.0);
  const auto window = hann_window(cfg.win_length);
  const Fft fft(cfg.fft_size);
  std::vector<std::complex<double>> buf(cfg.fft_size);
  const double inv_n = 1.0 / static_cast<double>(cfg.fft_size);
  for (std::size_t t = 0; t < s.frames; ++t) {
    for (std::size_t f = 0; f < s.freq_bins; ++f) buf[f] = s.at(f, t);
    // Hermitian completion; DC and Nyquist imaginary parts are discarded.
    buf[0] = buf[0].real();
    buf[cfg.fft_size / 2] = buf[cfg.fft_size / 2].real();
    for (std::size_t f = s.freq_bins; f < cfg.fft_size; ++f) buf[f] = std::conj(buf[cfg.fft_size - f]);
    fft.inverse(buf);
    for (std::size_t i = 0; i < cfg.win_length; ++i) {
      acc[t * cfg.hop + i] += buf[i].real() * inv_n * window[i];
      wsum[t * cfg.hop + i] += window[i] * window[i];
    }
  }
  const std::size_t natural = (s.frames - 1) * cfg.hop;
  const std::size_t out_len = length.value_or(natural);
  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples.assign(out_len, 0.0);
  for (std::size_t i = 0; i < out_len && i + half < padded_len; ++i) {
    const double ws = wsum[i + half];
    if (ws > 1e-10) out.samples[i] = acc[i + half] / ws;
  }
  return out;
}

}  // namespace avss::dsp
