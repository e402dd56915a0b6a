// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Short-time objective intelligibility, original (non-extended) form:
// 10 kHz analysis, 15 one-third-octave bands from 150 Hz, 384 ms segments.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "avss/dsp/fft.hpp"
#include "avss/dsp/resample.hpp"
#include "avss/metrics/bss_eval.hpp"

namespace avss::metrics {

struct StoiParams {
  double sample_rate = 10000.0;
  std::size_t frame = 256;
  std::size_t hop = 128;
  std::size_t fft_size = 512;
  std::size_t bands = 15;
  double min_freq = 150.0;
  std::size_t segment = 30;
  double clip_db = -15.0;
  double dynamic_range_db = 40.0;
};

namespace detail {

// Hann of length frame + 2 without its zero end points.
inline std::vector<double> stoi_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) / static_cast<double>(n + 1));
  }
  return w;
}

// Frame start offsets 0, hop, ... strictly below len - frame.
inline std::vector<std::size_t> frame_starts(std::size_t len, const StoiParams& p) {
  std::vector<std::size_t> s;
  for (std::size_t i = 0; i + p.frame < len; i += p.hop) s.push_back(i);
  return s;
}

// Drops frames of `x` more than the dynamic range below its loudest frame and
// applies the same selection to `y`; both are rebuilt by overlap-add.
inline void remove_silent_frames(std::vector<double>& x, std::vector<double>& y, const StoiParams& p) {
  const auto w = stoi_window(p.frame);
  const auto starts = frame_starts(x.size(), p);
  std::vector<double> level(starts.size());
  double loudest = -1e300;
  for (std::size_t f = 0; f < starts.size(); ++f) {
    double e = 0.0;
    for (std::size_t i = 0; i < p.frame; ++i) e += std::pow(w[i] * x[starts[f] + i], 2);
    level[f] = 20.0 * std::log10(std::sqrt(e) + 1e-300);
    loudest = std::max(loudest, level[f]);
  }
  std::vector<std::size_t> keep;
  for (std::size_t f = 0; f < starts.size(); ++f)
    if (level[f] > loudest - p.dynamic_range_db) keep.push_back(starts[f]);
  const std::size_t len = keep.empty() ? 0 : (keep.size() - 1) * p.hop + p.frame;
  std::vector<double> xs(len, 0.0), ys(len, 0.0);
  for (std::size_t k = 0; k < keep.size(); ++k)
    for (std::size_t i = 0; i < p.frame; ++i) {
      xs[k * p.hop + i] += w[i] * x[keep[k] + i];
      ys[k * p.hop + i] += w[i] * y[keep[k] + i];
    }
  x.swap(xs);
  y.swap(ys);
}

// Band envelopes [bands][frames].
inline std::vector<std::vector<double>> third_octave_envelopes(const std::vector<double>& x, const StoiParams& p) {
  const std::size_t bins = p.fft_size / 2 + 1;
  std::vector<std::size_t> lo(p.bands), hi(p.bands);
  auto nearest_bin = [&](double f) {
    const double step = p.sample_rate / static_cast<double>(p.fft_size);
    std::size_t best = 0;
    for (std::size_t k = 1; k < bins; ++k)
      if (std::abs(k * step - f) < std::abs(best * step - f)) best = k;
    return best;
  };
  for (std::size_t b = 0; b < p.bands; ++b) {
    const double kb = static_cast<double>(b);
    lo[b] = nearest_bin(p.min_freq * std::pow(2.0, (2.0 * kb - 1.0) / 6.0));
    hi[b] = nearest_bin(p.min_freq * std::pow(2.0, (2.0 * kb + 1.0) / 6.0));
  }
  const auto w = stoi_window(p.frame);
  const auto starts = frame_starts(x.size(), p);
  const dsp::Fft fft(p.fft_size);
  std::vector<std::complex<double>> buf(p.fft_size);
  std::vector<std::vector<double>> env(p.bands, std::vector<double>(starts.size()));
  for (std::size_t f = 0; f < starts.size(); ++f) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    for (std::size_t i = 0; i < p.frame; ++i) buf[i] = w[i] * x[starts[f] + i];
    fft.forward(buf);
    for (std::size_t b = 0; b < p.bands; ++b) {
      double e = 0.0;
      for (std::size_t k = lo[b]; k < hi[b]; ++k) e += std::norm(buf[k]);
      env[b][f] = std::sqrt(e);
    }
  }
  return env;
}

}  // namespace detail

/// Intelligibility of `estimate` relative to the clean `reference`, in [-1, 1].
inline double stoi(const dsp::Waveform& estimate, const dsp::Waveform& reference, const StoiParams& p = {}) {
  if (estimate.samples.size() != reference.samples.size() ||
      std::abs(estimate.sample_rate - reference.sample_rate) > 1e-9) {
    throw MetricError("stoi: estimate and reference differ in length or rate");
  }
  auto x = dsp::resample(reference, p.sample_rate).samples;
  auto y = dsp::resample(estimate, p.sample_rate).samples;
  const std::size_t min_len = static_cast<std::size_t>(0.384 * p.sample_rate);
  if (x.size() < min_len) {
    throw MetricError("stoi: signal of " + std::to_string(x.size()) + " samples at " +
                      std::to_string(p.sample_rate) + " Hz is shorter than 384 ms");
  }
  detail::remove_silent_frames(x, y, p);
  const auto xe = detail::third_octave_envelopes(x, p);
  const auto ye = detail::third_octave_envelopes(y, p);
  const std::size_t frames = xe.front().size();
  if (frames < p.segment) {
    throw MetricError("stoi: only " + std::to_string(frames) + " non-silent frames, need " +
                      std::to_string(p.segment));
  }
  const double clip = 1.0 + std::pow(10.0, -p.clip_db / 20.0);
  double total = 0.0;
  std::size_t count = 0;
  std::vector<double> xs(p.segment), ys(p.segment);
  for (std::size_t m = p.segment; m <= frames; ++m) {
    for (std::size_t b = 0; b < p.bands; ++b) {
      double nx = 0.0, ny = 0.0;
      for (std::size_t i = 0; i < p.segment; ++i) {
        xs[i] = xe[b][m - p.segment + i];
        ys[i] = ye[b][m - p.segment + i];
        nx += xs[i] * xs[i];
        ny += ys[i] * ys[i];
      }
      const double alpha = std::sqrt(nx) / (std::sqrt(ny) + 1e-300);
      double mx = 0.0, my = 0.0;
      for (std::size_t i = 0; i < p.segment; ++i) {
        ys[i] = std::min(alpha * ys[i], clip * xs[i]);
        mx += xs[i];
        my += ys[i];
      }
      mx /= static_cast<double>(p.segment);
      my /= static_cast<double>(p.segment);
      double sxy = 0.0, sxx = 0.0, syy = 0.0;
      for (std::size_t i = 0; i < p.segment; ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
      }
      const double den = std::sqrt(sxx) * std::sqrt(syy);
      // Two flat envelopes agree perfectly; one flat envelope carries no match.
      total += den > 0.0 ? sxy / den : (sxx == 0.0 && syy == 0.0 ? 1.0 : 0.0);
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace avss::metrics
