// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Procedural talking clips. A syllable envelope drives both a harmonic voice
// and the opening of a rendered mouth, so audio and video share timing.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "avss/dsp/waveform.hpp"
#include "avss/optical_flow/frames.hpp"

namespace avss::pipeline {

inline constexpr std::size_t kPitchClasses = 32;

/// Voice and face traits of one synthetic speaker.
struct SpeakerTraits {
  double f0 = 100.0;         // Hz
  double formant1 = 500.0;   // Hz
  double formant2 = 1500.0;  // Hz
  double mouth_width = 0.4;  // fraction of frame width
  double skin = 0.7;         // background intensity
};

inline SpeakerTraits speaker_traits(std::uint32_t speaker_id) {
  SpeakerTraits t;
  t.f0 = 100.0 + 25.0 * static_cast<double>(speaker_id % kPitchClasses);
  t.formant1 = 450.0 + 50.0 * static_cast<double>((speaker_id * 5) % 7);
  t.formant2 = 1300.0 + 120.0 * static_cast<double>((speaker_id * 3) % 9);
  t.mouth_width = 0.36 + 0.02 * static_cast<double>(speaker_id % 5);
  t.skin = 0.62 + 0.04 * static_cast<double>(speaker_id % 6);
  return t;
}

struct ClipSpec {
  std::size_t frames = 25;
  double fps = 25.0;
  double sample_rate = 8000.0;
  std::size_t height = 64;
  std::size_t width = 64;

  std::size_t samples() const {
    return static_cast<std::size_t>(std::llround(static_cast<double>(frames) / fps * sample_rate));
  }
};

struct SyntheticClip {
  flow::FrameSequence frames;
  dsp::Waveform voice;
  std::vector<double> envelope;  // per sample, in [0, 1]
  std::vector<double> aperture;  // mouth opening per frame, pixels
  std::uint32_t speaker_id = 0;
  std::uint64_t seed = 0;
};

namespace detail {

// Raised-cosine syllables separated by silent gaps.
inline std::vector<double> syllable_envelope(std::size_t n, double rate, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> env(n, 0.0);
  double t = 0.05 * u(rng);
  const double total = static_cast<double>(n) / rate;
  while (t < total) {
    const double dur = 0.12 + 0.18 * u(rng);
    const double amp = 0.6 + 0.4 * u(rng);
    const double ramp = 0.03;
    const auto begin = static_cast<std::size_t>(t * rate);
    const auto end = std::min(n, static_cast<std::size_t>((t + dur) * rate));
    for (std::size_t i = begin; i < end; ++i) {
      const double s = static_cast<double>(i) / rate - t;
      double g = 1.0;
      if (s < ramp) g = 0.5 - 0.5 * std::cos(std::numbers::pi * s / ramp);
      if (dur - s < ramp) g = std::min(g, 0.5 - 0.5 * std::cos(std::numbers::pi * (dur - s) / ramp));
      env[i] = amp * g;
    }
    t += dur + 0.06 + 0.19 * u(rng);
  }
  return env;
}

// Gain of a two-resonance vocal tract at frequency f.
inline double formant_gain(double f, const SpeakerTraits& s) {
  auto resonance = [f](double fc, double bw) {
    const double x = (f - fc) / bw;
    return 1.0 / (1.0 + x * x);
  };
  return 0.15 + resonance(s.formant1, 90.0) + 0.7 * resonance(s.formant2, 140.0);
}

// Mouth of half-width `a` and opening `h` pixels centred at (cy, cx); pixel
// darkness is the covered fraction of the pixel's row span.
inline flow::GrayImage render_mouth(const ClipSpec& spec, const SpeakerTraits& s, double h) {
  flow::GrayImage img(spec.height, spec.width, s.skin);
  const double cy = 0.62 * static_cast<double>(spec.height);
  const double cx = 0.5 * static_cast<double>(spec.width) - 0.5;
  const double a = 0.5 * s.mouth_width * static_cast<double>(spec.width);
  const double lip = 0.35, interior = 0.08;
  for (std::size_t x = 0; x < spec.width; ++x) {
    const double dx = (static_cast<double>(x) - cx) / a;
    if (std::abs(dx) >= 1.0) continue;
    const double shape = std::sqrt(1.0 - dx * dx);
    const double half = 0.5 * h * shape;
    const double lip_half = half + 1.2 * shape;
    for (std::size_t y = 0; y < spec.height; ++y) {
      const double lo = static_cast<double>(y) - 0.5, hi = static_cast<double>(y) + 0.5;
      auto covered = [&](double r) { return std::max(0.0, std::min(hi, cy + r) - std::max(lo, cy - r)); };
      const double inner = covered(half);
      const double ring = covered(lip_half) - inner;
      img.at(y, x) = s.skin * (1.0 - inner - ring) + interior * inner + lip * ring;
    }
  }
  return img;
}

}  // namespace detail

/// Deterministic clip for (speaker_id, seed).
inline SyntheticClip synthesize_clip(std::uint32_t speaker_id, std::uint64_t seed, const ClipSpec& spec) {
  const SpeakerTraits traits = speaker_traits(speaker_id);
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ull + speaker_id);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SyntheticClip clip;
  clip.speaker_id = speaker_id;
  clip.seed = seed;
  const std::size_t n = spec.samples();
  const double rate = spec.sample_rate;
  clip.envelope = detail::syllable_envelope(n, rate, rng);

  // Voice: harmonic carrier with slow vibrato, formant shaping and breath noise.
  const double vib_rate = 4.0 + 2.0 * u(rng), vib_phase = 2.0 * std::numbers::pi * u(rng);
  std::vector<double> gains;
  for (int k = 1; k * traits.f0 < 0.45 * rate; ++k) gains.push_back(detail::formant_gain(k * traits.f0, traits) / std::sqrt(k));
  clip.voice.sample_rate = rate;
  clip.voice.samples.resize(n);
  double phase = 2.0 * std::numbers::pi * u(rng);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double f = traits.f0 * (1.0 + 0.015 * std::sin(2.0 * std::numbers::pi * vib_rate * t + vib_phase));
    phase += 2.0 * std::numbers::pi * f / rate;
    double v = 0.0;
    for (std::size_t k = 0; k < gains.size(); ++k) v += gains[k] * std::sin(static_cast<double>(k + 1) * phase);
    clip.voice.samples[i] = clip.envelope[i] * (v + 0.05 * gauss(rng));
  }
  double rms = 0.0;
  for (double x : clip.voice.samples) rms += x * x;
  rms = std::sqrt(rms / static_cast<double>(n));
  if (rms > 0.0)
    for (double& x : clip.voice.samples) x *= 0.1 / rms;

  // Video: mouth opening proportional to the mean envelope of each frame.
  clip.frames.frame_rate = spec.fps;
  const double max_open = 0.3 * static_cast<double>(spec.height);
  for (std::size_t k = 0; k < spec.frames; ++k) {
    const auto begin = std::min(n, static_cast<std::size_t>(std::llround(static_cast<double>(k) / spec.fps * rate)));
    const auto end = std::min(n, static_cast<std::size_t>(std::llround(static_cast<double>(k + 1) / spec.fps * rate)));
    double e = 0.0;
    for (std::size_t i = begin; i < end; ++i) e += clip.envelope[i];
    e = end > begin ? e / static_cast<double>(end - begin) : 0.0;
    clip.aperture.push_back(max_open * e);
    clip.frames.frames.push_back(detail::render_mouth(spec, traits, clip.aperture.back()));
  }
  return clip;
}

}  // namespace avss::pipeline
