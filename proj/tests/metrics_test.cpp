// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "avss/metrics/bss_eval.hpp"
#include "avss/metrics/stoi.hpp"

namespace avss::metrics {
namespace {

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Removes from `v` its projection on each of `basis` (Gram-Schmidt step).
std::vector<double> orthogonalize(std::vector<double> v, const std::vector<std::vector<double>>& basis) {
  for (int pass = 0; pass < 2; ++pass)
    for (const auto& b : basis) {
      const double c = dot(v, b) / dot(b, b);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * b[i];
    }
  return v;
}

std::vector<double> scaled_to_energy(std::vector<double> v, double e) {
  const double s = std::sqrt(e / energy(v));
  for (double& x : v) x *= s;
  return v;
}

// Speech-like reference: a harmonic carrier under an irregular syllabic
// envelope built from random 2-8 Hz modulations.
dsp::Waveform speechy(double f0, std::size_t n, double rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double rates[4], phases[4];
  for (int j = 0; j < 4; ++j) {
    rates[j] = 2.0 + 6.0 * u(rng);
    phases[j] = 2.0 * std::numbers::pi * u(rng);
  }
  dsp::Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    double m = 0;
    for (int j = 0; j < 4; ++j) m += std::sin(2 * std::numbers::pi * rates[j] * t + phases[j]) / 4;
    const double env = std::max(0.0, m + 0.25);
    double v = 0;
    for (int k = 1; k <= 12; ++k) v += std::sin(2 * std::numbers::pi * f0 * k * t) / k;
    w.samples[i] = env * v;
  }
  return w;
}

// ---------------------------------------------------------------------------
// bss_eval

TEST(BssEval, PerfectEstimateHitsCap) {
  const auto s = gaussian(4000, 1), o = gaussian(4000, 2);
  const auto r = bss_eval(s, {s, o}, 0);
  EXPECT_EQ(r.sdr, kMetricCap);
  EXPECT_EQ(r.sir, kMetricCap);
}

TEST(BssEval, ConstructedTwentyDbNoise) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = gaussian(8000, 10 + seed), o = gaussian(8000, 20 + seed);
    const auto noise = scaled_to_energy(orthogonalize(gaussian(8000, 30 + seed), {s, o}), energy(s) / 100.0);
    std::vector<double> est(s);
    for (std::size_t i = 0; i < est.size(); ++i) est[i] += noise[i];
    const auto r = bss_eval(est, {s, o}, 0);
    EXPECT_NEAR(r.sdr, 20.0, 0.5);
    EXPECT_NEAR(r.sar, 20.0, 0.5);
    EXPECT_GE(r.sir, 59.0);
  }
}

TEST(BssEval, ScaledTargetIsProjectionInvariant) {
  const auto s = gaussian(3000, 3), o = gaussian(3000, 4);
  std::vector<double> half(s);
  for (double& x : half) x *= 0.5;
  EXPECT_EQ(bss_eval(half, {s, o}, 0).sdr, kMetricCap);
}

TEST(BssEval, EqualPowerMixtureScoresZero) {
  const auto s = gaussian(8000, 5);
  const auto o = scaled_to_energy(orthogonalize(gaussian(8000, 6), {s}), energy(s));
  std::vector<double> mix(s);
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += o[i];
  const auto r = bss_eval(mix, {s, o}, 0);
  EXPECT_NEAR(r.sdr, 0.0, 1.0);
  EXPECT_NEAR(r.sir, 0.0, 1.0);
  EXPECT_EQ(r.sar, kMetricCap);
}

TEST(BssEval, DecompositionIsCompleteAndOrthogonal) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = gaussian(2000, 40 + seed), o = gaussian(2000, 50 + seed), est = gaussian(2000, 60 + seed);
    const auto d = bss_decompose(est, {s, o}, 0);
    double err = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) err += std::pow(d.s_target[i] + d.e_interf[i] + d.e_artif[i] - est[i], 2);
    EXPECT_LT(std::sqrt(err / energy(est)), 1e-9);
    const std::vector<const std::vector<double>*> parts{&d.s_target, &d.e_interf, &d.e_artif};
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = a + 1; b < 3; ++b) {
        const double scale = std::sqrt(energy(*parts[a]) * energy(*parts[b]));
        EXPECT_LT(std::abs(dot(*parts[a], *parts[b])) / scale, 1e-6);
      }
  }
}

TEST(BssEval, CapsAndErrors) {
  const auto s = gaussian(1000, 7);
  EXPECT_EQ(bss_eval(std::vector<double>(1000, 0.0), {s}, 0).sdr, -kMetricCap);
  EXPECT_EQ(capped_ratio_db(1.0, 1e-13), kMetricCap);
  EXPECT_EQ(capped_ratio_db(1.0, 1e9), -kMetricCap);
  EXPECT_THROW(bss_eval(s, {std::vector<double>(1000, 0.0)}, 0), MetricError);
  EXPECT_THROW(bss_eval(s, {gaussian(999, 8)}, 0), MetricError);
  EXPECT_THROW(bss_eval(s, {}, 0), MetricError);
  EXPECT_THROW(bss_eval(s, {s}, 1), MetricError);
}

// ---------------------------------------------------------------------------
// stoi

TEST(Stoi, IdenticalSignalsScoreOne) {
  for (double rate : {8000.0, 10000.0, 16000.0}) {
    const auto ref = speechy(140, static_cast<std::size_t>(rate), rate, 1);
    EXPECT_GE(stoi(ref, ref), 0.999) << rate;
  }
}

TEST(Stoi, IndependentNoiseDecorrelates) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto ref = speechy(120 + 10.0 * seed, 16000, 8000, seed);
    dsp::Waveform noise{gaussian(16000, 100 + seed), 8000};
    EXPECT_LT(stoi(noise, ref), 0.3) << seed;
  }
}

TEST(Stoi, NonIncreasingAsSnrFalls) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto ref = speechy(150, 16000, 8000, seed);
    const auto white = gaussian(16000, 200 + seed);
    double previous = 2.0;
    for (double snr : {20.0, 10.0, 0.0, -10.0}) {
      const auto n = scaled_to_energy(white, energy(ref.samples) / std::pow(10.0, snr / 10.0));
      dsp::Waveform est = ref;
      for (std::size_t i = 0; i < n.size(); ++i) est.samples[i] += n[i];
      const double score = stoi(est, ref);
      EXPECT_LE(score, previous) << snr;
      EXPECT_GE(score, -1.0);
      EXPECT_LE(score, 1.0);
      previous = score;
    }
  }
}

TEST(Stoi, ShortOrMismatchedInputRejected) {
  const auto ref = speechy(150, 3000, 8000, 0);
  EXPECT_THROW(stoi(ref, ref), MetricError);
  const auto a = speechy(150, 8000, 8000, 0), b = speechy(150, 8001, 8000, 0);
  EXPECT_THROW(stoi(a, b), MetricError);
}

}  // namespace
}  // namespace avss::metrics
