// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// BSS-eval decomposition without distortion filters: the estimate is split
// into its projection on the target reference, the remaining projection on
// the span of all references, and the residual.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "avss/dsp/waveform.hpp"

namespace avss::metrics {

inline constexpr double kMetricCap = 60.0;

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct BssEvalResult {
  double sdr = 0.0;
  double sir = 0.0;
  double sar = 0.0;
};

struct BssDecomposition {
  std::vector<double> s_target;
  std::vector<double> e_interf;
  std::vector<double> e_artif;
};

inline double energy(const std::vector<double>& v) {
  double e = 0.0;
  for (double x : v) e += x * x;
  return e;
}

/// 10 log10(num / den) limited to [-cap, cap]; a vanishing numerator gives -cap.
inline double capped_ratio_db(double num, double den) {
  if (!(num > 0.0)) return -kMetricCap;
  if (!(den > 1e-12 * num)) return kMetricCap;
  return std::clamp(10.0 * std::log10(num / den), -kMetricCap, kMetricCap);
}

inline BssDecomposition bss_decompose(const std::vector<double>& estimate,
                                      const std::vector<std::vector<double>>& references,
                                      std::size_t target_index) {
  if (references.empty()) throw MetricError("bss_eval: need at least one reference");
  if (target_index >= references.size()) {
    throw MetricError("bss_eval: target index " + std::to_string(target_index) + " out of range for " +
                      std::to_string(references.size()) + " references");
  }
  const std::size_t n = estimate.size(), k = references.size();
  for (const auto& r : references) {
    if (r.size() != n) {
      throw MetricError("bss_eval: reference length " + std::to_string(r.size()) + " differs from estimate length " +
                        std::to_string(n));
    }
  }
  const auto& target = references[target_index];
  const double target_energy = energy(target);
  if (!(target_energy > 0.0)) throw MetricError("bss_eval: target reference has zero energy");

  using Map = Eigen::Map<const Eigen::VectorXd>;
  const Map e(estimate.data(), static_cast<Eigen::Index>(n));
  const Map s(target.data(), static_cast<Eigen::Index>(n));
  Eigen::MatrixXd R(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  for (std::size_t j = 0; j < k; ++j) R.col(static_cast<Eigen::Index>(j)) = Map(references[j].data(), static_cast<Eigen::Index>(n));

  const Eigen::VectorXd s_target = (s.dot(e) / target_energy) * s;
  // Least squares on the reference span; the QR solve tolerates collinear references.
  const Eigen::VectorXd coeffs = R.colPivHouseholderQr().solve(e);
  const Eigen::VectorXd p_all = R * coeffs;

  BssDecomposition out;
  out.s_target.assign(s_target.data(), s_target.data() + n);
  out.e_interf.resize(n);
  out.e_artif.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.e_interf[i] = p_all[static_cast<Eigen::Index>(i)] - s_target[static_cast<Eigen::Index>(i)];
    out.e_artif[i] = estimate[i] - p_all[static_cast<Eigen::Index>(i)];
  }
  return out;
}

/// SDR, SIR and SAR in dB, each capped at +-60.
inline BssEvalResult bss_eval(const std::vector<double>& estimate, const std::vector<std::vector<double>>& references,
                              std::size_t target_index) {
  const auto d = bss_decompose(estimate, references, target_index);
  const std::size_t n = estimate.size();
  std::vector<double> noise(n), signal(n);
  for (std::size_t i = 0; i < n; ++i) {
    noise[i] = d.e_interf[i] + d.e_artif[i];
    signal[i] = d.s_target[i] + d.e_interf[i];
  }
  const double st = energy(d.s_target);
  return {capped_ratio_db(st, energy(noise)), capped_ratio_db(st, energy(d.e_interf)),
          capped_ratio_db(energy(signal), energy(d.e_artif))};
}

inline BssEvalResult bss_eval(const dsp::Waveform& estimate, const std::vector<dsp::Waveform>& references,
                              std::size_t target_index) {
  std::vector<std::vector<double>> refs;
  for (const auto& r : references) refs.push_back(r.samples);
  return bss_eval(estimate.samples, refs, target_index);
}

}  // namespace avss::metrics
