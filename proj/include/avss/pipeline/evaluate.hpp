// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "avss/metrics/bss_eval.hpp"
#include "avss/metrics/stoi.hpp"
#include "avss/networks/separate.hpp"
#include "avss/pipeline/dataset.hpp"

namespace avss::pipeline {

struct EvalRow {
  std::string clip_id;  // "<conditioning clip>+<other clip>"
  std::uint32_t speaker = 0;
  metrics::BssEvalResult separated;
  metrics::BssEvalResult mixture;  // the mixture itself taken as the estimate
  double stoi = 0.0;
  double mixture_stoi = 0.0;
};

struct EvalMeans {
  double sdr = 0.0, sir = 0.0, sar = 0.0, stoi = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  EvalMeans separated;
  EvalMeans mixture;

  double improvement() const { return separated.sdr - mixture.sdr; }
};

struct EvalOptions {
  std::size_t max_pairs = 0;  // 0: every pair
  bool with_stoi = true;
  std::size_t threads = 1;
};

/// One evaluation job: the conditioning clip, its partner and their mixture.
struct EvalJob {
  const DataClip* cond = nullptr;
  const DataClip* other = nullptr;
  const TrainingSample* sample = nullptr;
  std::string clip_id;
};

/// Produces the conditioning speaker's estimate for a job. Must be safe to
/// call concurrently when more than one thread is requested.
using Estimator = std::function<dsp::Waveform(const EvalJob&)>;

/// Scores `estimate` on every evaluation pair, once per conditioning speaker,
/// against both references; the mixture is scored alongside as a baseline.
inline EvalReport evaluate_estimates(const Dataset& test, const networks::ModelConfig& cfg,
                                     const Estimator& estimate, const EvalOptions& opts = {}) {
  auto pairs = evaluation_pairs(test);
  if (opts.max_pairs > 0 && pairs.size() > opts.max_pairs) pairs.resize(opts.max_pairs);
  if (pairs.empty()) throw DatasetError("evaluate: test set yields no speaker pairs");
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (const auto& [i, j] : pairs) {
    jobs.emplace_back(i, j);
    jobs.emplace_back(j, i);
  }
  EvalReport report;
  report.rows.resize(jobs.size());
  parallel_for(jobs.size(), opts.threads, [&](std::size_t k) {
    const auto& a = test.clips[jobs[k].first];
    const auto& b = test.clips[jobs[k].second];
    const auto s = make_sample(a.view(), b.view(), cfg);
    EvalRow& row = report.rows[k];
    row.clip_id = a.record.clip_id + "+" + b.record.clip_id;
    row.speaker = a.record.speaker_id;
    const auto est = estimate(EvalJob{&a, &b, &s, row.clip_id});
    row.separated = metrics::bss_eval(est, s.target_wavs, 0);
    row.mixture = metrics::bss_eval(s.mixture, s.target_wavs, 0);
    if (opts.with_stoi) {
      row.stoi = metrics::stoi(est, s.target_wavs[0]);
      row.mixture_stoi = metrics::stoi(s.mixture, s.target_wavs[0]);
    }
  });
  const double n = static_cast<double>(report.rows.size());
  for (const auto& r : report.rows) {
    report.separated.sdr += r.separated.sdr / n;
    report.separated.sir += r.separated.sir / n;
    report.separated.sar += r.separated.sar / n;
    report.separated.stoi += r.stoi / n;
    report.mixture.sdr += r.mixture.sdr / n;
    report.mixture.sir += r.mixture.sir / n;
    report.mixture.sar += r.mixture.sar / n;
    report.mixture.stoi += r.mixture_stoi / n;
  }
  return report;
}

/// Model separation of every evaluation pair.
template <typename T>
EvalReport evaluate(networks::AvssModel<T>& model, const Dataset& test, const EvalOptions& opts = {}) {
  return evaluate_estimates(
      test, model.config,
      [&](const EvalJob& job) {
        const auto& s = *job.sample;
        return networks::resynthesize(networks::predict_mask(model, s.mixture_spec, s.frames, s.flows),
                                      s.mixture_spec, s.mixture.samples.size());
      },
      opts);
}

/// `clip_id,speaker,sdr,sir,sar,stoi` per row, then `mean` and
/// `mixture_mean` summary rows.
inline void write_report_csv(std::ostream& os, const EvalReport& r) {
  os << "clip_id,speaker,sdr,sir,sar,stoi\n" << std::fixed << std::setprecision(4);
  for (const auto& row : r.rows) {
    os << row.clip_id << ',' << row.speaker << ',' << row.separated.sdr << ',' << row.separated.sir << ','
       << row.separated.sar << ',' << row.stoi << '\n';
  }
  os << "mean,," << r.separated.sdr << ',' << r.separated.sir << ',' << r.separated.sar << ',' << r.separated.stoi
     << '\n';
  os << "mixture_mean,," << r.mixture.sdr << ',' << r.mixture.sir << ',' << r.mixture.sar << ','
     << r.mixture.stoi << '\n';
}

}  // namespace avss::pipeline
