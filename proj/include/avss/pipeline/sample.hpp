// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Mix-and-separate samples: two voices are summed, and the model is asked for
// the mask of the speaker whose video it sees.

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "avss/dsp/mask.hpp"
#include "avss/networks/separate.hpp"
#include "avss/optical_flow/farneback.hpp"

namespace avss::pipeline {

inline constexpr double kMixturePeak = 0.95;

class SampleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One side of a mixture: the speaker's video, its flows and clean voice.
struct SourceView {
  const flow::FrameSequence* frames = nullptr;
  const std::vector<flow::FlowField>* flows = nullptr;  // optional
  const dsp::Waveform* voice = nullptr;
};

struct TrainingSample {
  flow::FrameSequence frames;             // conditioning speaker
  std::vector<flow::FlowField> flows;     // N - 1 steps
  dsp::Waveform mixture;
  dsp::ComplexSpectrogram mixture_spec;
  std::vector<dsp::ComplexMask> targets;  // [0] conditioning speaker, [1] the other
  std::vector<dsp::Waveform> target_wavs;
};

/// Mixture of `a` and `b` conditioned on `a`. The sum is scaled to peak
/// kMixturePeak and the references share that gain.
inline TrainingSample make_sample(const SourceView& a, const SourceView& b, const networks::ModelConfig& cfg) {
  const auto& va = *a.voice;
  const auto& vb = *b.voice;
  if (va.samples.size() != vb.samples.size() || std::abs(va.sample_rate - vb.sample_rate) > 1e-9) {
    throw SampleError("make_sample: clip durations differ (" + std::to_string(va.samples.size()) + " vs " +
                      std::to_string(vb.samples.size()) + " samples)");
  }
  TrainingSample s;
  s.frames = *a.frames;
  s.flows = a.flows ? *a.flows : flow::flow_sequence(s.frames, cfg.flow);
  s.mixture.sample_rate = va.sample_rate;
  s.mixture.samples.resize(va.samples.size());
  double peak = 0.0;
  for (std::size_t i = 0; i < va.samples.size(); ++i) {
    s.mixture.samples[i] = va.samples[i] + vb.samples[i];
    peak = std::max(peak, std::abs(s.mixture.samples[i]));
  }
  const double gain = peak > 0.0 ? kMixturePeak / peak : 1.0;
  for (double& x : s.mixture.samples) x *= gain;
  for (const auto* v : {&va, &vb}) {
    dsp::Waveform t = *v;
    for (double& x : t.samples) x *= gain;
    s.target_wavs.push_back(std::move(t));
  }
  networks::check_alignment(cfg, s.mixture, s.frames);
  s.mixture_spec = dsp::stft(s.mixture, cfg.stft);
  for (const auto& t : s.target_wavs) {
    s.targets.push_back(dsp::ideal_complex_mask(dsp::stft(t, cfg.stft), s.mixture_spec, cfg.clip_bound));
  }
  return s;
}

/// [B, 2, F, T] tensor of ComplexMask cells.
template <typename T>
Tensor<T> masks_tensor(const std::vector<const dsp::ComplexMask*>& masks) {
  const std::size_t f = masks.front()->freq_bins, t = masks.front()->frames, cells = f * t;
  std::vector<T> v;
  v.reserve(masks.size() * 2 * cells);
  for (const auto* m : masks) {
    for (double x : m->real) v.push_back(static_cast<T>(x));
    for (double x : m->imag) v.push_back(static_cast<T>(x));
  }
  return Tensor<T>({masks.size(), 2, f, t}, std::move(v));
}

/// Model inputs and targets of a mini-batch.
template <typename T>
struct Batch {
  Tensor<T> x_v, x_m, x_a, target;
};

template <typename T>
Batch<T> make_batch(const std::vector<TrainingSample>& samples, bool with_motion) {
  if (samples.empty()) throw SampleError("make_batch: empty batch");
  std::vector<Tensor<T>> xv, xm, xa;
  std::vector<const dsp::ComplexMask*> masks;
  for (const auto& s : samples) {
    xv.push_back(networks::frames_tensor<T>(s.frames));
    if (with_motion) xm.push_back(networks::flows_tensor<T>(s.flows));
    xa.push_back(networks::spectrogram_tensor<T>(s.mixture_spec));
    masks.push_back(&s.targets[0]);
  }
  NoGradGuard guard;
  Batch<T> b;
  b.x_v = concat<T>(xv, 0);
  if (with_motion) b.x_m = concat<T>(xm, 0);
  b.x_a = concat<T>(xa, 0);
  b.target = masks_tensor<T>(masks);
  return b;
}

/// Sum over batch items of the Euclidean norm of the complex mask error.
template <typename T>
Tensor<T> mask_loss(const Tensor<T>& predicted, const Tensor<T>& target) {
  if (predicted.shape() != target.shape()) {
    throw DimensionError("mask_loss: predicted " + to_string(predicted.shape()) + " vs target " +
                         to_string(target.shape()));
  }
  return sum(item_l2_norm(sub(predicted, target)));
}

}  // namespace avss::pipeline
