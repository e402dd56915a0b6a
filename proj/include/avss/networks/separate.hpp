// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Inference path and conversions between signal containers and tensors.

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "avss/dsp/mask.hpp"
#include "avss/dsp/stft.hpp"
#include "avss/networks/model.hpp"
#include "avss/optical_flow/farneback.hpp"

namespace avss::networks {

class AlignmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Gray frames -> [1, 1, N, H, W].
template <typename T>
Tensor<T> frames_tensor(const flow::FrameSequence& seq) {
  std::vector<T> v;
  v.reserve(seq.size() * seq.height() * seq.width());
  for (const auto& f : seq.frames)
    for (double p : f.pixels) v.push_back(static_cast<T>(p));
  return Tensor<T>({1, 1, seq.size(), seq.height(), seq.width()}, std::move(v));
}

/// Flow stack -> [1, 2, N-1, H, W]; channel 0 is dx, channel 1 dy.
template <typename T>
Tensor<T> flows_tensor(const std::vector<flow::FlowField>& flows) {
  if (flows.empty()) throw std::invalid_argument("flows_tensor: empty flow stack");
  const std::size_t n = flows.size(), hw = flows.front().height * flows.front().width;
  std::vector<T> v(2 * n * hw);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < hw; ++i) {
      v[k * hw + i] = static_cast<T>(flows[k].dx[i]);
      v[(n + k) * hw + i] = static_cast<T>(flows[k].dy[i]);
    }
  return Tensor<T>({1, 2, n, flows.front().height, flows.front().width}, std::move(v));
}

/// Complex spectrogram -> [1, 2, F, T].
template <typename T>
Tensor<T> spectrogram_tensor(const dsp::ComplexSpectrogram& s) {
  std::vector<T> v;
  v.reserve(2 * s.real.size());
  for (double x : s.real) v.push_back(static_cast<T>(x));
  for (double x : s.imag) v.push_back(static_cast<T>(x));
  return Tensor<T>({1, 2, s.freq_bins, s.frames}, std::move(v));
}

/// Item `b` of a [B, 2, F, T] mask tensor.
template <typename T>
dsp::ComplexMask mask_from_tensor(const Tensor<T>& m, std::size_t b, double clip_bound) {
  if (m.rank() != 4 || m.extent(1) != 2 || b >= m.extent(0)) {
    throw DimensionError("mask_from_tensor: expected [B, 2, F, T] with B > " + std::to_string(b) + ", got " +
                         to_string(m.shape()));
  }
  const std::size_t f = m.extent(2), t = m.extent(3), cells = f * t;
  dsp::ComplexMask out(f, t, clip_bound);
  const auto d = m.data();
  for (std::size_t i = 0; i < cells; ++i) {
    out.real[i] = static_cast<double>(d[(2 * b) * cells + i]);
    out.imag[i] = static_cast<double>(d[(2 * b + 1) * cells + i]);
  }
  return out;
}

/// Throws AlignmentError unless the clip matches the configured duration.
inline void check_alignment(const ModelConfig& cfg, const dsp::Waveform& mixture, const flow::FrameSequence& frames) {
  const bool rate_ok = std::abs(mixture.sample_rate - cfg.stft.sample_rate) < 1e-9;
  if (!rate_ok || mixture.samples.size() != cfg.samples() || frames.size() != cfg.frames ||
      frames.height() != cfg.height || frames.width() != cfg.width) {
    throw AlignmentError("separate: clip misaligned; expected " + std::to_string(cfg.frames) + " frames of " +
                         std::to_string(cfg.height) + "x" + std::to_string(cfg.width) + " and " +
                         std::to_string(cfg.samples()) + " samples at " + std::to_string(cfg.stft.sample_rate) +
                         " Hz, got " + std::to_string(frames.size()) + " frames of " +
                         std::to_string(frames.height()) + "x" + std::to_string(frames.width()) + " and " +
                         std::to_string(mixture.samples.size()) + " samples at " +
                         std::to_string(mixture.sample_rate) + " Hz");
  }
}

/// Masks the mixture spectrogram and resynthesizes at the mixture length.
inline dsp::Waveform resynthesize(const dsp::ComplexMask& mask, const dsp::ComplexSpectrogram& mixture_spec,
                                  std::size_t length) {
  return dsp::istft(dsp::apply_mask(mask, mixture_spec), length);
}

/// Predicted mask for one clip; flows are computed from the frames unless given.
template <typename T>
dsp::ComplexMask predict_mask(AvssModel<T>& model, const dsp::ComplexSpectrogram& mixture_spec,
                              const flow::FrameSequence& frames,
                              const std::optional<std::vector<flow::FlowField>>& flows = std::nullopt) {
  NoGradGuard guard;
  const auto x_v = frames_tensor<T>(frames);
  Tensor<T> x_m;
  if (model.uses_motion()) x_m = flows_tensor<T>(flows ? *flows : flow::flow_sequence(frames, model.config.flow));
  const auto out = model.forward(x_v, x_m, spectrogram_tensor<T>(mixture_spec), NormMode::kEval);
  return mask_from_tensor(out.mask, 0, model.config.clip_bound);
}

/// Speech of the speaker seen in `frames`, extracted from `mixture`.
template <typename T>
dsp::Waveform separate(AvssModel<T>& model, const dsp::Waveform& mixture, const flow::FrameSequence& frames,
                       const std::optional<std::vector<flow::FlowField>>& flows = std::nullopt) {
  check_alignment(model.config, mixture, frames);
  const auto spec = dsp::stft(mixture, model.config.stft);
  return resynthesize(predict_mask(model, spec, frames, flows), spec, mixture.samples.size());
}

}  // namespace avss::networks
