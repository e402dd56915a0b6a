// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <vector>
#include <stdexcept>
#include <string>

#include "avss/dsp/stft.hpp"
#include "avss/fusion/fuse.hpp"
#include "avss/optical_flow/farneback.hpp"

namespace avss::networks {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  std::size_t frames = 25;  // N
  double fps = 25.0;
  std::size_t height = 64;  // H
  std::size_t width = 64;   // W
  std::size_t visual_channels = 64;  // K_v
  std::size_t motion_dim = 64;       // K_o
  std::size_t unet_depth = 2;        // L
  std::size_t base_channels = 16;
  std::size_t lip_channels = 16;     // width of the lip front end
  std::size_t motion_channels = 16;  // C_m
  std::size_t tcn_depth = 2;
  std::size_t tcn_kernel = 3;
  std::size_t cma_dim = 32;
  std::size_t cma_heads = 1;
  double clip_bound = 10.0;
  fusion::FusionMode fusion_mode = fusion::FusionMode::kCrossModal;
  bool cma_enabled = true;
  dsp::StftConfig stft;
  flow::FlowParams flow;

  std::size_t samples() const {
    return static_cast<std::size_t>(std::llround(static_cast<double>(frames) / fps * stft.sample_rate));
  }
  double duration() const { return static_cast<double>(frames) / fps; }
  std::size_t freq_bins() const { return stft.freq_bins(); }        // F
  std::size_t spec_frames() const { return stft.frames_for(samples()); }  // T
  std::size_t stride() const { return std::size_t{1} << unet_depth; }
  std::size_t padded(std::size_t n) const { return (n + stride() - 1) / stride() * stride(); }
  std::size_t padded_freq() const { return padded(freq_bins()); }
  std::size_t padded_frames() const { return padded(spec_frames()); }
  std::size_t bottleneck_freq() const { return padded_freq() / stride(); }    // F'
  std::size_t bottleneck_frames() const { return padded_frames() / stride(); }  // T'
  std::size_t bottleneck_channels() const { return base_channels << (unet_depth - 1); }  // C

  // Spatial extent after one stride-2, kernel-3, padding-1 convolution.
  static std::size_t halve(std::size_t n) { return (n - 1) / 2 + 1; }
  std::size_t motion_frames() const { return halve(frames - 1); }  // T_m

  fusion::FusionConfig fusion_config() const {
    fusion::FusionConfig c;
    c.mode = fusion_mode;
    c.cma_enabled = cma_enabled;
    c.visual_channels = visual_channels;
    c.motion_dim = motion_dim;
    c.motion_channels = motion_channels;
    c.motion_frames = motion_frames();
    c.visual_frames = frames;
    c.audio_channels = bottleneck_channels();
    c.audio_freq = bottleneck_freq();
    c.audio_frames = bottleneck_frames();
    c.tcn_depth = tcn_depth;
    c.tcn_kernel = tcn_kernel;
    c.cma_dim = cma_dim;
    c.cma_heads = cma_heads;
    return c;
  }

  /// Throws ConfigError naming the first inconsistent field.
  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
    try {
      stft.validate();
      flow.validate();
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
    if (frames < 2) fail("frames must be >= 2 for motion input");
    if (!(fps > 0.0)) fail("fps must be positive");
    if (height < 8 || width < 8) fail("height and width must be >= 8");
    if (visual_channels == 0 || motion_dim == 0 || base_channels == 0 || lip_channels == 0 ||
        motion_channels == 0 || cma_dim == 0) {
      fail("channel widths must be positive");
    }
    if (unet_depth < 1 || unet_depth > 6) fail("unet_depth must be in [1, 6]");
    if (tcn_kernel % 2 == 0) fail("tcn_kernel must be odd");
    if (cma_heads == 0 || cma_dim % cma_heads != 0) fail("cma_dim must be a multiple of cma_heads");
    if (!(clip_bound > 1.0)) fail("clip_bound must exceed 1 so the mask can express identity");
    if (samples() < stft.win_length) fail("clip shorter than one STFT window");
    if (freq_bins() < stride() || spec_frames() < stride()) {
      fail("spectrogram " + std::to_string(freq_bins()) + "x" + std::to_string(spec_frames()) +
           " too small for unet_depth " + std::to_string(unet_depth));
    }
    if (fusion_mode == fusion::FusionMode::kAddition && motion_dim != visual_channels) {
      fail("addition fusion needs motion_dim == visual_channels");
    }
    const int top = flow.pyramid_levels - 1;
    if (flow.level_extent(std::min(height, width), top) < static_cast<std::size_t>(flow.poly_n)) {
      fail("frames too small for " + std::to_string(flow.pyramid_levels) + " flow pyramid levels");
    }
  }
};

/// One key of the flat `key = value` model configuration. Values travel as
/// doubles; fusion modes use their enumerator index and booleans 0/1.
struct ConfigField {
  enum class Kind { kCount, kInt, kReal, kBool, kMode };
  std::string key;
  Kind kind;
  std::function<double(const ModelConfig&)> get;
  std::function<void(ModelConfig&, double)> set;
};

inline const std::vector<ConfigField>& model_config_fields() {
  using K = ConfigField::Kind;
  using M = ModelConfig;
  auto count = [](const char* key, std::size_t M::*f) {
    return ConfigField{key, K::kCount, [f](const M& c) { return static_cast<double>(c.*f); },
                       [f](M& c, double v) { c.*f = static_cast<std::size_t>(v); }};
  };
  static const std::vector<ConfigField> fields = {
      count("frames", &M::frames),
      {"fps", K::kReal, [](const M& c) { return c.fps; }, [](M& c, double v) { c.fps = v; }},
      count("height", &M::height),
      count("width", &M::width),
      count("visual_channels", &M::visual_channels),
      count("motion_dim", &M::motion_dim),
      count("unet_depth", &M::unet_depth),
      count("base_channels", &M::base_channels),
      count("lip_channels", &M::lip_channels),
      count("motion_channels", &M::motion_channels),
      count("tcn_depth", &M::tcn_depth),
      count("tcn_kernel", &M::tcn_kernel),
      count("cma_dim", &M::cma_dim),
      count("cma_heads", &M::cma_heads),
      {"clip_bound", K::kReal, [](const M& c) { return c.clip_bound; }, [](M& c, double v) { c.clip_bound = v; }},
      {"fusion_mode", K::kMode, [](const M& c) { return static_cast<double>(c.fusion_mode); },
       [](M& c, double v) { c.fusion_mode = static_cast<fusion::FusionMode>(static_cast<int>(v)); }},
      {"cma_enabled", K::kBool, [](const M& c) { return c.cma_enabled ? 1.0 : 0.0; },
       [](M& c, double v) { c.cma_enabled = v != 0.0; }},
      {"stft.sample_rate", K::kReal, [](const M& c) { return c.stft.sample_rate; },
       [](M& c, double v) { c.stft.sample_rate = v; }},
      {"stft.fft_size", K::kCount, [](const M& c) { return static_cast<double>(c.stft.fft_size); },
       [](M& c, double v) { c.stft.fft_size = static_cast<std::size_t>(v); }},
      {"stft.win_length", K::kCount, [](const M& c) { return static_cast<double>(c.stft.win_length); },
       [](M& c, double v) { c.stft.win_length = static_cast<std::size_t>(v); }},
      {"stft.hop", K::kCount, [](const M& c) { return static_cast<double>(c.stft.hop); },
       [](M& c, double v) { c.stft.hop = static_cast<std::size_t>(v); }},
      {"flow.pyramid_levels", K::kInt, [](const M& c) { return static_cast<double>(c.flow.pyramid_levels); },
       [](M& c, double v) { c.flow.pyramid_levels = static_cast<int>(v); }},
      {"flow.pyramid_scale", K::kReal, [](const M& c) { return c.flow.pyramid_scale; },
       [](M& c, double v) { c.flow.pyramid_scale = v; }},
      {"flow.window_size", K::kInt, [](const M& c) { return static_cast<double>(c.flow.window_size); },
       [](M& c, double v) { c.flow.window_size = static_cast<int>(v); }},
      {"flow.iterations", K::kInt, [](const M& c) { return static_cast<double>(c.flow.iterations); },
       [](M& c, double v) { c.flow.iterations = static_cast<int>(v); }},
      {"flow.poly_n", K::kInt, [](const M& c) { return static_cast<double>(c.flow.poly_n); },
       [](M& c, double v) { c.flow.poly_n = static_cast<int>(v); }},
      {"flow.poly_sigma", K::kReal, [](const M& c) { return c.flow.poly_sigma; },
       [](M& c, double v) { c.flow.poly_sigma = v; }},
  };
  return fields;
}

inline const ConfigField* find_model_field(const std::string& key) {
  for (const auto& f : model_config_fields())
    if (f.key == key) return &f;
  return nullptr;
}

/// Parses the textual value of a field; throws ConfigError on malformed input.
inline double parse_field_value(const ConfigField& f, const std::string& text) {
  using K = ConfigField::Kind;
  auto bad = [&]() { return ConfigError("config key '" + f.key + "': invalid value '" + text + "'"); };
  if (f.kind == K::kMode) {
    try {
      return static_cast<double>(fusion::parse_fusion_mode(text));
    } catch (const std::exception&) {
      throw bad();
    }
  }
  if (f.kind == K::kBool) {
    if (text == "true" || text == "1") return 1.0;
    if (text == "false" || text == "0") return 0.0;
    throw bad();
  }
  std::istringstream is(text);
  double v = 0.0;
  if (!(is >> v) || !(is >> std::ws).eof() || !std::isfinite(v)) throw bad();
  if (f.kind != K::kReal && (v != std::floor(v) || v < 0.0)) throw bad();
  return v;
}

inline std::string format_field_value(const ConfigField& f, const ModelConfig& c) {
  using K = ConfigField::Kind;
  const double v = f.get(c);
  switch (f.kind) {
    case K::kMode: return fusion::to_string(c.fusion_mode);
    case K::kBool: return v != 0.0 ? "true" : "false";
    case K::kReal: {
      std::ostringstream os;
      os.precision(17);
      os << v;
      return os.str();
    }
    default: return std::to_string(static_cast<long long>(v));
  }
}

}  // namespace avss::networks
