// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "avss/fusion/fuse.hpp"
#include "avss/networks/config.hpp"
#include "avss/networks/encoders.hpp"
#include "avss/networks/unet.hpp"
#include "avss/numerics/checkpoint.hpp"

namespace avss::networks {

template <typename T>
struct ModelOutput {
  Tensor<T> mask;  // [B, 2, F, T]
  std::optional<Tensor<T>> attention;
};

/// Lip network + motion network + U-Net around the fusion layer.
template <typename T>
struct AvssModel {
  ModelConfig config;
  LipNetwork<T> lip;
  MotionNetwork<T> motion;
  SeparatorUNet<T> unet;
  fusion::Fusion<T> fuse;

  AvssModel() = default;
  AvssModel(const ModelConfig& cfg, std::uint64_t seed) : config(cfg) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    lip = LipNetwork<T>(cfg, rng);
    if (fusion::uses_motion(cfg.fusion_mode)) motion = MotionNetwork<T>(cfg, rng);
    unet = SeparatorUNet<T>(cfg, rng);
    fuse = fusion::Fusion<T>(cfg.fusion_config(), rng);
  }

  bool uses_motion() const { return fusion::uses_motion(config.fusion_mode); }

  /// x_v [B, 1, N, H, W]; x_m [B, 2, N-1, H, W] (unused in lip_only mode);
  /// x_a [B, 2, F, T].
  ModelOutput<T> forward(const Tensor<T>& x_v, const Tensor<T>& x_m, const Tensor<T>& x_a, NormMode mode) {
    if (x_v.rank() != 5 || x_a.rank() != 4 || x_v.extent(0) != x_a.extent(0)) {
      throw DimensionError("forward: batch mismatch between " + to_string(x_v.shape()) + " and " +
                           to_string(x_a.shape()));
    }
    auto enc = unet.encode(x_a, mode);
    const auto f_v = lip(x_v, mode);
    Tensor<T> f_m;
    if (uses_motion()) {
      if (x_m.rank() != 5 || x_m.extent(0) != x_v.extent(0)) {
        throw DimensionError("forward: motion input " + (x_m.defined() ? to_string(x_m.shape()) : "<none>") +
                             " does not match batch " + std::to_string(x_v.extent(0)));
      }
      f_m = motion(x_m, mode);
    }
    auto fused = fuse(f_v, f_m, enc.f_a, mode);
    return {unet.decode(fused.f_avm, enc.skips, mode), fused.attention};
  }

  StateDict<T> state_dict() const {
    StateDict<T> sd;
    lip.collect("lip", sd);
    if (uses_motion()) motion.collect("motion", sd);
    unet.collect("unet", sd);
    fuse.collect("fusion", sd);
    return sd;
  }

  NamedTensors<T> parameters() const { return state_dict().params; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.value.size();
    return n;
  }

  /// Config keys as "config.<key>", then parameters and buffers.
  std::vector<checkpoint::Record> to_records() const {
    std::vector<checkpoint::Record> out;
    for (const auto& f : model_config_fields()) out.push_back(checkpoint::scalar_record("config." + f.key, f.get(config)));
    const auto sd = state_dict();
    for (const auto& p : sd.params) out.push_back(checkpoint::to_record(p.name, p.value));
    for (const auto& b : sd.buffers) out.push_back(checkpoint::to_record(b.name, b.value));
    return out;
  }

  /// Copies every parameter and buffer from `records`; throws if one is
  /// missing or mis-shaped.
  void load_records(const std::vector<checkpoint::Record>& records) {
    const auto idx = checkpoint::index(records);
    auto sd = state_dict();
    auto load = [&](NamedTensors<T>& list) {
      for (auto& nt : list) {
        const auto it = idx.find(nt.name);
        if (it == idx.end()) throw checkpoint::FormatError("checkpoint: missing record '" + nt.name + "'");
        checkpoint::load_into(*it->second, nt.value);
      }
    };
    load(sd.params);
    load(sd.buffers);
  }
};

inline double round_to_float_digits(float v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.7g", static_cast<double>(v));
  return std::strtod(buf, nullptr);
}

/// Model configuration stored in checkpoint records. Keys absent from the
/// records keep their defaults.
inline ModelConfig config_from_records(const std::vector<checkpoint::Record>& records) {
  ModelConfig cfg;
  const auto idx = checkpoint::index(records);
  for (const auto& f : model_config_fields()) {
    const auto it = idx.find("config." + f.key);
    if (it == idx.end() || it->second->values.size() != 1) continue;
    // Records hold f32; 7 significant digits recover decimal settings such as 1.1.
    const double v = round_to_float_digits(it->second->values[0]);
    if (f.kind == ConfigField::Kind::kMode && (v < 0 || v > 3)) {
      throw ConfigError("checkpoint: fusion_mode index " + std::to_string(v) + " out of range");
    }
    f.set(cfg, v);
  }
  cfg.validate();
  return cfg;
}

template <typename T>
void save_model(const std::string& path, const AvssModel<T>& model,
                const std::vector<checkpoint::Record>& extra = {}) {
  auto records = model.to_records();
  records.insert(records.end(), extra.begin(), extra.end());
  checkpoint::write(path, records);
}

template <typename T>
AvssModel<T> load_model(const std::string& path) {
  const auto records = checkpoint::read(path);
  AvssModel<T> model(config_from_records(records), 0);
  model.load_records(records);
  return model;
}

}  // namespace avss::networks
