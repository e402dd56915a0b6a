// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Flat `key = value` configuration shared by the subcommands. Model keys are
// the ModelConfig field names (`frames`, `stft.hop`, `flow.poly_n`, ...);
// training keys live under `train.` and dataset paths under `data.`.
// '#' starts a comment. Later assignments win, so command-line overrides are
// applied after the file.

#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "avss/networks/config.hpp"
#include "avss/pipeline/train.hpp"

namespace avss::cli {

using networks::ConfigError;

struct CliConfig {
  networks::ModelConfig model;
  pipeline::TrainConfig train;
  std::string train_data;  // data.train
  std::string val_data;    // data.val
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_number(const std::string& key, const std::string& text, bool integral) {
  std::istringstream is(text);
  double v = 0.0;
  if (!(is >> v) || !(is >> std::ws).eof() || !std::isfinite(v) ||
      (integral && (v != std::floor(v) || v < 0.0))) {
    throw ConfigError("config key '" + key + "': invalid value '" + text + "'");
  }
  return v;
}

struct ExtraField {
  std::function<void(CliConfig&, const std::string&)> set;
  std::function<std::string(const CliConfig&)> get;
};

inline const std::map<std::string, ExtraField>& extra_fields() {
  using C = CliConfig;
  auto real = [](const char* key, double pipeline::TrainConfig::*f) {
    return ExtraField{[key, f](C& c, const std::string& v) { c.train.*f = parse_number(key, v, false); },
                      [f](const C& c) {
                        std::ostringstream os;
                        os.precision(17);
                        os << c.train.*f;
                        return os.str();
                      }};
  };
  auto u64 = [](const char* key, std::uint64_t pipeline::TrainConfig::*f) {
    return ExtraField{
        [key, f](C& c, const std::string& v) { c.train.*f = static_cast<std::uint64_t>(parse_number(key, v, true)); },
        [f](const C& c) { return std::to_string(c.train.*f); }};
  };
  auto size = [](const char* key, std::size_t pipeline::TrainConfig::*f) {
    return ExtraField{
        [key, f](C& c, const std::string& v) { c.train.*f = static_cast<std::size_t>(parse_number(key, v, true)); },
        [f](const C& c) { return std::to_string(c.train.*f); }};
  };
  auto path = [](std::string C::*f) {
    return ExtraField{[f](C& c, const std::string& v) { c.*f = v; }, [f](const C& c) { return c.*f; }};
  };
  auto train_path = [](std::string pipeline::TrainConfig::*f) {
    return ExtraField{[f](C& c, const std::string& v) { c.train.*f = v; }, [f](const C& c) { return c.train.*f; }};
  };
  static const std::map<std::string, ExtraField> fields = {
      {"train.lr", real("train.lr", &pipeline::TrainConfig::lr)},
      {"train.weight_decay", real("train.weight_decay", &pipeline::TrainConfig::weight_decay)},
      {"train.halving_interval", u64("train.halving_interval", &pipeline::TrainConfig::halving_interval)},
      {"train.batch_size", size("train.batch_size", &pipeline::TrainConfig::batch_size)},
      {"train.iterations", u64("train.iterations", &pipeline::TrainConfig::total_iterations)},
      {"train.seed", u64("train.seed", &pipeline::TrainConfig::seed)},
      {"train.log_interval", u64("train.log_interval", &pipeline::TrainConfig::log_interval)},
      {"train.val_interval", u64("train.val_interval", &pipeline::TrainConfig::val_interval)},
      {"train.val_pairs", size("train.val_pairs", &pipeline::TrainConfig::val_pairs)},
      {"train.log", train_path(&pipeline::TrainConfig::log_path)},
      {"train.resume", train_path(&pipeline::TrainConfig::resume_path)},
      {"data.train", path(&C::train_data)},
      {"data.val", path(&C::val_data)},
  };
  return fields;
}

}  // namespace detail

/// Every accepted key, model keys first.
inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : networks::model_config_fields()) keys.push_back(f.key);
  for (const auto& [k, f] : detail::extra_fields()) keys.push_back(k);
  return keys;
}

/// Assigns one key; throws ConfigError naming an unknown key or bad value.
inline void set_value(CliConfig& cfg, const std::string& key, const std::string& value) {
  if (const auto* f = networks::find_model_field(key)) {
    f->set(cfg.model, networks::parse_field_value(*f, value));
    return;
  }
  const auto& extra = detail::extra_fields();
  const auto it = extra.find(key);
  if (it == extra.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(cfg, value);
}

/// Applies `key=value` text, as given to --set.
inline void apply_assignment(CliConfig& cfg, const std::string& text, const std::string& origin = "--set") {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError(origin + ": expected key = value, got '" + text + "'");
  const auto key = detail::trim(text.substr(0, eq));
  try {
    set_value(cfg, key, detail::trim(text.substr(eq + 1)));
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
}

inline void apply_config_text(CliConfig& cfg, std::istream& is, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (detail::trim(line).empty()) continue;
    apply_assignment(cfg, line, source + ":" + std::to_string(lineno));
  }
}

inline void apply_config_file(CliConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  apply_config_text(cfg, is, path);
}

/// Every key with its current value, one `key = value` line each.
inline void write_config(std::ostream& os, const CliConfig& cfg) {
  for (const auto& f : networks::model_config_fields()) {
    os << f.key << " = " << networks::format_field_value(f, cfg.model) << '\n';
  }
  for (const auto& [k, f] : detail::extra_fields()) {
    const auto v = f.get(cfg);
    if (!v.empty()) os << k << " = " << v << '\n';
  }
}

}  // namespace avss::cli
