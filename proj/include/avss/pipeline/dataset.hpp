// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Clip collections, on disk and in memory. A dataset directory holds one WAV
// and one AVSSFRM file per clip plus `manifest.txt`, whose lines read
//   clip_id speaker_id seed wav_path frames_path
// with paths relative to the directory and '#' starting a comment.

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "avss/networks/config.hpp"
#include "avss/pipeline/sample.hpp"
#include "avss/pipeline/synth.hpp"

namespace avss::pipeline {

inline constexpr const char* kManifestName = "manifest.txt";

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ClipRecord {
  std::string clip_id;
  std::uint32_t speaker_id = 0;
  std::uint64_t seed = 0;
  std::string wav_path;
  std::string frames_path;
};

struct DataClip {
  ClipRecord record;
  flow::FrameSequence frames;
  dsp::Waveform voice;
  std::vector<flow::FlowField> flows;

  SourceView view() const { return {&frames, flows.empty() ? nullptr : &flows, &voice}; }
  std::size_t pitch_class() const { return record.speaker_id % kPitchClasses; }
};

struct Dataset {
  std::vector<DataClip> clips;
  std::size_t size() const { return clips.size(); }
};

/// Worker count from AVSS_THREADS, defaulting to the hardware concurrency.
inline std::size_t thread_budget() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("AVSS_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) n = static_cast<std::size_t>(v);
  }
  return n;
}

/// Runs fn(0..count-1) on up to `threads` workers with a strided split.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(count, 1));
  if (workers == 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t k = w; k < count; k += workers) fn(k);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline ClipSpec clip_spec(const networks::ModelConfig& cfg) {
  return {cfg.frames, cfg.fps, cfg.stft.sample_rate, cfg.height, cfg.width};
}

/// Speaker and seed of clip `index` in a collection generated from `seed`.
/// Speakers cycle through 32 identities; clip seeds never collide between
/// collection seeds below 2^32.
inline ClipRecord synthetic_record(std::uint64_t seed, std::size_t index) {
  std::ostringstream id;
  id << "clip_" << std::setw(4) << std::setfill('0') << index;
  ClipRecord r;
  r.clip_id = id.str();
  r.speaker_id = static_cast<std::uint32_t>(index % kPitchClasses);
  r.seed = (seed << 32) | static_cast<std::uint64_t>(index);
  r.wav_path = r.clip_id + ".wav";
  r.frames_path = r.clip_id + ".frm";
  return r;
}

inline void compute_flows(Dataset& d, const flow::FlowParams& params, std::size_t threads = thread_budget()) {
  parallel_for(d.size(), threads, [&](std::size_t k) { d.clips[k].flows = flow::flow_sequence(d.clips[k].frames, params); });
}

/// `count` clips generated in memory; flows are computed when `with_flows`.
inline Dataset synthesize_dataset(std::uint64_t seed, std::size_t count, const networks::ModelConfig& cfg,
                                  bool with_flows = true) {
  Dataset d;
  const ClipSpec spec = clip_spec(cfg);
  d.clips.resize(count);
  parallel_for(count, thread_budget(), [&](std::size_t i) {
    DataClip& c = d.clips[i];
    c.record = synthetic_record(seed, i);
    auto clip = synthesize_clip(c.record.speaker_id, c.record.seed, spec);
    c.frames = std::move(clip.frames);
    c.voice = std::move(clip.voice);
  });
  if (with_flows) compute_flows(d, cfg.flow);
  return d;
}

inline void write_manifest(const std::string& path, const std::vector<ClipRecord>& records) {
  std::ofstream os(path);
  if (!os) throw DatasetError("cannot open '" + path + "' for writing");
  os << "# clip_id speaker_id seed wav frames\n";
  for (const auto& r : records) {
    os << r.clip_id << ' ' << r.speaker_id << ' ' << r.seed << ' ' << r.wav_path << ' ' << r.frames_path << '\n';
  }
  if (!os) throw DatasetError("write failed for '" + path + "'");
}

inline std::vector<ClipRecord> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DatasetError("cannot open manifest '" + path + "'");
  std::vector<ClipRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    ClipRecord r;
    if (!(ls >> r.clip_id)) continue;
    if (!(ls >> r.speaker_id >> r.seed >> r.wav_path >> r.frames_path)) {
      throw DatasetError("manifest '" + path + "' line " + std::to_string(lineno) + ": expected 5 fields");
    }
    out.push_back(std::move(r));
  }
  return out;
}

/// Writes every clip and the manifest into `dir`, creating it if needed.
inline void save_dataset(const std::string& dir, const Dataset& d) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DatasetError("cannot create directory '" + dir + "'");
  std::vector<ClipRecord> records;
  for (const auto& c : d.clips) {
    dsp::write_wav((fs::path(dir) / c.record.wav_path).string(), c.voice);
    flow::write_frames((fs::path(dir) / c.record.frames_path).string(), c.frames);
    records.push_back(c.record);
  }
  write_manifest((fs::path(dir) / kManifestName).string(), records);
}

/// Reads a dataset directory; flows are computed with `flow_params` unless
/// `with_flows` is false.
inline Dataset load_dataset(const std::string& dir, const flow::FlowParams& flow_params, bool with_flows = true) {
  namespace fs = std::filesystem;
  const auto manifest = fs::path(dir) / kManifestName;
  if (!fs::is_regular_file(manifest)) throw DatasetError("no dataset at '" + dir + "' (missing " + kManifestName + ")");
  Dataset d;
  for (auto& r : read_manifest(manifest.string())) {
    DataClip c;
    c.voice = dsp::read_wav((fs::path(dir) / r.wav_path).string());
    c.frames = flow::read_frames((fs::path(dir) / r.frames_path).string());
    c.record = std::move(r);
    d.clips.push_back(std::move(c));
  }
  if (d.clips.empty()) throw DatasetError("dataset at '" + dir + "' is empty");
  if (with_flows) compute_flows(d, flow_params);
  return d;
}

/// Uniform ordered pair of clips from different pitch classes.
inline std::pair<std::size_t, std::size_t> draw_pair(const Dataset& d, std::mt19937_64& rng) {
  if (d.size() < 2) throw DatasetError("need at least two clips to mix");
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const std::size_t i = rng() % d.size(), j = rng() % d.size();
    if (d.clips[i].pitch_class() != d.clips[j].pitch_class()) return {i, j};
  }
  throw DatasetError("dataset has no two clips of different pitch");
}

/// Fixed evaluation pairs: each clip is matched with the next unused clip of
/// a different pitch class.
inline std::vector<std::pair<std::size_t, std::size_t>> evaluation_pairs(const Dataset& d) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::vector<bool> used(d.size(), false);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (used[i]) continue;
    for (std::size_t j = i + 1; j < d.size(); ++j) {
      if (!used[j] && d.clips[j].pitch_class() != d.clips[i].pitch_class()) {
        used[i] = used[j] = true;
        out.emplace_back(i, j);
        break;
      }
    }
  }
  return out;
}

}  // namespace avss::pipeline
