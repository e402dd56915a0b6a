// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// The `avss` command line. run_cli() parses arguments, dispatches to a
// subcommand and maps failures onto exit codes:
//   0 success, 1 failed check, 2 usage or I/O error, 3 numerical divergence.

#pragma once

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "avss/cli/config.hpp"
#include "avss/cli/gradient_suite.hpp"
#include "avss/networks/separate.hpp"
#include "avss/optical_flow/frames.hpp"
#include "avss/pipeline/dataset.hpp"
#include "avss/pipeline/evaluate.hpp"
#include "avss/pipeline/train.hpp"

namespace avss::cli {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitUsage = 2, kExitDiverged = 3 };

/// Config file first, then --set assignments, then dedicated flags.
struct ConfigSources {
  std::string file;
  std::vector<std::string> assignments;

  CliConfig load() const {
    CliConfig cfg;
    if (!file.empty()) apply_config_file(cfg, file);
    for (const auto& a : assignments) apply_assignment(cfg, a);
    return cfg;
  }
};

struct SynthArgs {
  ConfigSources config;
  std::string out;
  std::size_t clips = 0;
  std::uint64_t seed = 0;
  double duration = 1.0;
};

struct TrainArgs {
  ConfigSources config;
  std::string fusion;
  std::string out;
  std::string data, val, log, resume;
  std::optional<std::uint64_t> iterations, seed;
};

struct SeparateArgs {
  std::string ckpt, mix, frames, flows, out;
};

struct EvalArgs {
  ConfigSources config;
  std::string ckpt, data, estimates, save_estimates, out;
  std::size_t max_pairs = 0;
  bool no_stoi = false;
};

struct FlowArgs {
  ConfigSources config;
  std::string frames, out;
};

struct GradcheckArgs {
  std::optional<std::uint64_t> seed;
  double tolerance = 1e-4;
  std::string filter;
};

inline int cmd_synth(const SynthArgs& a, std::ostream& out) {
  auto cfg = a.config.load().model;
  if (!(a.duration > 0.0)) throw ConfigError("--duration must be positive");
  cfg.frames = static_cast<std::size_t>(std::llround(a.duration * cfg.fps));
  cfg.validate();
  const auto d = pipeline::synthesize_dataset(a.seed, a.clips, cfg, false);
  pipeline::save_dataset(a.out, d);
  out << "wrote " << d.size() << " clips of " << cfg.frames << " frames (" << cfg.height << "x" << cfg.width
      << ") and " << cfg.samples() << " samples to " << a.out << '\n';
  return kExitOk;
}

namespace detail {

inline void check_dataset(const pipeline::Dataset& d, const networks::ModelConfig& cfg, const std::string& dir) {
  for (const auto& c : d.clips) {
    try {
      networks::check_alignment(cfg, c.voice, c.frames);
    } catch (const networks::AlignmentError& e) {
      throw networks::AlignmentError("dataset '" + dir + "' clip " + c.record.clip_id + ": " + e.what());
    }
  }
}

}  // namespace detail

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
  auto cfg = a.config.load();
  if (!a.fusion.empty()) cfg.model.fusion_mode = fusion::parse_fusion_mode(a.fusion);
  if (!a.data.empty()) cfg.train_data = a.data;
  if (!a.val.empty()) cfg.val_data = a.val;
  if (!a.log.empty()) cfg.train.log_path = a.log;
  if (!a.resume.empty()) cfg.train.resume_path = a.resume;
  if (a.iterations) cfg.train.total_iterations = *a.iterations;
  if (a.seed) cfg.train.seed = *a.seed;
  cfg.train.checkpoint_path = a.out;
  if (cfg.train.log_path.empty()) cfg.train.log_path = a.out + ".csv";
  cfg.model.validate();
  cfg.train.validate();
  if (cfg.train_data.empty()) throw pipeline::DatasetError("no training dataset (set data.train or --data)");

  const bool motion = fusion::uses_motion(cfg.model.fusion_mode);
  const auto train_set = pipeline::load_dataset(cfg.train_data, cfg.model.flow, motion);
  detail::check_dataset(train_set, cfg.model, cfg.train_data);
  std::optional<pipeline::Dataset> val_set;
  if (!cfg.val_data.empty()) {
    val_set = pipeline::load_dataset(cfg.val_data, cfg.model.flow, motion);
    detail::check_dataset(*val_set, cfg.model, cfg.val_data);
  }
  networks::AvssModel<float> model(cfg.model, cfg.train.seed);
  out << "training " << fusion::to_string(cfg.model.fusion_mode) << (cfg.model.cma_enabled ? "" : " (no CMA)")
      << " on " << train_set.size() << " clips for " << cfg.train.total_iterations << " iterations\n";
  const auto r = pipeline::train(model, train_set, val_set ? &*val_set : nullptr, cfg.train,
                                 [&](const std::string& line) { out << line << '\n' << std::flush; });
  if (!r.validation.empty()) {
    out << "best val_sdr " << r.best_val_sdr << " at iteration " << r.best_iteration << '\n';
  }
  out << "checkpoint " << a.out << '\n';
  return kExitOk;
}

inline int cmd_separate(const SeparateArgs& a, std::ostream& out) {
  auto model = networks::load_model<float>(a.ckpt);
  const auto mixture = dsp::read_wav(a.mix);
  const auto frames = flow::load_frames(a.frames, model.config.fps);
  std::optional<std::vector<flow::FlowField>> flows;
  if (!a.flows.empty()) flows = flow::read_flows(a.flows);
  const auto est = networks::separate(model, mixture, frames, flows);
  dsp::write_wav(a.out, est);
  out << "wrote " << est.samples.size() << " samples to " << a.out << '\n';
  return kExitOk;
}

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (a.ckpt.empty() == a.estimates.empty()) throw ConfigError("eval needs exactly one of --ckpt and --estimates");
  pipeline::EvalOptions opts;
  opts.max_pairs = a.max_pairs;
  opts.with_stoi = !a.no_stoi;
  opts.threads = pipeline::thread_budget();
  pipeline::EvalReport report;
  if (!a.ckpt.empty()) {
    auto model = networks::load_model<float>(a.ckpt);
    const auto test = pipeline::load_dataset(a.data, model.config.flow, model.uses_motion());
    detail::check_dataset(test, model.config, a.data);
    if (!a.save_estimates.empty()) std::filesystem::create_directories(a.save_estimates);
    report = pipeline::evaluate_estimates(
        test, model.config,
        [&](const pipeline::EvalJob& job) {
          const auto& s = *job.sample;
          auto est = networks::resynthesize(networks::predict_mask(model, s.mixture_spec, s.frames, s.flows),
                                            s.mixture_spec, s.mixture.samples.size());
          if (!a.save_estimates.empty()) {
            dsp::write_wav((std::filesystem::path(a.save_estimates) / (job.clip_id + ".wav")).string(), est);
          }
          return est;
        },
        opts);
  } else {
    const auto cfg = a.config.load().model;
    cfg.validate();
    const auto test = pipeline::load_dataset(a.data, cfg.flow, false);
    detail::check_dataset(test, cfg, a.data);
    report = pipeline::evaluate_estimates(
        test, cfg,
        [&](const pipeline::EvalJob& job) {
          const auto path = (std::filesystem::path(a.estimates) / (job.clip_id + ".wav")).string();
          auto est = dsp::read_wav(path);
          if (est.samples.size() != job.sample->mixture.samples.size()) {
            throw dsp::IoError("'" + path + "' has " + std::to_string(est.samples.size()) + " samples, expected " +
                               std::to_string(job.sample->mixture.samples.size()));
          }
          return est;
        },
        opts);
  }
  std::ofstream os(a.out);
  if (!os) throw dsp::IoError("cannot open '" + a.out + "' for writing");
  pipeline::write_report_csv(os, report);
  if (!os) throw dsp::IoError("write failed for '" + a.out + "'");
  out << std::fixed << std::setprecision(2) << report.rows.size() << " estimates: SDR " << report.separated.sdr
      << " dB (mixture " << report.mixture.sdr << " dB), SIR " << report.separated.sir << ", SAR "
      << report.separated.sar;
  if (opts.with_stoi) out << ", STOI " << std::setprecision(3) << report.separated.stoi;
  out << '\n';
  return kExitOk;
}

inline int cmd_flow(const FlowArgs& a, std::ostream& out) {
  const auto cfg = a.config.load().model;
  cfg.flow.validate();
  const auto frames = flow::load_frames(a.frames, cfg.fps);
  if (frames.size() < 2) throw flow::IoError("'" + a.frames + "' holds fewer than two frames");
  const auto flows = flow::flow_sequence(frames, cfg.flow);
  flow::write_flows(a.out, flows);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& f : flows) {
    for (std::size_t i = 0; i < f.dx.size(); ++i) sum += std::hypot(f.dx[i], f.dy[i]);
    n += f.dx.size();
  }
  out << "wrote " << flows.size() << " flow fields to " << a.out << "; mean |flow| " << sum / static_cast<double>(n)
      << " px\n";
  return kExitOk;
}

inline int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  const std::uint64_t seed = a.seed ? *a.seed : (std::uint64_t{std::random_device{}()} << 32) | std::random_device{}();
  out << "gradient check, seed " << seed << ", tolerance " << a.tolerance << '\n';
  std::size_t failed = 0;
  const auto results = run_gradient_suite(seed, a.tolerance, a.filter, [&](const GradCaseResult& r) {
    out << (r.passed ? "ok   " : "FAIL ") << std::left << std::setw(28) << r.name << std::right << std::scientific
        << std::setprecision(2) << r.check.max_rel_error << std::defaultfloat << "  checked " << r.check.checked;
    if (r.check.skipped > 0) out << " skipped " << r.check.skipped;
    if (!r.passed) out << "  worst " << r.check.worst;
    out << '\n' << std::flush;
    if (!r.passed) ++failed;
  });
  if (results.empty()) throw ConfigError("no gradient case matches '" + a.filter + "'");
  out << (results.size() - failed) << "/" << results.size() << " cases passed\n";
  return failed == 0 ? kExitOk : kExitCheckFailed;
}

namespace detail {

inline void add_config_options(CLI::App* sub, ConfigSources& c) {
  sub->add_option("--config", c.file, "key = value configuration file")->check(CLI::ExistingFile);
  sub->add_option("--set", c.assignments, "override one configuration key (key=value), repeatable");
}

}  // namespace detail

/// Parses `args` (program name first) and runs the chosen subcommand.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Audio-visual speech separation with optical flow and cross-modal fusion", "avss"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "avss 1.0.0");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic audio-visual dataset");
  detail::add_config_options(s, synth.config);
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--clips", synth.clips, "number of clips")->required()->check(CLI::PositiveNumber);
  s->add_option("--seed", synth.seed, "collection seed")->required();
  s->add_option("--duration", synth.duration, "clip length in seconds")->capture_default_str();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train a separation model");
  detail::add_config_options(t, train.config);
  t->add_option("--fusion", train.fusion, "cross_modal, concat, add or lip_only")
      ->check(CLI::IsMember({"cross_modal", "concat", "concatenation", "add", "addition", "lip_only"}));
  t->add_option("--out", train.out, "checkpoint path; <out>.state holds the resumable state")->required();
  t->add_option("--data", train.data, "training dataset directory (data.train)");
  t->add_option("--val", train.val, "validation dataset directory (data.val)");
  t->add_option("--log", train.log, "CSV log path (default <out>.csv)");
  t->add_option("--resume", train.resume, "resume from a .state file");
  t->add_option("--iterations", train.iterations, "total iterations (train.iterations)");
  t->add_option("--seed", train.seed, "training seed (train.seed)");

  SeparateArgs sep;
  auto* p = app.add_subcommand("separate", "extract the speaker seen in the frames from a mixture");
  p->add_option("--ckpt", sep.ckpt, "model checkpoint")->required()->check(CLI::ExistingFile);
  p->add_option("--mix", sep.mix, "mixture WAV")->required()->check(CLI::ExistingFile);
  p->add_option("--frames", sep.frames, "AVSSFRM file or PGM directory")->required()->check(CLI::ExistingPath);
  p->add_option("--flows", sep.flows, "precomputed AVSSFLW flows")->check(CLI::ExistingFile);
  p->add_option("--out", sep.out, "output WAV")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "score separation on a dataset (SDR, SIR, SAR, STOI)");
  detail::add_config_options(e, ev.config);
  e->add_option("--data", ev.data, "test dataset directory")->required();
  e->add_option("--ckpt", ev.ckpt, "model checkpoint")->check(CLI::ExistingFile);
  e->add_option("--estimates", ev.estimates, "directory of <clip_id>.wav estimates")->check(CLI::ExistingDirectory);
  e->add_option("--save-estimates", ev.save_estimates, "write model estimates as <clip_id>.wav");
  e->add_option("--out", ev.out, "report CSV")->required();
  e->add_option("--max-pairs", ev.max_pairs, "limit the number of speaker pairs");
  e->add_flag("--no-stoi", ev.no_stoi, "skip STOI");

  FlowArgs fl;
  auto* f = app.add_subcommand("flow", "dense optical flow of a frame sequence");
  detail::add_config_options(f, fl.config);
  f->add_option("--frames", fl.frames, "AVSSFRM file or PGM directory")->required()->check(CLI::ExistingPath);
  f->add_option("--out", fl.out, "output AVSSFLW file")->required();

  GradcheckArgs gc;
  auto* g = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op and model");
  g->add_option("--seed", gc.seed, "random seed (fresh when omitted)");
  g->add_option("--tolerance", gc.tolerance, "maximum relative error")->capture_default_str();
  g->add_option("--filter", gc.filter, "run only cases whose name contains this text");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "avss: " << ex.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*s) return cmd_synth(synth, out);
    if (*t) return cmd_train(train, out);
    if (*p) return cmd_separate(sep, out);
    if (*e) return cmd_eval(ev, out);
    if (*f) return cmd_flow(fl, out);
    if (*g) return cmd_gradcheck(gc, out);
  } catch (const pipeline::NumericalError& ex) {
    err << "avss: " << ex.what() << '\n';
    return kExitDiverged;
  } catch (const std::exception& ex) {
    err << "avss: " << ex.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace avss::cli
