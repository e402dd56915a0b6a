// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "avss/numerics/adamw.hpp"
#include "avss/pipeline/evaluate.hpp"

namespace avss::pipeline {

class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::uint64_t iteration)
      : std::runtime_error(what), iteration(iteration) {}
  std::uint64_t iteration;
};

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-2;
  std::uint64_t halving_interval = 2000;
  std::size_t batch_size = 8;
  std::uint64_t total_iterations = 10000;
  std::uint64_t seed = 0;
  std::uint64_t log_interval = 50;
  std::uint64_t val_interval = 500;  // 0 disables validation
  std::size_t val_pairs = 4;
  std::string checkpoint_path;  // best model; "<path>.state" holds the resumable state
  std::string log_path;         // CSV iter,loss,lr,val_sdr
  std::string resume_path;

  void validate() const {
    auto fail = [](const std::string& m) { throw networks::ConfigError("train config: " + m); };
    if (!(lr > 0.0)) fail("lr must be positive");
    if (weight_decay < 0.0) fail("weight_decay must be non-negative");
    if (halving_interval == 0) fail("halving_interval must be > 0");
    if (batch_size < 2) fail("batch_size must be >= 2 for batch statistics");
    if (log_interval == 0) fail("log_interval must be > 0");
  }
};

struct TrainResult {
  std::vector<double> losses;  // one per iteration run
  std::vector<std::pair<std::uint64_t, double>> validation;
  double best_val_sdr = -std::numeric_limits<double>::infinity();
  std::uint64_t best_iteration = 0;
  std::uint64_t start_iteration = 0;
};

/// Batch composition of iteration `iteration`: a pure function of the seed,
/// so a resumed run draws the same samples.
inline std::vector<std::pair<std::size_t, std::size_t>> batch_pairs(const Dataset& d, std::uint64_t seed,
                                                                    std::uint64_t iteration, std::size_t batch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(iteration), static_cast<std::uint32_t>(iteration >> 32)};
  std::mt19937_64 rng(seq);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < batch; ++b) out.push_back(draw_pair(d, rng));
  return out;
}

template <typename T>
Batch<T> assemble_batch(const networks::AvssModel<T>& model, const Dataset& d,
                        const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::vector<TrainingSample> samples;
  for (const auto& [i, j] : pairs) samples.push_back(make_sample(d.clips[i].view(), d.clips[j].view(), model.config));
  return make_batch<T>(samples, model.uses_motion());
}

/// One AdamW update on `batch` at learning rate `lr`; returns the loss.
template <typename T>
double train_step(networks::AvssModel<T>& model, AdamW<T>& opt, const Batch<T>& batch, double lr) {
  opt.set_lr(static_cast<T>(lr));
  opt.zero_grad();
  auto out = model.forward(batch.x_v, batch.x_m, batch.x_a, NormMode::kTrain);
  auto loss = mask_loss(out.mask, batch.target);
  const double value = static_cast<double>(loss.item());
  if (!std::isfinite(value)) return value;
  backward(loss);
  opt.step();
  return value;
}

template <typename T>
AdamW<T> make_optimizer(const networks::AvssModel<T>& model, const TrainConfig& cfg) {
  AdamWOptions<T> o;
  o.lr = static_cast<T>(cfg.lr);
  o.weight_decay = static_cast<T>(cfg.weight_decay);
  return AdamW<T>(model.parameters(), o);
}

/// Mean SDR of the first `pairs` evaluation pairs.
template <typename T>
double validation_sdr(networks::AvssModel<T>& model, const Dataset& val, std::size_t pairs) {
  EvalOptions o;
  o.max_pairs = pairs;
  o.with_stoi = false;
  return evaluate(model, val, o).separated.sdr;
}

template <typename T>
void save_state(const std::string& path, const networks::AvssModel<T>& model, AdamW<T>& opt, std::uint64_t next_iteration,
                const TrainResult& r) {
  auto records = model.to_records();
  records.push_back(checkpoint::scalar_record("train.iteration", static_cast<double>(next_iteration)));
  records.push_back(checkpoint::scalar_record("train.best_sdr", r.best_val_sdr));
  records.push_back(checkpoint::scalar_record("train.best_iteration", static_cast<double>(r.best_iteration)));
  records.push_back(checkpoint::scalar_record("optim.step", static_cast<double>(opt.step_count())));
  const auto& params = opt.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Shape& s = params[i].value.shape();
    records.push_back(checkpoint::to_record("optim.m." + params[i].name, Tensor<T>(s, opt.first_moment(i))));
    records.push_back(checkpoint::to_record("optim.v." + params[i].name, Tensor<T>(s, opt.second_moment(i))));
  }
  checkpoint::write(path, records);
}

template <typename T>
std::uint64_t load_state(const std::string& path, networks::AvssModel<T>& model, AdamW<T>& opt, TrainResult& r) {
  const auto records = checkpoint::read(path);
  model.load_records(records);
  const auto idx = checkpoint::index(records);
  auto scalar = [&](const std::string& name) {
    const auto it = idx.find(name);
    if (it == idx.end()) throw checkpoint::FormatError("resume state '" + path + "' lacks '" + name + "'");
    return static_cast<double>(it->second->values.at(0));
  };
  opt.set_step_count(static_cast<std::uint64_t>(scalar("optim.step")));
  r.best_val_sdr = scalar("train.best_sdr");
  r.best_iteration = static_cast<std::uint64_t>(scalar("train.best_iteration"));
  const auto& params = opt.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (auto [prefix, buf] : {std::pair{"optim.m.", &opt.first_moment(i)}, std::pair{"optim.v.", &opt.second_moment(i)}}) {
      const auto it = idx.find(prefix + params[i].name);
      if (it == idx.end()) throw checkpoint::FormatError("resume state lacks moments of '" + params[i].name + "'");
      Tensor<T> t(params[i].value.shape());
      checkpoint::load_into(*it->second, t);
      buf->assign(t.data().begin(), t.data().end());
    }
  }
  return static_cast<std::uint64_t>(scalar("train.iteration"));
}

/// AdamW training with a halving learning-rate schedule, periodic validation
/// and best-checkpoint selection by validation SDR. Throws NumericalError on a
/// non-finite loss.
template <typename T>
TrainResult train(networks::AvssModel<T>& model, const Dataset& train_set, const Dataset* val_set,
                  const TrainConfig& cfg, const std::function<void(const std::string&)>& progress = {}) {
  cfg.validate();
  auto opt = make_optimizer(model, cfg);
  TrainResult result;
  std::uint64_t start = 0;
  if (!cfg.resume_path.empty()) start = load_state(cfg.resume_path, model, opt, result);
  result.start_iteration = start;

  std::ofstream log;
  if (!cfg.log_path.empty()) {
    const bool append = start > 0 && std::filesystem::exists(cfg.log_path);
    log.open(cfg.log_path, append ? std::ios::app : std::ios::trunc);
    if (!log) throw DatasetError("cannot open log '" + cfg.log_path + "'");
    if (!append) log << "iter,loss,lr,val_sdr\n";
  }
  const bool validating = val_set != nullptr && cfg.val_interval > 0;
  double window = 0.0;
  std::uint64_t window_count = 0;
  for (std::uint64_t it = start; it < cfg.total_iterations; ++it) {
    const double lr = halving_schedule(cfg.lr, it, cfg.halving_interval);
    const auto batch = assemble_batch(model, train_set, batch_pairs(train_set, cfg.seed, it, cfg.batch_size));
    const double loss = train_step(model, opt, batch, lr);
    if (!std::isfinite(loss)) {
      throw NumericalError("training diverged: non-finite loss at iteration " + std::to_string(it), it);
    }
    result.losses.push_back(loss);
    window += loss;
    ++window_count;

    std::optional<double> val;
    if (validating && (it + 1) % cfg.val_interval == 0) {
      val = validation_sdr(model, *val_set, cfg.val_pairs);
      result.validation.emplace_back(it + 1, *val);
      if (*val > result.best_val_sdr) {
        result.best_val_sdr = *val;
        result.best_iteration = it + 1;
        if (!cfg.checkpoint_path.empty()) networks::save_model(cfg.checkpoint_path, model);
      }
    }
    if ((it + 1) % cfg.log_interval == 0 || it + 1 == cfg.total_iterations) {
      const double mean = window / static_cast<double>(window_count);
      if (log.is_open()) {
        log << (it + 1) << ',' << std::setprecision(9) << mean << ',' << lr << ',';
        if (val) log << *val;
        log << '\n' << std::flush;
      }
      if (progress) {
        std::ostringstream os;
        os << "iter " << (it + 1) << " loss " << mean << " lr " << lr;
        if (val) os << " val_sdr " << *val;
        progress(os.str());
      }
      window = 0.0;
      window_count = 0;
    } else if (val && progress) {
      std::ostringstream os;
      os << "iter " << (it + 1) << " val_sdr " << *val;
      progress(os.str());
    }
    if (validating && val && !cfg.checkpoint_path.empty()) save_state(cfg.checkpoint_path + ".state", model, opt, it + 1, result);
  }
  if (!cfg.checkpoint_path.empty()) {
    if (!validating) networks::save_model(cfg.checkpoint_path, model);
    save_state(cfg.checkpoint_path + ".state", model, opt, cfg.total_iterations, result);
  }
  return result;
}

}  // namespace avss::pipeline
