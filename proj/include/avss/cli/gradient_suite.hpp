// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "avss/networks/model.hpp"
#include "avss/numerics/gradcheck.hpp"
#include "avss/pipeline/sample.hpp"

namespace avss::cli {

struct GradCase {
  std::string name;
  std::function<GradCheckResult(std::uint64_t seed)> run;
};

struct GradCaseResult {
  std::string name;
  GradCheckResult check;
  bool passed = false;
};

namespace detail {

using TD = Tensor<double>;

class Harness {
 public:
  explicit Harness(std::uint64_t seed) : rng_(seed) {}

  std::mt19937_64& rng() { return rng_; }

  /// Checked input with entries uniform in [lo, hi].
  TD input(const std::string& name, const Shape& shape, double lo = -2.0, double hi = 2.0) {
    TD t = constant(shape, lo, hi);
    t.set_requires_grad(true);
    params_.push_back({name, t});
    return t;
  }

  /// Checked input bounded away from zero, for inputs feeding a kink.
  TD off_kink(const std::string& name, const Shape& shape) {
    TD t = input(name, shape);
    for (double& v : t.mutable_data()) v = v < 0 ? v - 0.1 : v + 0.1;
    return t;
  }

  TD constant(const Shape& shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(numel(shape));
    for (double& x : v) x = u(rng_);
    return TD(shape, std::move(v));
  }

  void add(const NamedTensors<double>& more, const std::string& prefix = "") {
    for (const auto& p : more) params_.push_back({prefix + p.name, p.value});
  }

  template <typename Layer>
  void add_layer(const Layer& layer, const std::string& prefix) {
    StateDict<double> sd;
    layer.collect(prefix, sd);
    add(sd.params);
  }

  /// Checks sum(f() * probe) for a fixed random probe.
  GradCheckResult check(const std::function<TD()>& f, bool kinks = false) {
    TD probe;
    {
      NoGradGuard guard;
      probe = constant(f().shape());
    }
    GradCheckOptions o;
    if (kinks) {
      o.step = 2e-3;
      o.kink_tolerance = 1e-6;
    }
    return gradient_check([&] { return sum(mul(f(), probe)); }, params_, o);
  }

 private:
  std::mt19937_64 rng_;
  NamedTensors<double> params_;
};

inline networks::ModelConfig micro_model_config(fusion::FusionMode mode, bool cma = true) {
  networks::ModelConfig c;
  c.frames = 3;
  c.fps = 25;
  c.height = c.width = 16;
  c.visual_channels = 4;
  c.motion_dim = 4;
  c.unet_depth = 2;
  c.base_channels = 2;
  c.lip_channels = 2;
  c.motion_channels = 2;
  c.tcn_depth = 1;
  c.cma_dim = 4;
  c.cma_heads = 2;
  c.stft = dsp::StftConfig{2000.0, 32, 32, 8};
  c.flow.pyramid_levels = 1;
  c.fusion_mode = mode;
  c.cma_enabled = cma;
  return c;
}

inline GradCheckResult model_case(std::uint64_t seed, fusion::FusionMode mode, bool cma, bool with_inputs) {
  const auto c = micro_model_config(mode, cma);
  Harness h(seed);
  networks::AvssModel<double> model(c, seed);
  if (c.fusion_config().attention_active()) model.fuse.cma.lambda_gate.mutable_data()[0] = 0.5;
  h.add(model.parameters());
  const std::size_t b = 2;
  TD x_v = with_inputs ? h.input("x_v", {b, 1, c.frames, c.height, c.width}, 0, 1)
                       : h.constant({b, 1, c.frames, c.height, c.width}, 0, 1);
  TD x_m = model.uses_motion() ? (with_inputs ? h.input("x_m", {b, 2, c.frames - 1, c.height, c.width})
                                              : h.constant({b, 2, c.frames - 1, c.height, c.width}))
                               : TD();
  TD x_a = h.input("x_a", {b, 2, c.freq_bins(), c.spec_frames()}, -3, 3);
  return h.check([&] { return model.forward(x_v, x_m, x_a, NormMode::kTrain).mask; }, true);
}

}  // namespace detail

/// Every differentiable op, layer and the assembled model at micro dims.
inline std::vector<GradCase> gradient_cases() {
  using detail::Harness;
  using detail::TD;
  using fusion::FusionMode;
  std::vector<GradCase> cases;
  auto op = [&](std::string name, std::function<GradCheckResult(Harness&)> body) {
    cases.push_back({std::move(name), [body](std::uint64_t seed) {
                       Harness h(seed);
                       return body(h);
                     }});
  };

  op("add", [](Harness& h) { auto a = h.input("a", {3, 4}), b = h.input("b", {3, 4}); return h.check([&] { return add(a, b); }); });
  op("sub", [](Harness& h) { auto a = h.input("a", {3, 4}), b = h.input("b", {3, 4}); return h.check([&] { return sub(a, b); }); });
  op("mul", [](Harness& h) { auto a = h.input("a", {3, 4}), b = h.input("b", {3, 4}); return h.check([&] { return mul(a, b); }); });
  op("scale", [](Harness& h) { auto a = h.input("a", {5}); return h.check([&] { return scale(a, -1.7); }); });
  op("add_scalar", [](Harness& h) { auto a = h.input("a", {5}); return h.check([&] { return add_scalar(a, 0.3); }); });
  op("square", [](Harness& h) { auto a = h.input("a", {2, 3}); return h.check([&] { return square(a); }); });
  op("relu", [](Harness& h) { auto a = h.off_kink("a", {4, 5}); return h.check([&] { return relu(a); }); });
  op("leaky_relu", [](Harness& h) { auto a = h.off_kink("a", {4, 5}); return h.check([&] { return leaky_relu(a, 0.2); }); });
  op("sigmoid", [](Harness& h) { auto a = h.input("a", {4, 5}); return h.check([&] { return sigmoid(a); }); });
  op("tanh", [](Harness& h) { auto a = h.input("a", {4, 5}); return h.check([&] { return tanh(a); }); });
  op("reshape", [](Harness& h) { auto a = h.input("a", {2, 6}); return h.check([&] { return reshape(a, {3, 4}); }); });
  op("permute", [](Harness& h) { auto a = h.input("a", {2, 3, 4}); return h.check([&] { return permute(a, {2, 0, 1}); }); });
  op("expand", [](Harness& h) { auto a = h.input("a", {2, 1, 4}); return h.check([&] { return expand(a, {2, 3, 4}); }); });
  op("sum_axes", [](Harness& h) { auto a = h.input("a", {2, 3, 4}); return h.check([&] { return sum_axes(a, {0, 2}); }); });
  op("sum", [](Harness& h) { auto a = h.input("a", {2, 3}); return h.check([&] { return sum(a); }); });
  op("mean", [](Harness& h) { auto a = h.input("a", {2, 3}); return h.check([&] { return mean(a); }); });
  op("concat", [](Harness& h) {
    auto a = h.input("a", {2, 3, 2}), b = h.input("b", {2, 1, 2});
    return h.check([&] { return concat<double>({a, b}, 1); });
  });
  op("slice", [](Harness& h) { auto a = h.input("a", {3, 6}); return h.check([&] { return slice(a, 1, 2, 3); }); });
  op("pad", [](Harness& h) { auto a = h.input("a", {3, 4}); return h.check([&] { return pad(a, 0, 1, 2); }); });
  op("index_select", [](Harness& h) {
    auto a = h.input("a", {3, 4});
    return h.check([&] { return index_select(a, 1, {0, 0, 3, 1, 3}); });
  });
  op("matmul", [](Harness& h) { auto a = h.input("a", {5, 4}), b = h.input("b", {4, 3}); return h.check([&] { return matmul(a, b); }); });
  op("matmul_batched", [](Harness& h) {
    auto a = h.input("a", {2, 3, 4}), b = h.input("b", {2, 4, 5});
    return h.check([&] { return matmul(a, b); });
  });
  op("linear", [](Harness& h) {
    auto x = h.input("x", {3, 4}), w = h.input("w", {2, 4}), b = h.input("b", {2});
    return h.check([&] { return linear(x, w, b); });
  });
  op("conv1d", [](Harness& h) {
    auto x = h.input("x", {2, 2, 9}), k = h.input("k", {3, 2, 3}), b = h.input("b", {3});
    return h.check([&] { return conv_nd(x, k, b, ConvSpec{{2}, {1}, {2}}, 1); });
  });
  op("conv2d", [](Harness& h) {
    auto x = h.input("x", {2, 2, 6, 5}), k = h.input("k", {3, 2, 3, 3}), b = h.input("b", {3});
    return h.check([&] { return conv_nd(x, k, b, ConvSpec{{2, 1}, {1, 1}, {1, 1}}, 2); });
  });
  op("conv3d", [](Harness& h) {
    auto x = h.input("x", {2, 4, 6, 6, 6}), k = h.input("k", {2, 4, 3, 3, 3});
    return h.check([&] { return conv_nd(x, k, TD(), ConvSpec{{1, 1, 1}, {0, 0, 0}, {1, 1, 1}}, 3); });
  });
  op("avg_pool", [](Harness& h) { auto a = h.input("a", {2, 2, 4, 6}); return h.check([&] { return avg_pool(a, {2, 3}); }); });
  op("softmax", [](Harness& h) { auto a = h.input("a", {3, 5}); return h.check([&] { return softmax(a, 1); }); });
  op("batch_norm_train", [](Harness& h) {
    auto x = h.input("x", {4, 3, 5}), g = h.input("gamma", {3}), b = h.input("beta", {3});
    BatchNormState<double> st(3);
    return h.check([&] {
      BatchNormState<double> s = st;
      return batch_norm(x, g, b, s, NormMode::kTrain);
    });
  });
  op("batch_norm_eval", [](Harness& h) {
    auto x = h.input("x", {2, 3, 5}), g = h.input("gamma", {3}), b = h.input("beta", {3});
    BatchNormState<double> st(3);
    st.running_mean = h.constant({3});
    st.running_var = h.constant({3}, 0.5, 2.0);
    return h.check([&] { return batch_norm(x, g, b, st, NormMode::kEval); });
  });
  op("complex_tanh_bound", [](Harness& h) { auto a = h.input("a", {2, 2, 3, 4}); return h.check([&] { return complex_tanh_bound(a, 2.5); }); });
  op("item_l2_norm", [](Harness& h) { auto a = h.input("a", {3, 2, 4}); return h.check([&] { return item_l2_norm(a); }); });
  op("complex_mul", [](Harness& h) {
    auto a = h.input("a", {2, 2, 3}), b = h.input("b", {2, 2, 3});
    return h.check([&] { return complex_mul(a, b); });
  });
  op("mask_loss", [](Harness& h) {
    auto m = h.input("predicted", {3, 2, 4, 5});
    auto t = h.constant({3, 2, 4, 5});
    return h.check([&] { return pipeline::mask_loss(m, t); });
  });

  op("film", [](Harness& h) {
    fusion::FilmGenerator<double> film(5, 4, h.rng());
    h.add_layer(film, "film");
    auto f_v = h.input("f_v", {2, 4, 3}), f_m = h.input("f_m", {2, 5});
    return h.check([&] { return film(f_v, f_m); });
  });
  op("tcn", [](Harness& h) {
    fusion::TcnStack<double> tcn(3, 2, 3, h.rng());
    h.add_layer(tcn, "tcn");
    auto x = h.input("x", {2, 3, 6});
    return h.check([&] { return tcn(x, NormMode::kTrain); }, true);
  });
  op("cma", [](Harness& h) {
    fusion::CmaLayer<double> cma(fusion::CmaShape{6, 5, 4, 3, 7, 4, 2}, h.rng());
    cma.lambda_gate.mutable_data()[0] = 0.6;
    h.add_layer(cma, "cma");
    auto f_vm = h.input("f_vm", {2, 6, 5}), f_a = h.input("f_a", {2, 4, 3, 7});
    return h.check([&] { return cma(f_vm, f_a).output; });
  });
  for (auto mode : {FusionMode::kCrossModal, FusionMode::kConcatenation, FusionMode::kAddition, FusionMode::kLipOnly}) {
    op("fuse_" + fusion::to_string(mode), [mode](Harness& h) {
      fusion::FusionConfig c;
      c.mode = mode;
      c.visual_channels = c.motion_dim = 4;
      c.motion_channels = 3;
      c.motion_frames = 2;
      c.visual_frames = 5;
      c.audio_channels = 3;
      c.audio_freq = 2;
      c.audio_frames = 7;
      c.tcn_depth = 1;
      c.cma_dim = 4;
      c.cma_heads = 2;
      fusion::Fusion<double> fuse(c, h.rng());
      if (c.attention_active()) fuse.cma.lambda_gate.mutable_data()[0] = 0.4;
      h.add_layer(fuse, "fusion");
      auto f_v = h.input("f_v", {2, 4, 5});
      auto f_m = uses_motion(mode) ? h.input("f_m", {2, 3, 2}) : TD();
      auto f_a = h.input("f_a", {2, 3, 2, 7});
      return h.check([&] { return fuse(f_v, f_m, f_a, NormMode::kTrain).f_avm; }, true);
    });
  }
  op("lip_network", [](Harness& h) {
    const auto c = detail::micro_model_config(FusionMode::kCrossModal);
    networks::LipNetwork<double> lip(c, h.rng());
    h.add_layer(lip, "lip");
    auto x = h.input("x_v", {2, 1, c.frames, c.height, c.width}, 0, 1);
    return h.check([&] { return lip(x, NormMode::kTrain); }, true);
  });
  op("motion_network", [](Harness& h) {
    const auto c = detail::micro_model_config(FusionMode::kCrossModal);
    networks::MotionNetwork<double> motion(c, h.rng());
    h.add_layer(motion, "motion");
    auto x = h.input("x_m", {2, 2, c.frames - 1, c.height, c.width});
    return h.check([&] { return motion(x, NormMode::kTrain); }, true);
  });
  op("unet", [](Harness& h) {
    const auto c = detail::micro_model_config(FusionMode::kCrossModal);
    networks::SeparatorUNet<double> unet(c, h.rng());
    h.add_layer(unet, "unet");
    auto x = h.input("x_a", {2, 2, c.freq_bins(), c.spec_frames()}, -3, 3);
    auto visual = h.input("visual", {2, c.visual_channels, c.bottleneck_freq(), c.bottleneck_frames()});
    return h.check([&] {
      auto enc = unet.encode(x, NormMode::kTrain);
      return unet.decode(concat<double>({enc.f_a, visual}, 1), enc.skips, NormMode::kTrain);
    }, true);
  });
  cases.push_back({"model_cross_modal", [](std::uint64_t s) { return detail::model_case(s, FusionMode::kCrossModal, true, true); }});
  cases.push_back({"model_cross_modal_no_cma", [](std::uint64_t s) { return detail::model_case(s, FusionMode::kCrossModal, false, false); }});
  cases.push_back({"model_concatenation", [](std::uint64_t s) { return detail::model_case(s, FusionMode::kConcatenation, true, false); }});
  cases.push_back({"model_addition", [](std::uint64_t s) { return detail::model_case(s, FusionMode::kAddition, true, false); }});
  cases.push_back({"model_lip_only", [](std::uint64_t s) { return detail::model_case(s, FusionMode::kLipOnly, true, false); }});
  return cases;
}

/// Runs every case whose name contains `filter`. A case passes when its
/// relative error is below `tolerance` and under 1% of its coordinates were
/// skipped as kinks.
inline std::vector<GradCaseResult> run_gradient_suite(std::uint64_t seed, double tolerance = 1e-4,
                                                      const std::string& filter = "",
                                                      const std::function<void(const GradCaseResult&)>& report = {}) {
  std::vector<GradCaseResult> out;
  for (const auto& c : gradient_cases()) {
    if (!filter.empty() && c.name.find(filter) == std::string::npos) continue;
    GradCaseResult r{c.name, c.run(seed), false};
    r.passed = r.check.max_rel_error < tolerance && r.check.skipped * 100 < r.check.checked;
    if (report) report(r);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace avss::cli
