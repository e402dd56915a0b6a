// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "avss/networks/separate.hpp"
#include "test_support.hpp"

namespace avss::networks {
namespace {

using testing::max_grad_error;
using testing::probe_like;
using testing::random_tensor;
using testing::TensorD;

TensorD probe_loss(const TensorD& y, std::uint64_t seed = 3) { return sum(mul(y, probe_like(y, seed))); }

std::vector<TensorD> params_of(const StateDict<double>& sd) {
  std::vector<TensorD> out;
  for (const auto& p : sd.params) out.push_back(p.value);
  return out;
}

template <typename Layer>
std::vector<TensorD> params_of(const Layer& layer) {
  StateDict<double> sd;
  layer.collect("", sd);
  return params_of(sd);
}

void zero_biases(const StateDict<double>& sd) {
  for (auto p : sd.params) {
    const auto& n = p.name;
    if (n.size() >= 4 && (n.ends_with("bias") || n.ends_with("beta"))) {
      for (double& v : p.value.mutable_data()) v = 0.0;
    }
  }
}

bool all_zero(const TensorD& t) {
  for (double v : t.data())
    if (v != 0.0) return false;
  return true;
}

// Tiny but complete configuration: 3 frames of 16x16, 240 samples.
ModelConfig micro_config() {
  ModelConfig c;
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
  return c;
}

struct Inputs {
  TensorD x_v, x_m, x_a;
};

Inputs random_inputs(const ModelConfig& c, std::size_t batch, std::mt19937_64& rng, bool grad = false) {
  return {random_tensor({batch, 1, c.frames, c.height, c.width}, rng, 0, 1, grad),
          random_tensor({batch, 2, c.frames - 1, c.height, c.width}, rng, -1, 1, grad),
          random_tensor({batch, 2, c.freq_bins(), c.spec_frames()}, rng, -3, 3, grad)};
}

// ---------------------------------------------------------------------------
// ModelConfig

TEST(ModelConfig, DefaultsValidateWithDocumentedShapes) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.samples(), 8000u);
  EXPECT_EQ(c.freq_bins(), 129u);
  EXPECT_EQ(c.spec_frames(), 126u);
  EXPECT_EQ(c.padded_freq(), 132u);
  EXPECT_EQ(c.padded_frames(), 128u);
  EXPECT_EQ(c.bottleneck_freq(), 33u);
  EXPECT_EQ(c.bottleneck_frames(), 32u);
  EXPECT_EQ(c.bottleneck_channels(), 32u);
  EXPECT_EQ(c.motion_frames(), 12u);
}

TEST(ModelConfig, DepthFourBottleneckArithmetic) {
  ModelConfig c;
  c.unet_depth = 4;
  EXPECT_EQ(c.padded_freq(), 144u);
  EXPECT_EQ(c.bottleneck_freq(), 9u);
  EXPECT_EQ(c.bottleneck_frames(), 8u);
  EXPECT_EQ(c.bottleneck_channels(), 128u);
}

TEST(ModelConfig, RejectsInconsistentSettings) {
  auto expect_reject = [](auto mutate, const std::string& needle) {
    ModelConfig c;
    mutate(c);
    try {
      c.validate();
      ADD_FAILURE() << "accepted config; expected mention of " << needle;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_reject([](ModelConfig& c) { c.frames = 1; }, "frames");
  expect_reject([](ModelConfig& c) { c.tcn_kernel = 4; }, "tcn_kernel");
  expect_reject([](ModelConfig& c) { c.cma_heads = 3; }, "cma_heads");
  expect_reject([](ModelConfig& c) { c.clip_bound = 1.0; }, "clip_bound");
  expect_reject([](ModelConfig& c) {
    c.fusion_mode = fusion::FusionMode::kAddition;
    c.motion_dim = 32;
  }, "addition");
  expect_reject([](ModelConfig& c) { c.unet_depth = 0; }, "unet_depth");
  expect_reject([](ModelConfig& c) { c.stft.hop = 128; }, "overlap-add");
  expect_reject([](ModelConfig& c) { c.height = c.width = 16; }, "pyramid");
}

TEST(ModelConfig, TextValuesRoundTripForEveryField) {
  ModelConfig c = micro_config();
  c.fusion_mode = fusion::FusionMode::kLipOnly;
  c.cma_enabled = false;
  c.flow.poly_sigma = 1.3;
  ModelConfig d;
  for (const auto& f : model_config_fields()) f.set(d, parse_field_value(f, format_field_value(f, c)));
  for (const auto& f : model_config_fields()) EXPECT_EQ(f.get(d), f.get(c)) << f.key;
}

TEST(ModelConfig, MalformedValuesRejected) {
  EXPECT_THROW(parse_field_value(*find_model_field("frames"), "2.5"), ConfigError);
  EXPECT_THROW(parse_field_value(*find_model_field("frames"), "-3"), ConfigError);
  EXPECT_THROW(parse_field_value(*find_model_field("fps"), "fast"), ConfigError);
  EXPECT_THROW(parse_field_value(*find_model_field("cma_enabled"), "yes"), ConfigError);
  EXPECT_THROW(parse_field_value(*find_model_field("fusion_mode"), "late"), ConfigError);
  EXPECT_EQ(find_model_field("no_such_key"), nullptr);
}

// ---------------------------------------------------------------------------
// lip_forward

TEST(LipNetwork, OneFeaturePerFrame) {
  ModelConfig c;
  c.frames = 5;
  c.visual_channels = 32;
  std::mt19937_64 rng(1);
  LipNetwork<double> lip(c, rng);
  auto x = random_tensor({2, 1, 5, 64, 64}, rng, 0, 1, false);
  EXPECT_EQ(lip(x, NormMode::kTrain).shape(), (Shape{2, 32, 5}));
  EXPECT_EQ(lip(x, NormMode::kEval).shape(), (Shape{2, 32, 5}));
}

TEST(LipNetwork, ZeroInputWithZeroBiasesGivesZero) {
  ModelConfig c = micro_config();
  std::mt19937_64 rng(2);
  LipNetwork<double> lip(c, rng);
  StateDict<double> sd;
  lip.collect("", sd);
  zero_biases(sd);
  TensorD x({2, 1, c.frames, c.height, c.width});
  EXPECT_TRUE(all_zero(lip(x, NormMode::kTrain)));
  EXPECT_TRUE(all_zero(lip(x, NormMode::kEval)));
}

TEST(LipNetwork, GradientsMatchFiniteDifferences) {
  ModelConfig c = micro_config();
  std::mt19937_64 rng(3);
  LipNetwork<double> lip(c, rng);
  auto x = random_tensor({2, 1, 3, 16, 16}, rng, 0, 1);
  auto params = params_of(lip);
  params.push_back(x);
  EXPECT_LT(max_grad_error([&] { return probe_loss(lip(x, NormMode::kTrain)); }, params), 1e-4);
}

TEST(LipNetwork, RejectsWrongShape) {
  ModelConfig c = micro_config();
  std::mt19937_64 rng(4);
  LipNetwork<double> lip(c, rng);
  EXPECT_THROW(lip(TensorD({1, 1, 4, 16, 16}), NormMode::kEval), DimensionError);
  EXPECT_THROW(lip(TensorD({1, 2, 3, 16, 16}), NormMode::kEval), DimensionError);
  EXPECT_THROW(lip(TensorD({1, 3, 16, 16}), NormMode::kEval), DimensionError);
}

// ---------------------------------------------------------------------------
// motion_forward

TEST(MotionNetwork, InflatedKernelIsNormalizedReplica) {
  std::mt19937_64 rng(5);
  auto conv = inflated_conv<double>(2, 3, 3, 3, ConvSpec{{1, 1, 1}, {1, 1, 1}, {}}, rng);
  const auto w = conv.weight.data();
  for (std::size_t oi = 0; oi < 6; ++oi)
    for (std::size_t j = 0; j < 9; ++j) {
      EXPECT_EQ(w[(oi * 3 + 0) * 9 + j], w[(oi * 3 + 1) * 9 + j]);
      EXPECT_EQ(w[(oi * 3 + 0) * 9 + j], w[(oi * 3 + 2) * 9 + j]);
    }
  // A temporally constant clip sees the 2-D kernel (sum of slices) at
  // interior time steps.
  auto frame = random_tensor({1, 2, 1, 7, 7}, rng, -1, 1, false);
  auto clip = expand(frame, {1, 2, 4, 7, 7});
  auto y3 = conv(clip);
  std::vector<double> planar(3 * 2 * 9);
  for (std::size_t oi = 0; oi < 6; ++oi)
    for (std::size_t j = 0; j < 9; ++j) planar[oi * 9 + j] = 3.0 * w[(oi * 3) * 9 + j];
  auto y2 = conv_nd(reshape(frame, {1, 2, 7, 7}), TensorD({3, 2, 3, 3}, planar), TensorD(), ConvSpec{{1, 1}, {1, 1}, {}}, 2);
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = 0; i < 49; ++i) EXPECT_NEAR(y3[((o * 4) + 1) * 49 + i], y2[o * 49 + i], 1e-12);
}

TEST(MotionNetwork, TemporalExtentAndOutputShape) {
  ModelConfig c = micro_config();
  c.frames = 5;
  std::mt19937_64 rng(6);
  MotionNetwork<double> net(c, rng);
  auto y = net(random_tensor({2, 2, 4, 16, 16}, rng, -1, 1, false), NormMode::kTrain);
  EXPECT_EQ(y.shape(), (Shape{2, c.motion_channels, c.motion_frames()}));
  EXPECT_EQ(c.motion_frames(), 2u);
  EXPECT_THROW(net(TensorD({2, 2, 5, 16, 16}), NormMode::kTrain), DimensionError);
  EXPECT_THROW(net(TensorD({2, 1, 4, 16, 16}), NormMode::kTrain), DimensionError);
}

TEST(MotionNetwork, StaticSceneGivesZeroEmbedding) {
  ModelConfig c = micro_config();
  std::mt19937_64 rng(7);
  MotionNetwork<double> net(c, rng);
  TensorD x({2, 2, 2, 16, 16});
  EXPECT_TRUE(all_zero(net(x, NormMode::kTrain)));
  EXPECT_TRUE(all_zero(net(x, NormMode::kEval)));
}

TEST(MotionNetwork, GradientsMatchFiniteDifferences) {
  ModelConfig c = micro_config();
  std::mt19937_64 rng(8);
  MotionNetwork<double> net(c, rng);
  auto x = random_tensor({2, 2, 2, 16, 16}, rng, -1, 1);
  auto params = params_of(net);
  params.push_back(x);
  EXPECT_LT(max_grad_error([&] { return probe_loss(net(x, NormMode::kTrain)); }, params), 1e-4);
}

// ---------------------------------------------------------------------------
// encode_audio / decode_mask

TEST(SeparatorUNet, EncoderShapesAndSkips) {
  for (std::size_t depth : {1u, 2u, 3u}) {
    ModelConfig c = micro_config();
    c.unet_depth = depth;
    std::mt19937_64 rng(9);
    SeparatorUNet<double> unet(c, rng);
    auto enc = unet.encode(random_tensor({2, 2, c.freq_bins(), c.spec_frames()}, rng, -1, 1, false), NormMode::kTrain);
    EXPECT_EQ(enc.f_a.shape(), (Shape{2, c.bottleneck_channels(), c.bottleneck_freq(), c.bottleneck_frames()}));
    ASSERT_EQ(enc.skips.size(), depth);
    for (std::size_t l = 0; l < depth; ++l) {
      EXPECT_EQ(enc.skips[l].extent(2), c.padded_freq() >> l);
      EXPECT_EQ(enc.skips[l].extent(3), c.padded_frames() >> l);
    }
  }
}

TEST(SeparatorUNet, ZeroSpectrogramGivesZeroBottleneck) {
  ModelConfig c = micro_config();
  std::mt19937_64 rng(10);
  SeparatorUNet<double> unet(c, rng);
  auto enc = unet.encode(TensorD({2, 2, c.freq_bins(), c.spec_frames()}), NormMode::kTrain);
  EXPECT_TRUE(all_zero(enc.f_a));
}

TEST(SeparatorUNet, RejectsMismatchedSpectrogramAndBottleneck) {
  ModelConfig c = micro_config();
  std::mt19937_64 rng(11);
  SeparatorUNet<double> unet(c, rng);
  EXPECT_THROW(unet.encode(TensorD({1, 2, c.freq_bins() + 1, c.spec_frames()}), NormMode::kEval), DimensionError);
  auto enc = unet.encode(TensorD({1, 2, c.freq_bins(), c.spec_frames()}), NormMode::kEval);
  EXPECT_THROW(unet.decode(enc.f_a, enc.skips, NormMode::kEval), DimensionError);
  TensorD f_avm({1, c.bottleneck_channels() + c.visual_channels, c.bottleneck_freq(), c.bottleneck_frames()});
  EXPECT_THROW(unet.decode(f_avm, {enc.skips[0]}, NormMode::kEval), DimensionError);
}

TEST(SeparatorUNet, MaskBoundedOverRandomDraws) {
  ModelConfig c = micro_config();
  c.clip_bound = 2.5;
  std::mt19937_64 rng(12);
  double worst = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    AvssModel<double> model(c, rng());
    const double amp = std::pow(10.0, draw % 5);
    auto in = random_inputs(c, 2, rng);
    in.x_a = scale(in.x_a, amp);
    auto head = model.unet.head.weight.mutable_data();
    for (double& w : head) w *= amp;
    const auto mask = model.forward(in.x_v, in.x_m, in.x_a, draw % 2 ? NormMode::kTrain : NormMode::kEval).mask;
    const std::size_t cells = mask.extent(2) * mask.extent(3);
    for (std::size_t b = 0; b < mask.extent(0); ++b)
      for (std::size_t i = 0; i < cells; ++i) {
        worst = std::max(worst, std::hypot(mask[2 * b * cells + i], mask[(2 * b + 1) * cells + i]));
      }
  }
  EXPECT_LE(worst, c.clip_bound);
  EXPECT_GT(worst, 0.9 * c.clip_bound);
}

// ---------------------------------------------------------------------------
// Full model

TEST(AvssModel, MaskMatchesSpectrogramForEveryMode) {
  for (auto mode : {fusion::FusionMode::kCrossModal, fusion::FusionMode::kConcatenation,
                    fusion::FusionMode::kAddition, fusion::FusionMode::kLipOnly}) {
    ModelConfig c = micro_config();
    c.fusion_mode = mode;
    std::mt19937_64 rng(13);
    AvssModel<double> model(c, 5);
    auto in = random_inputs(c, 2, rng);
    auto out = model.forward(in.x_v, mode == fusion::FusionMode::kLipOnly ? TensorD() : in.x_m, in.x_a,
                             NormMode::kTrain);
    EXPECT_EQ(out.mask.shape(), in.x_a.shape()) << fusion::to_string(mode);
    EXPECT_EQ(out.attention.has_value(), mode == fusion::FusionMode::kCrossModal);
  }
}

TEST(AvssModel, EndToEndGradients) {
  for (auto mode : {fusion::FusionMode::kCrossModal, fusion::FusionMode::kConcatenation}) {
    ModelConfig c = micro_config();
    c.fusion_mode = mode;
    AvssModel<double> model(c, 6);
    if (c.fusion_config().attention_active()) model.fuse.cma.lambda_gate.mutable_data()[0] = 0.5;
    std::mt19937_64 rng(14);
    auto in = random_inputs(c, 2, rng, true);
    auto params = model.parameters();
    std::vector<TensorD> all;
    for (const auto& p : params) all.push_back(p.value);
    all.push_back(in.x_a);
    all.push_back(in.x_m);
    auto loss = [&] { return probe_loss(model.forward(in.x_v, in.x_m, in.x_a, NormMode::kTrain).mask); };
    const auto r = testing::kink_aware_grad_error(loss, all);
    EXPECT_LT(r.max_error, 1e-4) << fusion::to_string(mode);
    EXPECT_LT(r.skipped * 100, r.total) << r.skipped << " of " << r.total << " coordinates on kinks";
  }
}

TEST(AvssModel, DeterministicGivenSeed) {
  ModelConfig c = micro_config();
  AvssModel<double> a(c, 42), b(c, 42), other(c, 43);
  std::mt19937_64 rng(15);
  auto in = random_inputs(c, 2, rng);
  const auto ma = a.forward(in.x_v, in.x_m, in.x_a, NormMode::kEval).mask;
  const auto mb = b.forward(in.x_v, in.x_m, in.x_a, NormMode::kEval).mask;
  const auto mo = other.forward(in.x_v, in.x_m, in.x_a, NormMode::kEval).mask;
  EXPECT_TRUE(std::equal(ma.data().begin(), ma.data().end(), mb.data().begin()));
  EXPECT_FALSE(std::equal(ma.data().begin(), ma.data().end(), mo.data().begin()));
}

TEST(AvssModel, RandomValidConfigsRunForward) {
  std::mt19937_64 rng(16);
  auto pick = [&](std::initializer_list<std::size_t> v) { return *(v.begin() + rng() % v.size()); };
  int ran = 0;
  while (ran < 12) {
    ModelConfig c = micro_config();
    c.frames = pick({2, 3, 4, 6});
    c.height = pick({8, 12, 16, 20});
    c.width = pick({8, 12, 16, 20});
    c.visual_channels = pick({2, 4, 6});
    c.motion_dim = pick({2, 4, 6});
    c.unet_depth = pick({1, 2, 3});
    c.base_channels = pick({1, 2, 3});
    c.lip_channels = pick({1, 2});
    c.motion_channels = pick({1, 2, 3});
    c.tcn_depth = pick({0, 1, 2});
    c.tcn_kernel = pick({1, 3, 5});
    c.cma_heads = pick({1, 2});
    c.cma_dim = c.cma_heads * pick({1, 2, 3});
    c.fusion_mode = static_cast<fusion::FusionMode>(rng() % 4);
    c.cma_enabled = rng() % 2;
    c.stft = dsp::StftConfig{2000.0, 32, pick({16, 32}), 4};
    try {
      c.validate();
    } catch (const ConfigError&) {
      continue;
    }
    AvssModel<double> model(c, rng());
    const bool train = rng() % 2;
    auto in = random_inputs(c, train ? 2 : 1 + rng() % 2, rng);
    auto out = model.forward(in.x_v, in.x_m, in.x_a, train ? NormMode::kTrain : NormMode::kEval);
    EXPECT_EQ(out.mask.shape(), in.x_a.shape());
    ++ran;
  }
}

TEST(AvssModel, CheckpointRoundTrip) {
  ModelConfig c = micro_config();
  c.fusion_mode = fusion::FusionMode::kConcatenation;
  c.flow.poly_sigma = 1.1;
  AvssModel<double> model(c, 7);
  std::mt19937_64 rng(17);
  auto in = random_inputs(c, 2, rng);
  model.forward(in.x_v, in.x_m, in.x_a, NormMode::kTrain);  // moves running statistics
  const auto path = (std::filesystem::temp_directory_path() / "avss_networks_ckpt.bin").string();
  save_model(path, model);
  auto loaded = load_model<double>(path);
  EXPECT_EQ(loaded.config.fusion_mode, c.fusion_mode);
  EXPECT_EQ(loaded.config.flow.poly_sigma, 1.1);
  EXPECT_EQ(loaded.parameter_count(), model.parameter_count());
  const auto ma = model.forward(in.x_v, in.x_m, in.x_a, NormMode::kEval).mask;
  const auto mb = loaded.forward(in.x_v, in.x_m, in.x_a, NormMode::kEval).mask;
  for (std::size_t i = 0; i < ma.size(); ++i) EXPECT_NEAR(ma[i], mb[i], 1e-4);
  std::filesystem::remove(path);
}

TEST(AvssModel, CheckpointForOtherArchitectureRejected) {
  ModelConfig c = micro_config();
  AvssModel<double> model(c, 8);
  auto records = model.to_records();
  for (auto& r : records)
    if (r.name == "unet.head.weight") r.shape = {2, 2, 1, 2};
  EXPECT_THROW(model.load_records(records), DimensionError);
  records = model.to_records();
  records.pop_back();
  EXPECT_THROW(model.load_records(records), checkpoint::FormatError);
}

// ---------------------------------------------------------------------------
// separate

dsp::Waveform harmonic(double f0, std::size_t n, double rate, double phase) {
  dsp::Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    for (int k = 1; k <= 4; ++k) w.samples[i] += std::sin(2.0 * std::numbers::pi * f0 * k * t + phase * k) / k;
  }
  return w;
}

flow::FrameSequence random_frames(const ModelConfig& c, std::mt19937_64& rng) {
  flow::FrameSequence seq;
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t k = 0; k < c.frames; ++k) {
    flow::GrayImage img(c.height, c.width);
    for (double& p : img.pixels) p = u(rng);
    seq.frames.push_back(img);
  }
  return seq;
}

double snr_db(const std::vector<double>& ref, const std::vector<double>& est) {
  double s = 0, e = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    s += ref[i] * ref[i];
    e += (ref[i] - est[i]) * (ref[i] - est[i]);
  }
  return 10.0 * std::log10(s / e);
}

TEST(Separate, UnitMaskReturnsMixture) {
  ModelConfig c = micro_config();
  AvssModel<double> model(c, 9);
  model.unet.rig_unit_mask();
  std::mt19937_64 rng(18);
  auto mix = harmonic(110, c.samples(), c.stft.sample_rate, 0.3);
  auto out = separate(model, mix, random_frames(c, rng));
  ASSERT_EQ(out.samples.size(), mix.samples.size());
  double worst = 0;
  for (std::size_t i = 0; i < mix.samples.size(); ++i) worst = std::max(worst, std::abs(out.samples[i] - mix.samples[i]));
  EXPECT_LT(worst, 1e-5);
}

TEST(Separate, OracleMaskRecoversTarget) {
  ModelConfig c;
  c.validate();
  auto target = harmonic(125, c.samples(), c.stft.sample_rate, 0.1);
  auto other = harmonic(310, c.samples(), c.stft.sample_rate, 1.7);
  // Breath noise on both sources keeps the mixture away from exact spectral nulls.
  std::mt19937_64 rng(22);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (std::size_t i = 0; i < target.samples.size(); ++i) {
    target.samples[i] += noise(rng);
    other.samples[i] += noise(rng);
  }
  dsp::Waveform mix = target;
  for (std::size_t i = 0; i < mix.samples.size(); ++i) mix.samples[i] += other.samples[i];
  const auto mix_spec = dsp::stft(mix, c.stft);
  const auto mask = dsp::ideal_complex_mask(dsp::stft(target, c.stft), mix_spec, c.clip_bound);
  const auto est = resynthesize(mask, mix_spec, mix.samples.size());
  ASSERT_EQ(est.samples.size(), mix.samples.size());
  EXPECT_GT(snr_db(target.samples, est.samples), 40.0);
}

TEST(Separate, OutputLengthEqualsInputForEveryMode) {
  for (auto mode : {fusion::FusionMode::kCrossModal, fusion::FusionMode::kLipOnly}) {
    ModelConfig c = micro_config();
    c.fusion_mode = mode;
    AvssModel<double> model(c, 10);
    std::mt19937_64 rng(19);
    auto mix = harmonic(150, c.samples(), c.stft.sample_rate, 0.0);
    EXPECT_EQ(separate(model, mix, random_frames(c, rng)).samples.size(), c.samples());
  }
}

TEST(Separate, MisalignedClipNamesCounts) {
  ModelConfig c = micro_config();
  AvssModel<double> model(c, 11);
  std::mt19937_64 rng(20);
  auto frames = random_frames(c, rng);
  auto mix = harmonic(150, c.samples() + 7, c.stft.sample_rate, 0.0);
  try {
    separate(model, mix, frames);
    FAIL() << "misaligned clip accepted";
  } catch (const AlignmentError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("240 samples"), std::string::npos) << msg;
    EXPECT_NE(msg.find("247 samples"), std::string::npos) << msg;
    EXPECT_NE(msg.find("3 frames"), std::string::npos) << msg;
  }
  frames.frames.pop_back();
  EXPECT_THROW(separate(model, harmonic(150, c.samples(), c.stft.sample_rate, 0.0), frames), AlignmentError);
}

TEST(Separate, PrecomputedFlowsMatchInternalEstimate) {
  ModelConfig c = micro_config();
  AvssModel<double> model(c, 12);
  std::mt19937_64 rng(21);
  auto frames = random_frames(c, rng);
  auto mix = harmonic(150, c.samples(), c.stft.sample_rate, 0.0);
  const auto a = separate(model, mix, frames);
  const auto b = separate(model, mix, frames, flow::flow_sequence(frames, c.flow));
  EXPECT_EQ(a.samples, b.samples);
}

}  // namespace
}  // namespace avss::networks
