// Copyright 2026 The AVSS Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "avss/numerics/adamw.hpp"
#include "avss/numerics/checkpoint.hpp"
#include "avss/numerics/gradcheck.hpp"
#include "avss/numerics/ops.hpp"
#include "test_support.hpp"

namespace avss {
namespace {

using testing::max_grad_error;
using testing::probe_like;
using testing::random_tensor;
using testing::TensorD;

// Weighted sum with a fixed random probe, so every output element matters.
TensorD probe_loss(const TensorD& y, std::uint64_t seed = 99) { return sum(mul(y, probe_like(y, seed))); }

std::vector<double> values(const TensorD& t) { return {t.data().begin(), t.data().end()}; }

// ---------------------------------------------------------------------------
// matmul

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  TensorD eye({2, 2}, {1, 0, 0, 1});
  TensorD a({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(values(matmul(eye, a)), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Matmul, HandComputedProduct) {
  TensorD a({1, 2}, {1, 2});
  TensorD b({2, 1}, {3, 4});
  auto c = matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{1, 1}));
  EXPECT_DOUBLE_EQ(c[0], 11.0);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  auto a = random_tensor({5, 4}, rng);
  auto b = random_tensor({4, 3}, rng);
  EXPECT_LT(max_grad_error([&] { return probe_loss(matmul(a, b)); }, {a, b}), 1e-6);
}

TEST(Matmul, BatchedGradient) {
  std::mt19937_64 rng(2);
  auto a = random_tensor({2, 3, 4}, rng);
  auto b = random_tensor({2, 4, 2}, rng);
  EXPECT_LT(max_grad_error([&] { return probe_loss(matmul(a, b)); }, {a, b}), 1e-6);
}

TEST(Matmul, MismatchNamesBothShapes) {
  TensorD a({2, 3}), b({4, 2});
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4,2]"), std::string::npos) << msg;
  }
}

// ---------------------------------------------------------------------------
// conv_nd

TEST(Conv, OneDimensionalIdentityKernel) {
  TensorD x({1, 1, 3}, {1, 2, 3});
  TensorD k({1, 1, 1}, {1});
  auto y = conv_nd(x, k, TensorD{}, {}, 1);
  EXPECT_EQ(values(y), (std::vector<double>{1, 2, 3}));
}

TEST(Conv, TwoDimensionalOnes) {
  TensorD x({1, 1, 3, 3}, 1.0);
  TensorD k({1, 1, 2, 2}, 1.0);
  auto y = conv_nd(x, k, TensorD{}, {}, 2);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(values(y), (std::vector<double>{4, 4, 4, 4}));
}

TEST(Conv, ThreeDimensionalGradient) {
  std::mt19937_64 rng(3);
  auto x = random_tensor({1, 2, 4, 6, 6}, rng);
  auto k = random_tensor({2, 2, 3, 3, 3}, rng);
  auto b = random_tensor({2}, rng);
  EXPECT_LT(max_grad_error([&] { return probe_loss(conv_nd(x, k, b, {}, 3)); }, {x, k, b}), 1e-5);
}

TEST(Conv, StridePaddingDilationGradients) {
  std::mt19937_64 rng(4);
  auto x = random_tensor({2, 3, 7, 8}, rng);
  auto k = random_tensor({4, 3, 3, 2}, rng);
  auto b = random_tensor({4}, rng);
  ConvSpec spec{{2, 1}, {1, 2}, {1, 2}};
  EXPECT_LT(max_grad_error([&] { return probe_loss(conv_nd(x, k, b, spec, 2)); }, {x, k, b}), 1e-6);
  auto x1 = random_tensor({2, 3, 9}, rng);
  auto k1 = random_tensor({2, 3, 3}, rng);
  ConvSpec dilated{{1}, {2}, {2}};
  EXPECT_LT(max_grad_error([&] { return probe_loss(conv_nd(x1, k1, TensorD{}, dilated, 1)); }, {x1, k1}), 1e-6);
}

TEST(Conv, PointwiseGradient) {
  std::mt19937_64 rng(5);
  auto x = random_tensor({2, 3, 4, 5}, rng);
  auto k = random_tensor({2, 3, 1, 1}, rng);
  auto b = random_tensor({2}, rng);
  EXPECT_LT(max_grad_error([&] { return probe_loss(conv_nd(x, k, b, {}, 2)); }, {x, k, b}), 1e-6);
}

TEST(Conv, OutputExtentFormulaHoldsOverRandomGeometries) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> ext(3, 9), ker(1, 3), st(1, 3), pd(0, 2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t in = ext(rng), k = std::min(ker(rng), in), s = st(rng), p = pd(rng);
    TensorD x({1, 1, in}, 1.0), w({1, 1, k}, 1.0);
    auto y = conv_nd(x, w, TensorD{}, ConvSpec{{s}, {p}, {}}, 1);
    EXPECT_EQ(y.shape()[2], (in + 2 * p - k) / s + 1);
  }
}

TEST(Conv, InconsistentChannelsRejected) {
  TensorD x({1, 3, 5, 5}), k({2, 2, 3, 3});
  EXPECT_THROW(conv_nd(x, k, TensorD{}, {}, 2), DimensionError);
}

TEST(Conv, KernelLargerThanInputRejected) {
  TensorD x({1, 1, 2}), k({1, 1, 3});
  EXPECT_THROW(conv_nd(x, k, TensorD{}, {}, 1), DimensionError);
}

// ---------------------------------------------------------------------------
// softmax

TEST(Softmax, UniformOnEqualLogits) {
  auto y = softmax(TensorD({3}, 0.0), 0);
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 1.0 / 3.0);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  auto y = softmax(TensorD({2}, {1000, 1000}), 0);
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(Softmax, SlicesSumToOneAndAreNonNegative) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_tensor({4, 4}, rng, -20, 20, false);
    for (std::size_t axis : {0u, 1u}) {
      auto y = softmax(x, axis);
      for (std::size_t r = 0; r < 4; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 4; ++c) {
          const double v = axis == 1 ? y[r * 4 + c] : y[c * 4 + r];
          EXPECT_GE(v, 0.0);
          s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
      }
    }
  }
}

TEST(Softmax, Gradient) {
  std::mt19937_64 rng(8);
  auto x = random_tensor({3, 4, 2}, rng);
  EXPECT_LT(max_grad_error([&] { return probe_loss(softmax(x, 1)); }, {x}), 1e-6);
}

// ---------------------------------------------------------------------------
// batch_norm

TEST(BatchNorm, ConstantInputNormalizesToZero) {
  BatchNormState<double> st(2);
  TensorD x({4, 2, 3}, 5.0);
  auto y = batch_norm(x, TensorD({2}, 1.0), TensorD({2}, 0.0), st, NormMode::kTrain);
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(BatchNorm, EvalWithUnitStatsIsIdentityUpToEps) {
  BatchNormState<double> st(3);
  st.eps = 0.0;
  std::mt19937_64 rng(9);
  auto x = random_tensor({1, 3, 4}, rng, -2, 2, false);
  auto y = batch_norm(x, TensorD({3}, 1.0), TensorD({3}, 0.0), st, NormMode::kEval);
  EXPECT_EQ(values(y), values(x));
}

TEST(BatchNorm, TrainModeMoments) {
  BatchNormState<double> st(3);
  std::mt19937_64 rng(10);
  auto x = random_tensor({6, 3, 5}, rng, -3, 7, false);
  auto y = batch_norm(x, TensorD({3}, 1.0), TensorD({3}, 0.0), st, NormMode::kTrain);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t b = 0; b < 6; ++b)
      for (std::size_t i = 0; i < 5; ++i) m += y[(b * 3 + c) * 5 + i];
    m /= 30;
    for (std::size_t b = 0; b < 6; ++b)
      for (std::size_t i = 0; i < 5; ++i) v += std::pow(y[(b * 3 + c) * 5 + i] - m, 2);
    v /= 30;
    EXPECT_NEAR(m, 0.0, 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-4);
  }
}

TEST(BatchNorm, RunningStatsFollowMomentum) {
  BatchNormState<double> st(1);
  TensorD x({2, 1, 1}, {1.0, 3.0});
  batch_norm(x, TensorD({1}, 1.0), TensorD({1}, 0.0), st, NormMode::kTrain);
  EXPECT_NEAR(st.running_mean[0], 0.9 * 0.0 + 0.1 * 2.0, 1e-12);
  EXPECT_NEAR(st.running_var[0], 0.9 * 1.0 + 0.1 * 2.0, 1e-12);  // unbiased var of {1,3} is 2
}

TEST(BatchNorm, DegenerateBatchRejectedInTrainMode) {
  BatchNormState<double> st(2);
  TensorD x({1, 2, 3}, 1.0);
  EXPECT_THROW(batch_norm(x, TensorD({2}, 1.0), TensorD({2}, 0.0), st, NormMode::kTrain), ContractError);
  EXPECT_NO_THROW(batch_norm(x, TensorD({2}, 1.0), TensorD({2}, 0.0), st, NormMode::kEval));
}

TEST(BatchNorm, GradientsInBothModes) {
  std::mt19937_64 rng(11);
  auto x = random_tensor({4, 3, 5}, rng);
  auto g = random_tensor({3}, rng);
  auto b = random_tensor({3}, rng);
  BatchNormState<double> st(3);
  EXPECT_LT(max_grad_error([&] { return probe_loss(batch_norm(x, g, b, st, NormMode::kTrain)); }, {x, g, b}), 1e-6);
  EXPECT_LT(max_grad_error([&] { return probe_loss(batch_norm(x, g, b, st, NormMode::kEval)); }, {x, g, b}), 1e-6);
}

// ---------------------------------------------------------------------------
// activations

TEST(Activations, ReluExamples) {
  EXPECT_EQ(values(relu(TensorD({3}, {-1, 0, 2}))), (std::vector<double>{0, 0, 2}));
}

TEST(Activations, SigmoidAtZero) { EXPECT_DOUBLE_EQ(sigmoid(TensorD({1}, 0.0))[0], 0.5); }

TEST(Activations, ReluSubgradientAtKinkIsZero) {
  auto x = TensorD::parameter({1}, {0.0});
  backward(sum(relu(x)));
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Activations, GradientsAwayFromKinks) {
  std::mt19937_64 rng(12);
  auto x = random_tensor({20}, rng);
  for (double& v : x.mutable_data()) {
    if (std::abs(v) < 0.05) v += 0.1;
  }
  EXPECT_LT(max_grad_error([&] { return probe_loss(relu(x)); }, {x}), 1e-6);
  EXPECT_LT(max_grad_error([&] { return probe_loss(leaky_relu(x)); }, {x}), 1e-6);
  EXPECT_LT(max_grad_error([&] { return probe_loss(sigmoid(x)); }, {x}), 1e-6);
  EXPECT_LT(max_grad_error([&] { return probe_loss(tanh(x)); }, {x}), 1e-6);
}

// ---------------------------------------------------------------------------
// remaining differentiable primitives

TEST(Ops, ShapeOpGradients) {
  std::mt19937_64 rng(13);
  auto x = random_tensor({2, 3, 4}, rng);
  auto y = random_tensor({2, 2, 4}, rng);
  auto s = random_tensor({2, 1, 4}, rng);
  EXPECT_LT(max_grad_error([&] { return probe_loss(permute(x, {2, 0, 1})); }, {x}), 1e-8);
  EXPECT_LT(max_grad_error([&] { return probe_loss(reshape(x, {6, 4})); }, {x}), 1e-8);
  EXPECT_LT(max_grad_error([&] { return probe_loss(expand(s, {2, 5, 4})); }, {s}), 1e-8);
  EXPECT_LT(max_grad_error([&] { return probe_loss(sum_axes(x, {0, 2})); }, {x}), 1e-8);
  EXPECT_LT(max_grad_error([&] { return probe_loss(concat<double>({x, y}, 1)); }, {x, y}), 1e-8);
  EXPECT_LT(max_grad_error([&] { return probe_loss(slice(x, 2, 1, 2)); }, {x}), 1e-8);
  EXPECT_LT(max_grad_error([&] { return probe_loss(pad(x, 1, 2, 1)); }, {x}), 1e-8);
  EXPECT_LT(max_grad_error([&] { return probe_loss(index_select(x, 2, {3, 0, 0, 1})); }, {x}), 1e-8);
  EXPECT_LT(max_grad_error([&] { return probe_loss(avg_pool(x, {2})); }, {x}), 1e-8);
  EXPECT_LT(max_grad_error([&] { return mean(square(x)); }, {x}), 1e-8);
}

TEST(Ops, ArithmeticGradients) {
  std::mt19937_64 rng(14);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({3, 4}, rng);
  EXPECT_LT(max_grad_error([&] { return probe_loss(add(a, b)); }, {a, b}), 1e-8);
  EXPECT_LT(max_grad_error([&] { return probe_loss(sub(a, b)); }, {a, b}), 1e-8);
  EXPECT_LT(max_grad_error([&] { return probe_loss(mul(a, b)); }, {a, b}), 1e-8);
  EXPECT_LT(max_grad_error([&] { return probe_loss(add_scalar(scale(a, 1.5), 0.3)); }, {a}), 1e-8);
}

TEST(Ops, LinearGradient) {
  std::mt19937_64 rng(15);
  auto x = random_tensor({4, 5}, rng);
  auto w = random_tensor({3, 5}, rng);
  auto b = random_tensor({3}, rng);
  EXPECT_LT(max_grad_error([&] { return probe_loss(linear(x, w, b)); }, {x, w, b}), 1e-6);
}

TEST(Ops, AvgPoolTwoAndThreeDimensional) {
  std::mt19937_64 rng(16);
  auto x = random_tensor({2, 2, 4, 6, 6}, rng);
  EXPECT_LT(max_grad_error([&] { return probe_loss(avg_pool(x, {2, 2})); }, {x}), 1e-8);
  EXPECT_LT(max_grad_error([&] { return probe_loss(avg_pool(x, {2, 3, 3})); }, {x}), 1e-8);
  TensorD ones({1, 1, 4, 4}, 1.0);
  const auto pooled = avg_pool(ones, {2, 2});
  EXPECT_EQ(pooled.shape(), (Shape{1, 1, 2, 2}));
  for (double v : pooled.data()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Ops, ComplexTanhBoundIsBoundedAndDifferentiable) {
  std::mt19937_64 rng(17);
  auto x = random_tensor({2, 2, 3, 4}, rng, -3, 3);
  x.mutable_data()[0] = 1e-4;  // exercise the small-radius branch
  x.mutable_data()[12] = -2e-4;
  EXPECT_LT(max_grad_error([&] { return probe_loss(complex_tanh_bound(x, 10.0)); }, {x}), 1e-6);
  auto big = random_tensor({3, 2, 5}, rng, -1e3, 1e3, false);
  auto y = complex_tanh_bound(big, 10.0);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t i = 0; i < 5; ++i) {
      const double re = y[b * 10 + i], im = y[b * 10 + 5 + i];
      EXPECT_LE(std::hypot(re, im), 10.0 + 1e-12);
    }
}

TEST(Ops, ItemNormAndComplexProduct) {
  std::mt19937_64 rng(18);
  auto x = random_tensor({3, 2, 4}, rng);
  EXPECT_LT(max_grad_error([&] { return probe_loss(item_l2_norm(x)); }, {x}), 1e-6);
  TensorD cell({1, 2}, {3, 4});
  EXPECT_DOUBLE_EQ(item_l2_norm(cell)[0], 5.0);
  auto a = random_tensor({2, 2, 3}, rng);
  auto b = random_tensor({2, 2, 3}, rng);
  EXPECT_LT(max_grad_error([&] { return probe_loss(complex_mul(a, b)); }, {a, b}), 1e-8);
  auto p = complex_mul(a, b);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 3; ++i) {
      const std::complex<double> za(a[n * 6 + i], a[n * 6 + 3 + i]), zb(b[n * 6 + i], b[n * 6 + 3 + i]);
      EXPECT_NEAR(p[n * 6 + i], (za * zb).real(), 1e-12);
      EXPECT_NEAR(p[n * 6 + 3 + i], (za * zb).imag(), 1e-12);
    }
}

// ---------------------------------------------------------------------------
// backward

TEST(Backward, SumGivesOnes) {
  auto x = TensorD::parameter({2, 3}, {1, 2, 3, 4, 5, 6});
  backward(sum(x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, ProductRule) {
  auto x = TensorD::parameter({1}, {3.0});
  auto y = TensorD::parameter({1}, {4.0});
  backward(sum(mul(x, y)));
  EXPECT_EQ(x.grad()[0], 4.0);
  EXPECT_EQ(y.grad()[0], 3.0);
}

TEST(Backward, NonScalarLossRejected) {
  auto x = TensorD::parameter({2}, {1, 2});
  EXPECT_THROW(backward(scale(x, 2.0)), ContractError);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  auto x = TensorD::parameter({1}, {2.0});
  auto y = mul(x, x);
  backward(sum(add(y, y)));  // d/dx 2x^2 = 4x
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
}

TEST(Backward, RepeatedPassesAreIdentical) {
  std::mt19937_64 rng(19);
  auto x = random_tensor({2, 3, 6}, rng);
  auto k = random_tensor({4, 3, 3}, rng);
  auto loss = probe_loss(tanh(conv_nd(x, k, TensorD{}, ConvSpec{{1}, {1}, {}}, 1)));
  backward(loss);
  auto gx = std::vector<double>(x.grad().begin(), x.grad().end());
  auto gk = std::vector<double>(k.grad().begin(), k.grad().end());
  x.zero_grad();
  k.zero_grad();
  backward(loss);
  EXPECT_EQ(gx, std::vector<double>(x.grad().begin(), x.grad().end()));
  EXPECT_EQ(gk, std::vector<double>(k.grad().begin(), k.grad().end()));
}

TEST(Backward, EveryReachableParameterReceivesGradient) {
  std::mt19937_64 rng(20);
  auto a = random_tensor({3}, rng);
  auto b = random_tensor({3}, rng);
  auto unused = random_tensor({3}, rng);
  backward(sum(mul(relu(a), b)));
  EXPECT_TRUE(a.has_grad());
  EXPECT_TRUE(b.has_grad());
  EXPECT_FALSE(unused.has_grad());
}

TEST(Backward, NoGradGuardSuppressesHistory) {
  auto x = TensorD::parameter({2}, {1, 2});
  NoGradGuard guard;
  auto y = sum(x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(GradCheck, LibraryCheckerAgreesOnLinearModel) {
  std::mt19937_64 rng(21);
  auto x = random_tensor({3, 4}, rng, -2, 2, false);
  auto w = random_tensor({2, 4}, rng);
  auto r = gradient_check([&] { return probe_loss(tanh(linear(x, w, TensorD{}))); }, {{"w", w}});
  EXPECT_LT(r.max_rel_error, 1e-8);
  EXPECT_EQ(r.worst, "w");
  EXPECT_EQ(r.checked, 8u);
}

TEST(GradCheck, KinkFarInsideStencilIsResolved) {
  // relu kink 1e-5 away: D(h) and D(2h) both read 0.5 at h = 2e-3.
  auto w = TensorD::parameter({1}, {1e-5});
  const GradCheckOptions o{.step = 2e-3, .kink_tolerance = 1e-6};
  auto r = gradient_check([&] { return sum(relu(w)); }, {{"w", w}}, o);
  EXPECT_EQ(r.skipped, 0u);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(GradCheck, CoordinateOnKinkIsSkipped) {
  auto w = TensorD::parameter({2}, {0.0, 0.5});
  const GradCheckOptions o{.step = 2e-3, .kink_tolerance = 1e-6};
  auto r = gradient_check([&] { return sum(relu(w)); }, {{"w", w}}, o);
  EXPECT_EQ(r.checked, 2u);
  EXPECT_EQ(r.skipped, 1u);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(GradCheck, ExtrapolationRemovesCubicTruncation) {
  // D(h) of x^3 is 3x^2 + h^2; (4 D(h) - D(2h)) / 3 is exact.
  auto w = TensorD::parameter({1}, {0.7});
  const GradCheckOptions o{.step = 1e-2, .kink_tolerance = 1.0};
  auto r = gradient_check([&] { return sum(mul(mul(w, w), w)); }, {{"w", w}}, o);
  EXPECT_LT(r.max_rel_error, 1e-11);
}

// ---------------------------------------------------------------------------
// AdamW

TEST(AdamW, ZeroGradientZeroDecayLeavesParameter) {
  auto p = TensorD::parameter({1}, {1.0});
  p.mutable_grad()[0] = 0.0;
  AdamW<double> opt({{"p", p}}, {.lr = 0.1, .weight_decay = 0.0});
  opt.step();
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(opt.step_count(), 1u);
}

TEST(AdamW, FirstStepClosedForm) {
  auto p = TensorD::parameter({1}, {0.0});
  p.mutable_grad()[0] = 1.0;
  AdamW<double> opt({{"p", p}}, {.lr = 0.1, .weight_decay = 0.0});
  opt.step();
  // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
  EXPECT_NEAR(p[0], -0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(AdamW, DecoupledDecayAppliedBeforeMoment) {
  auto p = TensorD::parameter({1}, {2.0});
  p.mutable_grad()[0] = 0.5;
  AdamW<double> opt({{"p", p}}, {.lr = 0.01, .weight_decay = 0.1});
  opt.step();
  EXPECT_NEAR(p[0], 2.0 * (1 - 0.01 * 0.1) - 0.01 / (1 + 1e-8 / 0.5), 1e-14);
}

TEST(AdamW, ConvergesOnQuadratic) {
  auto p = TensorD::parameter({1}, {0.0});
  AdamW<double> opt({{"p", p}}, {.lr = 0.05, .weight_decay = 0.0});
  for (int i = 0; i < 500; ++i) {
    opt.zero_grad();
    backward(sum(square(add_scalar(p, -2.0))));
    opt.step();
  }
  EXPECT_LT(std::abs(p[0] - 2.0), 1e-2);
}

TEST(AdamW, ZeroLearningRateChangesNothing) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_tensor({4}, rng);
    auto b = random_tensor({2, 3}, rng);
    const auto a0 = values(a), b0 = values(b);
    AdamW<double> opt({{"a", a}, {"b", b}}, {.lr = 0.0, .weight_decay = 0.5});
    for (int s = 0; s < 3; ++s) {
      opt.zero_grad();
      backward(add(sum(square(a)), sum(tanh(b))));
      opt.step();
    }
    EXPECT_EQ(values(a), a0);
    EXPECT_EQ(values(b), b0);
    EXPECT_EQ(opt.step_count(), 3u);
  }
}

TEST(AdamW, MissingGradientNamesParameter) {
  auto a = TensorD::parameter({1}, {1.0});
  auto b = TensorD::parameter({1}, {1.0});
  a.mutable_grad()[0] = 1.0;
  AdamW<double> opt({{"enc.w", a}, {"dec.bias", b}});
  try {
    opt.step();
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("dec.bias"), std::string::npos);
  }
}

TEST(AdamW, MomentShapesAndHalvingSchedule) {
  auto a = TensorD::parameter({2, 3}, std::vector<double>(6, 0.0));
  AdamW<double> opt({{"a", a}});
  EXPECT_EQ(opt.first_moment(0).size(), 6u);
  EXPECT_EQ(opt.second_moment(0).size(), 6u);
  EXPECT_DOUBLE_EQ(halving_schedule(1e-4, 0, 2000), 1e-4);
  EXPECT_DOUBLE_EQ(halving_schedule(1e-4, 1999, 2000), 1e-4);
  EXPECT_DOUBLE_EQ(halving_schedule(1e-4, 2000, 2000), 5e-5);
  EXPECT_DOUBLE_EQ(halving_schedule(1e-4, 4000, 2000), 2.5e-5);
}

// ---------------------------------------------------------------------------
// checkpoint

TEST(Checkpoint, RoundTripPreservesRecords) {
  const auto path = (std::filesystem::temp_directory_path() / "avss_ckpt_roundtrip.bin").string();
  std::mt19937_64 rng(23);
  auto w = random_tensor({2, 3, 4}, rng);
  std::vector<checkpoint::Record> recs{checkpoint::to_record("enc.w", w), checkpoint::scalar_record("iter", 7)};
  checkpoint::write(path, recs);
  auto back = checkpoint::read(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].name, "enc.w");
  EXPECT_EQ(back[0].shape, (Shape{2, 3, 4}));
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(back[0].values[i], static_cast<float>(w[i]));
  EXPECT_EQ(back[1].values[0], 7.0f);
  TensorD target({2, 3, 4});
  checkpoint::load_into(back[0], target);
  EXPECT_EQ(target[5], static_cast<double>(static_cast<float>(w[5])));
  TensorD wrong({3, 2, 4});
  EXPECT_THROW(checkpoint::load_into(back[0], wrong), DimensionError);
  std::filesystem::remove(path);
}

TEST(Checkpoint, HeaderLayout) {
  const auto path = (std::filesystem::temp_directory_path() / "avss_ckpt_header.bin").string();
  checkpoint::write(path, {checkpoint::scalar_record("x", 1.5)});
  std::ifstream is(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), {});
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "AVSSCKPT");
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[9] | bytes[10] | bytes[11], 0);
  std::filesystem::remove(path);
}

TEST(Checkpoint, BadMagicRejected) {
  const auto path = (std::filesystem::temp_directory_path() / "avss_ckpt_bad.bin").string();
  std::ofstream(path, std::ios::binary) << "NOTACKPT\x01\0\0\0";
  EXPECT_THROW(checkpoint::read(path), checkpoint::FormatError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace avss
