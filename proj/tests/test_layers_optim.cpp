#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "dualgan/gradcheck.hpp"
#include "dualgan/layers.hpp"
#include "dualgan/optim.hpp"
#include "test_support.hpp"

namespace dualgan {
namespace {

using testing::random_tensor;
using testing::weighted_probe;

ParamStore<double> mixed_store() {
  ParamStore<double> s;
  s.add("conv.weight", ParamRole::kConvWeight, {4, 3, 4, 4});
  s.add("conv.bias", ParamRole::kBias, {4});
  s.add("norm.norm_scale", ParamRole::kNormScale, {4});
  s.add("norm.norm_shift", ParamRole::kNormShift, {4});
  return s;
}

TEST(ParamStore, NamesAreUnique) {
  ParamStore<double> s;
  s.add("a", ParamRole::kBias, {2});
  EXPECT_THROW(s.add("a", ParamRole::kBias, {3}), UsageError);
  EXPECT_THROW(s.at("missing"), UsageError);
  EXPECT_TRUE(s.at("a").requires_grad());
}

TEST(ParamStore, CopyIsDeep) {
  auto a = mixed_store();
  RngStream rng(3);
  init_weights(a, rng);
  auto b = a;
  b.at("conv.weight").mutable_data()[0] += 1.0;
  EXPECT_NE(a.at("conv.weight")[0], b.at("conv.weight")[0]);
  EXPECT_EQ(a.at("conv.weight")[1], b.at("conv.weight")[1]);
}

TEST(ParamStore, FreezeGuardRestores) {
  auto s = mixed_store();
  {
    FreezeGuard<double> guard(s);
    for (const auto& e : s.entries()) EXPECT_FALSE(e.tensor.requires_grad());
  }
  for (const auto& e : s.entries()) EXPECT_TRUE(e.tensor.requires_grad());
}

TEST(InitWeights, BiasesAndShiftsZeroScalesOne) {
  auto s = mixed_store();
  RngStream rng(1);
  init_weights(s, rng);
  for (const double v : s.at("conv.bias").data()) EXPECT_EQ(v, 0.0);
  for (const double v : s.at("norm.norm_shift").data()) EXPECT_EQ(v, 0.0);
  for (const double v : s.at("norm.norm_scale").data()) EXPECT_EQ(v, 1.0);
}

TEST(InitWeights, SameSeedIsBitIdentical) {
  auto a = mixed_store(), b = mixed_store();
  RngStream ra(42), rb(42);
  init_weights(a, ra);
  init_weights(b, rb);
  EXPECT_EQ(a.snapshot(), b.snapshot());
  auto c = mixed_store();
  RngStream rc(43);
  init_weights(c, rc);
  EXPECT_NE(a.snapshot(), c.snapshot());
}

TEST(InitWeights, MomentsWithinThreeStandardErrors) {
  ParamStore<double> s;
  s.add("w", ParamRole::kConvWeight, {100000});
  RngStream rng(7);
  init_weights(s, rng);
  const auto v = s.at("w").data();
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (const double x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (const double x : v) var += (x - mean) * (x - mean);
  var /= n - 1.0;
  const double sd = std::sqrt(var);
  const double sigma = 0.02;
  // Standard error of the mean is sigma/sqrt(n); of the sample std, about sigma/sqrt(2(n-1)).
  EXPECT_LT(std::abs(mean), 3.0 * sigma / std::sqrt(n));
  EXPECT_LT(std::abs(sd - sigma), 3.0 * sigma / std::sqrt(2.0 * (n - 1.0)));
}

TEST(NormalizeForward, ConstantChannelEqualsShift) {
  auto x = Tensor<double>::full({1, 2, 3, 3}, 3.0);
  auto scale = Tensor<double>::from({2}, {2.0, -1.5});
  auto shift = Tensor<double>::from({2}, {0.25, -0.75});
  const auto y = normalize_forward(x, scale, shift);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(y[i], 0.25);
  for (std::size_t i = 9; i < 18; ++i) EXPECT_DOUBLE_EQ(y[i], -0.75);
}

TEST(NormalizeForward, StandardizesPerChannel) {
  RngStream rng(11);
  // Spread well above sqrt(eps) so the epsilon term moves the variance by less than 1e-6.
  auto x = random_tensor({2, 3, 5, 4}, rng, -40.0, 60.0);
  const auto y = normalize_forward(x, Tensor<double>::full({3}, 1.0), Tensor<double>::zeros({3}));
  const std::size_t hw = 20;
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < hw; ++i) mean += y[(n * 3 + c) * hw + i];
    mean /= 40.0;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < hw; ++i) sq += std::pow(y[(n * 3 + c) * hw + i] - mean, 2);
    EXPECT_LT(std::abs(mean), 1e-6);
    EXPECT_NEAR(sq / 40.0, 1.0, 1e-6);
  }
}

TEST(NormalizeForward, MeanPropertyOverRandomInputs) {
  RngStream rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = 1 + rng.below(3), c = 1 + rng.below(4), h = 1 + rng.below(5), w = 2 + rng.below(5);
    const double spread = 0.5 + 20.0 * rng.uniform();
    auto x = random_tensor({b, c, h, w}, rng, -spread, spread);
    const auto y = normalize_forward(x, Tensor<double>::full({c}, 1.0), Tensor<double>::zeros({c}));
    for (std::size_t ch = 0; ch < c; ++ch) {
      double mean = 0.0;
      for (std::size_t n = 0; n < b; ++n)
        for (std::size_t i = 0; i < h * w; ++i) mean += y[(n * c + ch) * h * w + i];
      EXPECT_LT(std::abs(mean / double(b * h * w)), 1e-6);
    }
  }
}

TEST(NormalizeForward, GradientMatchesFiniteDifferences) {
  RngStream rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({2, 3, 3, 2}, rng, -2.0, 2.0, true);
    auto scale = random_tensor({3}, rng, 0.5, 1.5, true);
    auto shift = random_tensor({3}, rng, -1.0, 1.0, true);
    const double err = check_gradients(
        [&] { return weighted_probe(normalize_forward(x, scale, shift), 100 + trial); }, {x, scale, shift});
    EXPECT_LT(err, 1e-4) << "trial " << trial;
  }
}

TEST(NormalizeForward, ScaleShiftSizeMismatch) {
  auto x = Tensor<double>::zeros({1, 2, 2, 2});
  EXPECT_THROW(normalize_forward(x, Tensor<double>::zeros({3}), Tensor<double>::zeros({2})), DimensionError);
}

TEST(Layers, DownHalvesAndUpDoubles) {
  ParamStore<double> s;
  LayerSpec down{LayerKind::kDownBlock, 3, 8, 4, 2, 1, true, 0.0, Activation::leaky_relu()};
  LayerSpec up{LayerKind::kUpBlock, 8, 3, 4, 2, 1, false, 0.5, Activation::relu()};
  register_layer(s, "down", down);
  register_layer(s, "up", up);
  RngStream init(5), noise(6);
  init_weights(s, init);
  RngStream rng(4);
  const auto x = random_tensor({1, 3, 16, 16}, rng);
  const auto h = apply_layer(s, "down", down, x, nullptr, true);
  EXPECT_EQ(h.shape(), (Shape{1, 8, 8, 8}));
  const auto y = apply_layer(s, "up", up, h, &noise, true);
  EXPECT_EQ(y.shape(), (Shape{1, 3, 16, 16}));
  EXPECT_THROW(apply_layer(s, "up", up, h, nullptr, true), UsageError);
  EXPECT_TRUE(s.contains("down.norm_scale"));
  EXPECT_FALSE(s.contains("down.bias"));
  EXPECT_TRUE(s.contains("up.bias"));
}

Tensor<double> scalar_param(double v, double g) {
  auto p = Tensor<double>::from({1}, {v}, true);
  p.mutable_grad()[0] = g;
  return p;
}

TEST(RmsProp, ZeroGradientLeavesParameter) {
  auto p = scalar_param(0.7, 0.0);
  RmsPropState<double> st{{0.0}, {0.01, 0.9, 0.0}};
  rmsprop_step(p, st);
  EXPECT_EQ(p[0], 0.7);
  EXPECT_EQ(st.accum[0], 0.0);
}

TEST(RmsProp, ScalarHandEvaluation) {
  auto p = scalar_param(0.0, 1.0);
  RmsPropState<double> st{{0.0}, {0.01, 0.9, 0.0}};
  rmsprop_step(p, st);
  EXPECT_NEAR(st.accum[0], 0.1, 1e-15);
  EXPECT_NEAR(-p[0], 0.0316228, 1e-6);
}

TEST(RmsProp, MinimizesSquareWithinThousandSteps) {
  auto p = scalar_param(1.0, 0.0);
  RmsPropState<double> st{{0.0}, {0.01, 0.9, 1e-8}};
  int reached = -1;
  for (int k = 0; k < 1000; ++k) {
    p.mutable_grad()[0] = 2.0 * p[0];
    rmsprop_step(p, st);
    if (std::abs(p[0]) < 1e-2) {
      reached = k;
      break;
    }
  }
  EXPECT_GE(reached, 0);
}

TEST(RmsProp, MissingGradientIsUsageError) {
  auto p = Tensor<double>::zeros({2}, true);
  RmsPropState<double> st{{}, {}};
  EXPECT_THROW(rmsprop_step(p, st), UsageError);
  ParamStore<double> s;
  s.add("w", ParamRole::kConvWeight, {2});
  RmsProp<double> opt(s, {});
  EXPECT_THROW(opt.step(s), UsageError);
}

// f(t) = a/2 t^2 + b t. With accumulator s' after the update, the step is an ordinary
// gradient step of size eta = lr/(sqrt(s')+eps), which decreases f iff eta*a < 2.
TEST(RmsProp, OneStepDecreasesRandomQuadratics) {
  RngStream rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    const double a = 0.1 + 10.0 * rng.uniform(), b = 4.0 * rng.uniform() - 2.0;
    const double t0 = 6.0 * rng.uniform() - 3.0, s0 = 5.0 * rng.uniform();
    const double rho = 0.5 + 0.49 * rng.uniform(), eps = 1e-8;
    const double g = a * t0 + b;
    if (std::abs(g) < 1e-9) continue;
    const double s1 = rho * s0 + (1.0 - rho) * g * g;
    const double lr = (0.01 + 0.98 * rng.uniform()) * 2.0 * (std::sqrt(s1) + eps) / a;
    auto p = scalar_param(t0, g);
    RmsPropState<double> st{{s0}, {lr, rho, eps}};
    rmsprop_step(p, st);
    const auto f = [&](double t) { return 0.5 * a * t * t + b * t; };
    EXPECT_LT(f(p[0]), f(t0)) << "trial " << trial;
    EXPECT_GE(st.accum[0], 0.0);
  }
}

TEST(RmsProp, NeverProducesNaN) {
  RngStream rng(22);
  auto p = Tensor<double>::zeros({64}, true);
  RmsPropState<double> st{{}, {0.1, 0.9, 0.0}};
  for (int k = 0; k < 200; ++k) {
    auto g = p.mutable_grad();
    // Mostly zero gradients with occasional large ones, including the s == 0, eps == 0 corner.
    for (auto& v : g) v = rng.uniform() < 0.7 ? 0.0 : 1e3 * (rng.uniform() - 0.5);
    rmsprop_step(p, st);
    for (const double v : p.data()) ASSERT_TRUE(std::isfinite(v));
    for (const double s : st.accum) ASSERT_GE(s, 0.0);
  }
}

TEST(RmsProp, StoreOptimizerMatchesPerTensorSteps) {
  auto s = mixed_store();
  RngStream rng(23);
  init_weights(s, rng);
  auto ref = s;
  const RmsPropHyper h{0.05, 0.8, 1e-8};
  RmsProp<double> opt(s, h);
  std::vector<RmsPropState<double>> states(ref.size(), RmsPropState<double>{{}, h});
  for (int k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto g = s.entries()[i].tensor.mutable_grad();
      auto gr = ref.entries()[i].tensor.mutable_grad();
      for (std::size_t j = 0; j < g.size(); ++j) g[j] = gr[j] = rng.uniform() - 0.5;
      rmsprop_step(ref.entries()[i].tensor, states[i]);
    }
    opt.step(s);
  }
  EXPECT_EQ(s.snapshot(), ref.snapshot());
  EXPECT_EQ(opt.steps(), 3u);
}

TEST(ClipWeights, EndpointsAndInterior) {
  ParamStore<double> s;
  auto& w = s.add("w", ParamRole::kConvWeight, {5});
  auto d = w.mutable_data();
  const double in[] = {0.5, -0.5, 0.05, -0.1, 0.0};
  std::copy(std::begin(in), std::end(in), d.begin());
  clip_weights(s, 0.1);
  EXPECT_EQ(w[0], 0.1);
  EXPECT_EQ(w[1], -0.1);
  EXPECT_EQ(w[2], 0.05);
  EXPECT_EQ(w[3], -0.1);
  EXPECT_EQ(w[4], 0.0);
  EXPECT_THROW(clip_weights(s, 0.0), UsageError);
}

TEST(ClipWeights, IdempotentAndBoundedIncludingNormTerms) {
  RngStream rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = mixed_store();
    for (auto& e : s.entries())
      for (auto& v : e.tensor.mutable_data()) v = 4.0 * rng.uniform() - 2.0;
    const double c = 0.001 + rng.uniform();
    clip_weights(s, c);
    EXPECT_LE(s.max_abs(), c);
    const auto once = s.snapshot();
    clip_weights(s, c);
    EXPECT_EQ(s.snapshot(), once);
  }
  // A freshly initialized scale of 1 is pulled to c as well.
  auto s = mixed_store();
  RngStream init(1);
  init_weights(s, init);
  clip_weights(s, 0.03);
  for (const double v : s.at("norm.norm_scale").data()) EXPECT_EQ(v, 0.03);
}

}  // namespace
}  // namespace dualgan
