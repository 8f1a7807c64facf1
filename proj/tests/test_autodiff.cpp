#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dualgan/gradcheck.hpp"
#include "dualgan/layers.hpp"
#include "dualgan/networks.hpp"
#include "dualgan/ops.hpp"
#include "test_support.hpp"

namespace dualgan {
namespace {

using testing::random_tensor;

TEST(Backward, SumGivesOnes) {
  auto x = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  sum(x).backward();
  for (const double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, NonScalarIsUsageError) {
  auto x = Tensor<double>::zeros({2}, true);
  EXPECT_THROW(mul_scalar(x, 2.0).backward(), UsageError);
}

TEST(Backward, LeafWithoutRequiresGradKeepsGradAbsent) {
  auto x = Tensor<double>::full({3}, 1.0, true);
  auto y = Tensor<double>::full({3}, 2.0, false);
  sum(add(x, y)).backward();
  EXPECT_TRUE(x.has_grad());
  EXPECT_FALSE(y.has_grad());
}

TEST(Backward, SharedSubexpressionVisitedOnce) {
  auto x = Tensor<double>::from({1}, {3.0}, true);
  const auto y = mul_scalar(x, 2.0);
  // y feeds the loss twice; the graph is a diamond
  sum(add(y, y)).backward();
  EXPECT_EQ(x.grad()[0], 4.0);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  auto x = Tensor<double>::from({1}, {3.0}, true);
  Tensor<double> y;
  {
    NoGradGuard guard;
    y = sum(mul_scalar(x, 2.0));
  }
  EXPECT_FALSE(y.requires_grad());
  y.backward();
  EXPECT_FALSE(x.has_grad());
}

TEST(Backward, ConvLeakyL1ChainMatchesFiniteDifferences) {
  RngStream rng(1);
  auto x = random_tensor({1, 2, 6, 6}, rng, -1, 1, true);
  auto k = random_tensor({3, 2, 3, 3}, rng, -1, 1, true);
  const auto target = random_tensor({1, 3, 3, 3}, rng);
  const double err = check_gradients([&] { return l1_mean(leaky_relu(conv2d(x, k, 2, 1), 0.2), target); }, {x, k});
  EXPECT_LT(err, 1e-4);
}

TEST(CheckGradients, LinearFunctionIsExact) {
  RngStream rng(2);
  auto x = random_tensor({10}, rng, -1, 1, true);
  EXPECT_LT(check_gradients([&] { return sum(mul_scalar(x, 3.0)); }, {x}), 1e-8);
}

// A backward rule that returns twice the true derivative must be flagged.
TEST(CheckGradients, DetectsCorruptedBackwardRule) {
  RngStream rng(3);
  auto x = random_tensor({8}, rng, -1, 1, true);
  auto broken_square = [](const Tensor<double>& in) {
    std::vector<double> out(in.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * in[i];
    return detail::make_result<double>(
        in.shape(), std::move(out), {in.node()},
        [](detail::Node<double>& self) {
          auto& p = *self.parents[0];
          auto g = p.grad_slot();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * 4.0 * p.data[i];
        },
        "broken_square");
  };
  EXPECT_GT(check_gradients([&] { return sum(broken_square(x)); }, {x}), 1e-2);
}

TEST(CheckGradients, GeneratorForwardThroughL1) {
  UNetArch arch;
  arch.in_channels = 1;
  arch.out_channels = 1;
  arch.depth = 2;
  arch.base_width = 2;
  UNetGenerator<double> g(arch);
  RngStream init(4);
  init_weights(g.params(), init);
  // larger weights keep activations away from the flat region of tanh
  for (auto& e : g.params().entries())
    if (e.role == ParamRole::kConvWeight)
      for (auto& v : e.tensor.mutable_data()) v *= 20.0;
  RngStream rng(5);
  const auto x = random_tensor({1, 1, 8, 8}, rng);
  const auto target = random_tensor({1, 1, 8, 8}, rng);
  std::vector<Tensor<double>> params;
  for (auto& e : g.params().entries()) params.push_back(e.tensor);
  const double err = check_gradients(
      [&] {
        RngStream z(6);  // same dropout mask on every evaluation
        return l1_mean(g.forward(x, z, true), target);
      },
      params);
  EXPECT_LT(err, 1e-4);
}

// Every differentiable op against central differences on random small inputs.
class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  RngStream rng(100 + GetParam());
  auto x = random_tensor({2, 2, 4, 4}, rng, -1, 1, true);
  auto x2 = random_tensor({2, 2, 4, 4}, rng, -1, 1, true);
  auto k = random_tensor({3, 2, 3, 3}, rng, -1, 1, true);
  auto kt = random_tensor({2, 3, 4, 4}, rng, -1, 1, true);
  auto bias = random_tensor({2}, rng, -1, 1, true);
  auto scale = random_tensor({2}, rng, 0.5, 1.5, true);
  auto shift = random_tensor({2}, rng, -1, 1, true);
  auto probe = [](const Tensor<double>& t) { return testing::weighted_probe(t, 7); };
  EXPECT_LT(check_gradients([&] { return probe(conv2d(x, k, 1, 1)); }, {x, k}), 1e-4);
  EXPECT_LT(check_gradients([&] { return probe(conv2d_transpose(x, kt, 2, 1)); }, {x, kt}), 1e-4);
  EXPECT_LT(check_gradients([&] { return probe(add_channel_bias(x, bias)); }, {x, bias}), 1e-4);
  EXPECT_LT(check_gradients([&] { return probe(tanh(x)); }, {x}), 1e-4);
  EXPECT_LT(check_gradients([&] { return probe(leaky_relu(x, 0.2)); }, {x}), 1e-4);
  EXPECT_LT(check_gradients([&] { return probe(relu(x)); }, {x}), 1e-4);
  EXPECT_LT(check_gradients([&] { return probe(concat_channels(x, x2)); }, {x, x2}), 1e-4);
  EXPECT_LT(check_gradients([&] { return l1_mean(x, x2); }, {x, x2}), 1e-4);
  EXPECT_LT(check_gradients([&] { return probe(normalize_forward(x, scale, shift)); }, {x, scale, shift}), 1e-4);
  EXPECT_LT(check_gradients([&] { return mean(sub(x, x2)); }, {x, x2}), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(RandomTrials, OpGradient, ::testing::Range(0, 5));

}  // namespace
}  // namespace dualgan
