//
// Copyright 2026 The DP-CL Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "dpcl/nn.hpp"

#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "dpcl/rng.hpp"
#include "oracles.hpp"

namespace dpcl {
namespace {

std::vector<Example> random_batch(std::size_t n, std::size_t d, std::size_t C, std::uint64_t seed) {
  CounterRng rng(stream_key(seed, {77}));
  std::vector<Example> batch(n);
  for (auto& ex : batch) {
    ex.x.resize(d);
    for (double& v : ex.x) v = rng.uniform() * 2.0 - 1.0;
    ex.y = rng.below(C);
  }
  return batch;
}

// Straight-line forward pass straight off the flat parameter layout.
std::vector<double> oracle_forward_4_2_3(const std::vector<double>& p, const std::vector<double>& x) {
  // layer 0: W0 (2x4) at 0..7, b0 at 8..9; layer 1: W1 (3x2) at 10..15, b1 at 16..18
  double h[2];
  for (int o = 0; o < 2; ++o) {
    double s = p[8 + o];
    for (int i = 0; i < 4; ++i) s += p[o * 4 + i] * x[i];
    h[o] = s > 0 ? s : 0;
  }
  double z[3];
  for (int o = 0; o < 3; ++o) z[o] = p[16 + o] + p[10 + o * 2] * h[0] + p[10 + o * 2 + 1] * h[1];
  const double e0 = std::exp(z[0]), e1 = std::exp(z[1]), e2 = std::exp(z[2]);
  const double sum = e0 + e1 + e2;
  return {e0 / sum, e1 / sum, e2 / sum};
}

TEST(DenseNetTest, ParameterCountMatchesLayerSum) {
  DenseNet net({784, 256, 256, 10});
  EXPECT_EQ(net.num_params(), 784u * 256 + 256 + 256 * 256 + 256 + 256 * 10 + 10);
  DenseNet small({4, 2, 3});
  EXPECT_EQ(small.num_params(), 4u * 2 + 2 + 2 * 3 + 3);
}

TEST(DenseNetTest, RejectsDegenerateDims) {
  EXPECT_THROW(DenseNet({4}), ConfigError);
  EXPECT_THROW(DenseNet({4, 0, 3}), ConfigError);
}

TEST(DenseNetTest, ZeroWeightsGiveUniformOutput) {
  DenseNet net({5, 7, 10});
  const auto p = net.forward(std::vector<double>{0.3, -1, 2, 4, 0.1});
  for (double v : p) EXPECT_DOUBLE_EQ(v, 0.1);
}

TEST(DenseNetTest, LargeLogitSaturatesSoftmax) {
  DenseNet net({3, 4});
  net.params()[net.bias_offset(0)] = 20.0;
  const auto p = net.forward(std::vector<double>{1, 2, 3});
  EXPECT_GT(p[0], 0.99);
}

TEST(DenseNetTest, ForwardMatchesStraightLineOracle) {
  DenseNet net({4, 2, 3});
  net.init_uniform(11);
  // Scale up so both hidden units are likely active for some inputs.
  net.params() *= 3.0;
  CounterRng rng(stream_key(5, {}));
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(4);
    for (double& v : x) v = rng.uniform() * 4 - 2;
    const auto got = net.forward(x);
    const auto want = oracle_forward_4_2_3(net.params().values(), x);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(got[c], want[c], 1e-14);
  }
}

TEST(DenseNetTest, SoftmaxNormalizedAfterEveryForward) {
  for (Activation act : {Activation::kRelu, Activation::kTanh}) {
    DenseNet net({6, 9, 9, 5}, act);
    net.init_uniform(3);
    net.params() *= 10.0;
    for (const auto& ex : random_batch(40, 6, 5, 9)) {
      const auto p = net.forward(ex.x);
      const double s = std::accumulate(p.begin(), p.end(), 0.0);
      EXPECT_NEAR(s, 1.0, 1e-9);
      for (double v : p) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
}

TEST(DenseNetTest, ForwardRejectsWrongDimension) {
  DenseNet net({3, 2});
  EXPECT_THROW(net.forward(std::vector<double>{1, 2}), InputError);
}

TEST(LossTest, PerfectPredictionIsZero) {
  DenseNet net({2, 3});
  net.params()[net.bias_offset(0) + 1] = 1000.0;
  const std::vector<Example> batch{{{0.5, 0.5}, 1}};
  EXPECT_EQ(loss(net, batch), 0.0);
}

TEST(LossTest, UniformPredictionIsLogC) {
  DenseNet net({4, 10});
  const std::vector<Example> batch{{{1, 2, 3, 4}, 3}, {{0, 0, 0, 0}, 9}};
  EXPECT_NEAR(loss(net, batch), 2.302585092994046, 1e-12);
}

TEST(LossTest, TwoExampleMeanOfNegativeLogs) {
  // Zero weights, biases log(0.8), log(0.2): probabilities are (0.8, 0.2).
  DenseNet net({1, 2});
  net.params()[net.bias_offset(0)] = std::log(0.8);
  net.params()[net.bias_offset(0) + 1] = std::log(0.2);
  const std::vector<Example> batch{{{1.0}, 0}, {{-1.0}, 1}};
  // -(ln 0.8 + ln 0.2) / 2
  EXPECT_NEAR(loss(net, batch), 0.916290731874155, 1e-12);
}

TEST(LossTest, EmptyBatchIsAnError) {
  DenseNet net({2, 2});
  EXPECT_THROW(loss(net, std::vector<Example>{}), InputError);
  EXPECT_THROW(grad(net, std::vector<Example>{}), InputError);
  EXPECT_THROW(per_example_grads(net, std::vector<Example>{}), InputError);
}

TEST(GradTest, SaturatedCorrectPredictionHasTinyGradient) {
  DenseNet net({3, 4, 3});
  net.init_uniform(2);
  net.params()[net.bias_offset(1) + 2] = 50.0;
  const std::vector<Example> batch{{{0.1, 0.2, 0.3}, 2}};
  EXPECT_LT(grad(net, batch).norm(), 1e-6);
}

using oracle::max_relative_fd_error;

TEST(GradTest, MatchesCentralFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    DenseNet net({6, 8, 5, 4}, seed % 2 ? Activation::kTanh : Activation::kRelu);
    net.init_uniform(seed);
    const auto batch = random_batch(6, 6, 4, seed);
    ASSERT_LE(net.num_params(), 500u);
    EXPECT_LT(max_relative_fd_error(net, batch, 1e-5), 1e-4) << "seed " << seed;
  }
}

TEST(GradTest, BatchGradientIsMeanOfSingletons) {
  DenseNet net({5, 6, 3});
  net.init_uniform(4);
  const auto batch = random_batch(2, 5, 3, 4);
  const ParamVector both = grad(net, batch);
  const ParamVector a = grad(net, std::span(batch).first(1));
  const ParamVector b = grad(net, std::span(batch).subspan(1, 1));
  for (std::size_t i = 0; i < both.size(); ++i) EXPECT_NEAR(both[i], 0.5 * (a[i] + b[i]), 1e-15);
}

TEST(PerExampleGradsTest, SingletonEqualsBatchGradient) {
  DenseNet net({5, 6, 3});
  net.init_uniform(8);
  const auto batch = random_batch(1, 5, 3, 8);
  const auto per = per_example_grads(net, batch);
  ASSERT_EQ(per.size(), 1u);
  EXPECT_EQ(per[0], grad(net, batch));
}

TEST(PerExampleGradsTest, MeanMatchesBatchGradient) {
  DenseNet net({5, 6, 3});
  net.init_uniform(9);
  const auto batch = random_batch(8, 5, 3, 9);
  const auto per = per_example_grads(net, batch);
  ASSERT_EQ(per.size(), 8u);
  ParamVector mean(net.num_params());
  for (const auto& g : per) mean += g;
  mean *= 1.0 / 8.0;
  const ParamVector g = grad(net, batch);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(mean[i], g[i], 1e-10);
}

TEST(PerExampleGradsTest, DuplicateExampleGivesIdenticalVectors) {
  DenseNet net({5, 6, 3});
  net.init_uniform(10);
  auto batch = random_batch(1, 5, 3, 10);
  batch.push_back(batch[0]);
  const auto per = per_example_grads(net, batch);
  EXPECT_EQ(per[0], per[1]);
}

TEST(AccuracyTest, ConstructedPerfectPredictor) {
  // Identity weights: the largest feature wins.
  DenseNet net({3, 3});
  for (std::size_t c = 0; c < 3; ++c) net.params()[c * 3 + c] = 1.0;
  const std::vector<Example> data{{{1, 0, 0}, 0}, {{0, 2, 1}, 1}, {{0, 0, 5}, 2}};
  EXPECT_EQ(accuracy(net, data), 1.0);
}

TEST(AccuracyTest, ZeroNetTiesBreakToLowestIndex) {
  DenseNet net({2, 10});
  std::vector<Example> data;
  for (std::size_t c = 1; c < 10; ++c) data.push_back({{0.3, 0.4}, c});
  EXPECT_EQ(accuracy(net, data), 0.0);
  data.push_back({{0.0, 0.0}, 0});
  EXPECT_DOUBLE_EQ(accuracy(net, data), 0.1);
}

TEST(AccuracyTest, HalfCorrect) {
  DenseNet net({2, 2});
  net.params()[0] = 1.0;  // class 0 score = x0
  net.params()[3] = 1.0;  // class 1 score = x1
  const std::vector<Example> data{{{1, 0}, 0}, {{0, 1}, 1}, {{1, 0}, 1}, {{0, 1}, 0}};
  EXPECT_DOUBLE_EQ(accuracy(net, data), 0.5);
  EXPECT_THROW(accuracy(net, std::vector<Example>{}), InputError);
}

TEST(DenseNetTest, LabelOutOfRangeRejected) {
  DenseNet net({2, 3});
  ParamVector g;
  EXPECT_THROW(net.example_gradient({{0, 0}, 3}, g), InputError);
}

TEST(DenseNetTest, SeededInitIsDeterministicAndBounded) {
  DenseNet a({16, 8, 4}), b({16, 8, 4}), c({16, 8, 4});
  a.init_uniform(42);
  b.init_uniform(42);
  c.init_uniform(43);
  EXPECT_EQ(a.params(), b.params());
  EXPECT_NE(a.params(), c.params());
  for (std::size_t i = 0; i < a.bias_offset(0) + 8; ++i) EXPECT_LE(std::abs(a.params()[i]), 0.25);
}

TEST(DenseNetTest, RepeatedSgdStepsAreBitwiseReproducible) {
  auto run = [] {
    DenseNet net({6, 5, 3});
    net.init_uniform(21);
    const auto batch = random_batch(10, 6, 3, 21);
    for (int k = 0; k < 25; ++k) net.params().axpy(-0.1, grad(net, batch));
    return net.params();
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace dpcl
