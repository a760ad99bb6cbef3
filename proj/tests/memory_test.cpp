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

#include "dpcl/memory.hpp"

#include <cmath>
#include <set>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

namespace dpcl {
namespace {

std::vector<Example> block_data(std::size_t n, double tag) {
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({{tag, static_cast<double>(i)}, i % 3});
  return out;
}

EpisodicMemory memory_with(std::size_t blocks, std::size_t size) {
  EpisodicMemory mem;
  for (std::size_t b = 1; b <= blocks; ++b) mem = update_eps_mem(std::move(mem), block_data(size, b), b);
  return mem;
}

double binomial_3sigma(double p, double n) { return 3.0 * std::sqrt(p * (1 - p) / n); }

TEST(UpdateEpsMemTest, AppendsFirstBlock) {
  const EpisodicMemory mem = update_eps_mem({}, block_data(4, 1), 1);
  EXPECT_EQ(mem.num_blocks(), 1u);
  EXPECT_EQ(mem.block(1).task_id, 1u);
}

TEST(UpdateEpsMemTest, KeepsOrderAndLeavesPriorBlocksUntouched) {
  EpisodicMemory mem = memory_with(2, 3);
  const auto before = mem.block(1).examples;
  mem = update_eps_mem(std::move(mem), block_data(5, 3), 3);
  ASSERT_EQ(mem.num_blocks(), 3u);
  for (std::size_t b = 1; b <= 3; ++b) EXPECT_EQ(mem.blocks()[b - 1].task_id, b);
  EXPECT_EQ(mem.block(1).examples, before);
}

TEST(UpdateEpsMemTest, SkippedOrDuplicateTaskIsStateError) {
  EXPECT_THROW(update_eps_mem(memory_with(1, 3), block_data(2, 3), 3), StateError);
  EXPECT_THROW(update_eps_mem(memory_with(2, 3), block_data(2, 2), 2), StateError);
}

TEST(UpdateEpsMemTest, EmptyBlockRejected) {
  EXPECT_THROW(update_eps_mem({}, {}, 1), InputError);
}

TEST(CalGrefSampleTest, SingleCandidateBlock) {
  const EpisodicMemory mem = memory_with(1, 10);
  for (std::uint64_t s = 0; s < 100; ++s) {
    CounterRng rng(stream_key(s, {}));
    EXPECT_EQ(cal_gref_sample(mem, 2, 3, rng).block_id, 1u);
  }
}

TEST(CalGrefSampleTest, TaskOneOrMissingBlocksIsStateError) {
  CounterRng rng(1);
  EXPECT_THROW(cal_gref_sample(EpisodicMemory{}, 1, 3, rng), StateError);
  EXPECT_THROW(cal_gref_sample(memory_with(1, 4), 3, 3, rng), StateError);
}

TEST(CalGrefSampleTest, LargeBatchReturnsWholeBlockOnce) {
  const EpisodicMemory mem = memory_with(1, 7);
  CounterRng rng(3);
  const RefSample s = cal_gref_sample(mem, 2, 50, rng);
  ASSERT_EQ(s.examples.size(), 7u);
  std::set<double> seen;
  for (const auto& ex : s.examples) seen.insert(ex.x[1]);
  EXPECT_EQ(seen.size(), 7u);
}

TEST(CalGrefSampleTest, WithinBlockDrawHasNoRepeats) {
  const EpisodicMemory mem = memory_with(3, 20);
  CounterRng rng(4);
  for (int t = 0; t < 200; ++t) {
    const RefSample s = cal_gref_sample(mem, 4, 8, rng);
    std::set<double> seen;
    for (const auto& ex : s.examples) {
      EXPECT_EQ(ex.x[0], static_cast<double>(s.block_id));
      seen.insert(ex.x[1]);
    }
    EXPECT_EQ(seen.size(), 8u);
  }
}

TEST(CalGrefSampleTest, BlockFrequenciesAreUniform) {
  constexpr int kDraws = 100000;
  const EpisodicMemory mem = memory_with(4, 5);
  std::vector<double> counts(4, 0.0);
  CounterRng rng(stream_key(2024, {}));
  for (int i = 0; i < kDraws; ++i) counts[cal_gref_sample(mem, 5, 1, rng).block_id - 1] += 1;
  double chi2 = 0.0;
  for (double c : counts) {
    EXPECT_NEAR(c / kDraws, 0.25, binomial_3sigma(0.25, kDraws));
    chi2 += (c - kDraws / 4.0) * (c - kDraws / 4.0) / (kDraws / 4.0);
  }
  EXPECT_LT(chi2, boost::math::quantile(boost::math::chi_squared_distribution<>(3), 0.99));
}

TEST(MembershipCheckTest, SingleBlockFullRateSelectsEverything) {
  const auto freq = membership_expectation_check(memory_with(1, 6), 2, 1.0, 500, 1);
  ASSERT_EQ(freq.size(), 1u);
  for (double f : freq[0]) EXPECT_EQ(f, 1.0);
}

TEST(MembershipCheckTest, FrequencyMatchesQOverTMinusOne) {
  constexpr int kTrials = 100000;
  const auto freq = membership_expectation_check(memory_with(2, 10), 3, 0.5, kTrials, 2);
  for (const auto& block : freq) {
    for (double f : block) EXPECT_NEAR(f, 0.25, binomial_3sigma(0.25, kTrials));
  }
}

TEST(MembershipCheckTest, ZeroRateSelectsNothing) {
  const auto freq = membership_expectation_check(memory_with(3, 4), 4, 0.0, 1000, 3);
  for (const auto& block : freq) {
    for (double f : block) EXPECT_EQ(f, 0.0);
  }
}

TEST(MembershipCheckTest, UnequalBlocksRejected) {
  EpisodicMemory mem = memory_with(1, 4);
  mem = update_eps_mem(std::move(mem), block_data(5, 2), 2);
  EXPECT_THROW(membership_expectation_check(mem, 3, 0.5, 10, 0), InputError);
}

TEST(SampleMemoryUnionTest, DrawsAcrossBlocksWithoutRepeats) {
  const EpisodicMemory mem = memory_with(3, 4);
  CounterRng rng(9);
  const auto all = sample_memory_union(mem, 100, rng);
  ASSERT_EQ(all.size(), 12u);
  std::set<std::pair<double, double>> seen;
  for (const auto& ex : all) seen.insert({ex.x[0], ex.x[1]});
  EXPECT_EQ(seen.size(), 12u);
  EXPECT_THROW(sample_memory_union(EpisodicMemory{}, 1, rng), StateError);
}

}  // namespace
}  // namespace dpcl
