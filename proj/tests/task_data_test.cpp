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

#include "dpcl/task_data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

namespace dpcl {
namespace {

class TempDir {
 public:
  TempDir() {
    path_ = std::filesystem::temp_directory_path() /
            ("dpcl_task_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

TEST(LoadIdxArchiveTest, HandBuiltTwoImageFixture) {
  TempDir dir;
  // Two 2x2 images, written byte by byte.
  write_bytes(dir.file("img"), {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2,
                                0, 255, 51, 102,
                                255, 0, 0, 255});
  write_bytes(dir.file("lab"), {0, 0, 8, 1, 0, 0, 0, 2, 7, 3});
  const Dataset ds = load_idx_archive(dir.file("img"), dir.file("lab"));
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.feature_dim, 4u);
  EXPECT_EQ(ds.num_classes, 8u);
  EXPECT_EQ(ds.examples[0].x, (std::vector<double>{0.0, 1.0, 0.2, 0.4}));
  EXPECT_EQ(ds.examples[1].x, (std::vector<double>{1.0, 0.0, 0.0, 1.0}));
  EXPECT_EQ(ds.examples[0].y, 7u);
  EXPECT_EQ(ds.examples[1].y, 3u);
}

TEST(LoadIdxArchiveTest, SwappedMagicIsParseError) {
  TempDir dir;
  write_bytes(dir.file("img"), {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 9});
  write_bytes(dir.file("lab"), {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 9});
  EXPECT_THROW(load_idx_archive(dir.file("img"), dir.file("lab")), ParseError);
}

TEST(LoadIdxArchiveTest, EmptyArchiveIsValid) {
  TempDir dir;
  write_bytes(dir.file("img"), {0, 0, 8, 3, 0, 0, 0, 0, 0, 0, 0, 28, 0, 0, 0, 28});
  write_bytes(dir.file("lab"), {0, 0, 8, 1, 0, 0, 0, 0});
  const Dataset ds = load_idx_archive(dir.file("img"), dir.file("lab"));
  EXPECT_TRUE(ds.empty());
  EXPECT_EQ(ds.feature_dim, 784u);
}

TEST(LoadIdxArchiveTest, TruncationAndCountMismatchNameOffsets) {
  TempDir dir;
  write_bytes(dir.file("img"), {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2, 1, 2, 3});
  write_bytes(dir.file("lab"), {0, 0, 8, 1, 0, 0, 0, 2, 0, 1});
  try {
    load_idx_archive(dir.file("img"), dir.file("lab"));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 19u);
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }
  write_bytes(dir.file("lab3"), {0, 0, 8, 1, 0, 0, 0, 3, 0, 1, 2});
  write_bytes(dir.file("img2"), {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 1, 1, 2});
  EXPECT_THROW(load_idx_archive(dir.file("img2"), dir.file("lab3")), ParseError);
  write_bytes(dir.file("short"), {0, 0, 8});
  EXPECT_THROW(load_idx_archive(dir.file("short"), dir.file("lab3")), ParseError);
  EXPECT_THROW(load_idx_archive(dir.file("missing"), dir.file("lab3")), InputError);
}

TEST(LoadIdxArchiveTest, WriteThenLoadRoundTrip) {
  TempDir dir;
  CounterRng rng(stream_key(3, {}));
  std::vector<std::vector<std::uint8_t>> images(25, std::vector<std::uint8_t>(12));
  std::vector<std::uint8_t> labels(25);
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (auto& px : images[i]) px = static_cast<std::uint8_t>(rng.below(256));
    labels[i] = static_cast<std::uint8_t>(rng.below(10));
  }
  write_idx_archive(dir.file("i"), dir.file("l"), images, labels, 3, 4);
  const Dataset ds = load_idx_archive(dir.file("i"), dir.file("l"), 10);
  ASSERT_EQ(ds.size(), 25u);
  for (std::size_t i = 0; i < images.size(); ++i) {
    EXPECT_EQ(ds.examples[i].y, labels[i]);
    for (std::size_t k = 0; k < 12; ++k) EXPECT_EQ(ds.examples[i].x[k], images[i][k] / 255.0);
  }
}

Dataset small_dataset(std::size_t n, std::size_t d) {
  Dataset ds{{}, 3, d};
  for (std::size_t i = 0; i < n; ++i) {
    Example ex;
    for (std::size_t k = 0; k < d; ++k) ex.x.push_back(static_cast<double>(i * d + k));
    ex.y = i % 3;
    ds.examples.push_back(ex);
  }
  return ds;
}

TEST(PermutedStreamTest, SingleTaskUsesIdentity) {
  const TaskStream s = make_permuted_stream(small_dataset(20, 16), small_dataset(5, 16), 1, 7);
  ASSERT_EQ(s.num_tasks(), 1u);
  EXPECT_EQ(s.tasks[0].permutation, identity_permutation(16));
  EXPECT_EQ(s.tasks[0].test.examples, small_dataset(5, 16).examples);
}

TEST(PermutedStreamTest, PermutationInverseRoundTrip) {
  CounterRng rng(4);
  const Permutation p = random_permutation(50, rng);
  ASSERT_TRUE(is_permutation_of_iota(p));
  std::vector<double> x(50);
  for (std::size_t i = 0; i < 50; ++i) x[i] = i * 0.5;
  EXPECT_EQ(apply_permutation(apply_permutation(x, p), invert(p)), x);
}

TEST(PermutedStreamTest, DifferentSeedsGiveDifferentPermutations) {
  const auto a = make_permuted_stream(small_dataset(20, 16), small_dataset(5, 16), 2, 1);
  const auto b = make_permuted_stream(small_dataset(20, 16), small_dataset(5, 16), 2, 2);
  EXPECT_NE(a.tasks[1].permutation, b.tasks[1].permutation);
}

TEST(PermutedStreamTest, SplitsAreDisjointAndPermutationsBijective) {
  const Dataset base = small_dataset(100, 16);
  const auto s = make_permuted_stream(base, small_dataset(10, 16), 4, 9, {0.2, true});
  for (const Task& t : s.tasks) {
    EXPECT_TRUE(is_permutation_of_iota(t.permutation));
    Permutation sorted = t.permutation;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, identity_permutation(16));
    EXPECT_EQ(t.ref.size(), 20u);
    EXPECT_EQ(t.train.size(), 80u);
    // Features are unique per base example, so the first feature identifies it.
    const Permutation inv = invert(t.permutation);
    std::set<double> train_ids, ref_ids;
    for (const auto& ex : t.train.examples) train_ids.insert(apply_permutation(ex.x, inv)[0]);
    for (const auto& ex : t.ref.examples) ref_ids.insert(apply_permutation(ex.x, inv)[0]);
    for (double id : ref_ids) EXPECT_EQ(train_ids.count(id), 0u);
    EXPECT_EQ(train_ids.size() + ref_ids.size(), 100u);
    for (std::size_t i = 0; i < t.test.size(); ++i) {
      EXPECT_EQ(t.test.examples[i].x, apply_permutation(small_dataset(10, 16).examples[i].x, t.permutation));
    }
  }
  EXPECT_NE(s.tasks[1].permutation, s.tasks[2].permutation);
}

TEST(PermutedStreamTest, UnpermutedOptionRepeatsIdentity) {
  const auto s = make_permuted_stream(small_dataset(30, 8), small_dataset(3, 8), 3, 5, {0.1, false});
  for (const Task& t : s.tasks) EXPECT_EQ(t.permutation, identity_permutation(8));
}

TEST(PermutedStreamTest, ConfigErrors) {
  EXPECT_THROW(make_permuted_stream(small_dataset(30, 8), small_dataset(3, 8), 0, 5), ConfigError);
  EXPECT_THROW(make_permuted_stream(small_dataset(30, 8), small_dataset(3, 8), 2, 5, {0.0, true}), ConfigError);
  EXPECT_THROW(make_permuted_stream(small_dataset(30, 8), small_dataset(3, 8), 2, 5, {1.0, true}), ConfigError);
}

// Classifies by the closest empirical class mean.
double nearest_centroid_accuracy(const Dataset& train, const Dataset& test) {
  std::vector<std::vector<double>> mean(train.num_classes, std::vector<double>(train.feature_dim, 0.0));
  std::vector<double> count(train.num_classes, 0.0);
  for (const auto& ex : train.examples) {
    for (std::size_t k = 0; k < ex.x.size(); ++k) mean[ex.y][k] += ex.x[k];
    count[ex.y] += 1;
  }
  for (std::size_t c = 0; c < mean.size(); ++c) {
    for (double& v : mean[c]) v /= count[c];
  }
  std::size_t correct = 0;
  for (const auto& ex : test.examples) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < mean.size(); ++c) {
      double d = 0;
      for (std::size_t k = 0; k < ex.x.size(); ++k) d += (ex.x[k] - mean[c][k]) * (ex.x[k] - mean[c][k]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    correct += best == ex.y;
  }
  return static_cast<double>(correct) / test.size();
}

TEST(MakeSyntheticTest, LargeMarginIsPerfectlySeparable) {
  const Dataset train = make_synthetic(64, 10, 100, 12.0, 5, 0);
  const Dataset test = make_synthetic(64, 10, 100, 12.0, 5, 1);
  EXPECT_EQ(nearest_centroid_accuracy(train, test), 1.0);
}

TEST(MakeSyntheticTest, BalancedLabelsAndUnitRange) {
  const Dataset ds = make_synthetic(16, 4, 30, 3.0, 2);
  ASSERT_EQ(ds.size(), 120u);
  std::vector<int> counts(4, 0);
  for (const auto& ex : ds.examples) {
    ++counts[ex.y];
    for (double v : ex.x) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  for (int c : counts) EXPECT_EQ(c, 30);
}

TEST(MakeSyntheticTest, EmptyAndDeterministic) {
  EXPECT_TRUE(make_synthetic(8, 3, 0, 2.0, 1).empty());
  const Dataset a = make_synthetic(8, 3, 10, 2.0, 1);
  const Dataset b = make_synthetic(8, 3, 10, 2.0, 1);
  EXPECT_EQ(a.examples, b.examples);
  EXPECT_THROW(make_synthetic(8, 3, 10, 0.0, 1), ConfigError);
}

}  // namespace
}  // namespace dpcl
