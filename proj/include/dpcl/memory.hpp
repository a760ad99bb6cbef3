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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dpcl/error.hpp"
#include "dpcl/nn.hpp"
#include "dpcl/rng.hpp"

namespace dpcl {

/// Reference data retained from one finished task.
struct MiniMemoryBlock {
  std::size_t task_id = 0;
  std::vector<Example> examples;
};

/// Append-only sequence of mini-memory blocks, block i holding task i.
class EpisodicMemory {
 public:
  const std::vector<MiniMemoryBlock>& blocks() const noexcept { return blocks_; }
  std::size_t num_blocks() const noexcept { return blocks_.size(); }
  bool empty() const noexcept { return blocks_.empty(); }
  std::size_t last_task_id() const noexcept { return blocks_.empty() ? 0 : blocks_.back().task_id; }

  /// Block for a 1-based task id.
  const MiniMemoryBlock& block(std::size_t task_id) const {
    if (task_id == 0 || task_id > blocks_.size()) {
      throw StateError("no memory block for task " + std::to_string(task_id));
    }
    return blocks_[task_id - 1];
  }

  std::size_t total_examples() const noexcept {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.examples.size();
    return n;
  }

  void append(std::size_t task_id, std::vector<Example> examples) {
    if (task_id != last_task_id() + 1) {
      throw StateError("memory block for task " + std::to_string(task_id) +
                       " out of order; expected task " + std::to_string(last_task_id() + 1));
    }
    if (examples.empty()) throw InputError("memory block must not be empty");
    blocks_.push_back(MiniMemoryBlock{task_id, std::move(examples)});
  }

 private:
  std::vector<MiniMemoryBlock> blocks_;
};

/// Stores a task's reference split as its mini-memory block.
inline EpisodicMemory update_eps_mem(EpisodicMemory mem, std::vector<Example> ref_data,
                                     std::size_t task_id) {
  mem.append(task_id, std::move(ref_data));
  return mem;
}

/// Indices of min(count, n) distinct elements of [0, n), uniformly at random.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count,
                                                           CounterRng& rng) {
  count = std::min(count, n);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

inline std::vector<Example> sample_block_batch(const MiniMemoryBlock& block, std::size_t count,
                                               CounterRng& rng) {
  std::vector<Example> out;
  for (std::size_t i : sample_without_replacement(block.examples.size(), count, rng)) {
    out.push_back(block.examples[i]);
  }
  return out;
}

struct RefSample {
  std::size_t block_id = 0;
  std::vector<Example> examples;
};

/// Picks one block uniformly among tasks 1..T-1, then draws up to
/// ref_batch_size of its examples without replacement.
/// Uniform block id in 1..T-1.
inline std::size_t choose_reference_block(const EpisodicMemory& mem, std::size_t current_task,
                                          CounterRng& rng) {
  if (current_task < 2) throw StateError("no reference block exists at task 1");
  if (mem.num_blocks() < current_task - 1) {
    throw StateError("memory holds " + std::to_string(mem.num_blocks()) + " blocks, task " +
                     std::to_string(current_task) + " needs " + std::to_string(current_task - 1));
  }
  return 1 + static_cast<std::size_t>(rng.below(current_task - 1));
}

inline RefSample cal_gref_sample(const EpisodicMemory& mem, std::size_t current_task,
                                 std::size_t ref_batch_size, CounterRng& rng) {
  const std::size_t block_id = choose_reference_block(mem, current_task, rng);
  return RefSample{block_id, sample_block_batch(mem.block(block_id), ref_batch_size, rng)};
}

/// Uniform draw without replacement over the union of all blocks.
inline std::vector<Example> sample_memory_union(const EpisodicMemory& mem, std::size_t count,
                                                CounterRng& rng) {
  const std::size_t total = mem.total_examples();
  if (total == 0) throw StateError("episodic memory is empty");
  std::vector<Example> out;
  for (std::size_t flat : sample_without_replacement(total, count, rng)) {
    for (const auto& b : mem.blocks()) {
      if (flat < b.examples.size()) {
        out.push_back(b.examples[flat]);
        break;
      }
      flat -= b.examples.size();
    }
  }
  return out;
}

/// Monte-Carlo selection frequency of every memory example under the
/// reference sampler at task T with within-block rate q. Result[b][k] is the
/// frequency for example k of block b+1.
inline std::vector<std::vector<double>> membership_expectation_check(const EpisodicMemory& mem,
                                                                     std::size_t current_task,
                                                                     double q, std::size_t trials,
                                                                     std::uint64_t seed) {
  if (current_task < 2 || mem.num_blocks() < current_task - 1) {
    throw StateError("membership check needs blocks 1..T-1");
  }
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("q must lie in [0, 1]");
  const std::size_t blocks = current_task - 1;
  const std::size_t block_size = mem.block(1).examples.size();
  for (std::size_t b = 1; b <= blocks; ++b) {
    if (mem.block(b).examples.size() != block_size) {
      throw InputError("membership check requires equally sized blocks");
    }
  }
  const auto batch = static_cast<std::size_t>(std::llround(q * static_cast<double>(block_size)));
  std::vector<std::vector<double>> counts(blocks, std::vector<double>(block_size, 0.0));
  CounterRng rng(stream_key(seed, {0x3e3}));
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t block_id = 1 + static_cast<std::size_t>(rng.below(blocks));
    for (std::size_t k : sample_without_replacement(block_size, batch, rng)) {
      counts[block_id - 1][k] += 1.0;
    }
  }
  if (trials > 0) {
    for (auto& row : counts) {
      for (double& c : row) c /= static_cast<double>(trials);
    }
  }
  return counts;
}

}  // namespace dpcl
