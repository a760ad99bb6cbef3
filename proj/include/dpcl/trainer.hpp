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
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dpcl/accountant.hpp"
#include "dpcl/dp.hpp"
#include "dpcl/error.hpp"
#include "dpcl/memory.hpp"
#include "dpcl/metrics.hpp"
#include "dpcl/nn.hpp"
#include "dpcl/param_vector.hpp"
#include "dpcl/rng.hpp"
#include "dpcl/task_data.hpp"

namespace dpcl {

enum class TrainMode {
  kAgem,    // noiseless A-GEM, reference batch drawn from the whole memory
  kDpCl,    // one random mini-memory block per step
  kDpAgem,  // every previous block contributes a privatized reference gradient
};

enum class ProjectionRule {
  kAlways,          // apply the projection at every step
  kOnlyIfConflict,  // only when g . g_ref < 0
};

enum class ClipGranularity { kPerExample, kPerBatch };

inline std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kAgem: return "agem";
    case TrainMode::kDpCl: return "dpcl";
    case TrainMode::kDpAgem: return "dpagem";
  }
  return "?";
}

inline TrainMode parse_mode(const std::string& s) {
  if (s == "agem") return TrainMode::kAgem;
  if (s == "dpcl") return TrainMode::kDpCl;
  if (s == "dpagem") return TrainMode::kDpAgem;
  throw ConfigError("unknown mode '" + s + "' (expected agem|dpcl|dpagem)");
}

inline std::string to_string(ProjectionRule r) {
  return r == ProjectionRule::kAlways ? "always" : "conflict";
}

inline ProjectionRule parse_projection(const std::string& s) {
  if (s == "always") return ProjectionRule::kAlways;
  if (s == "conflict") return ProjectionRule::kOnlyIfConflict;
  throw ConfigError("unknown projection rule '" + s + "' (expected always|conflict)");
}

inline std::string to_string(ClipGranularity c) {
  return c == ClipGranularity::kPerExample ? "per_example" : "per_batch";
}

inline ClipGranularity parse_clip_granularity(const std::string& s) {
  if (s == "per_example") return ClipGranularity::kPerExample;
  if (s == "per_batch") return ClipGranularity::kPerBatch;
  throw ConfigError("unknown clip granularity '" + s + "' (expected per_example|per_batch)");
}

struct TrainConfig {
  TrainMode mode = TrainMode::kDpCl;
  double learning_rate = 0.1;
  std::size_t train_batch_size = 100;
  std::size_t ref_batch_size = 50;
  /// Poisson sampling rate p; 0 derives it as train_batch_size / |train|.
  double sampling_rate = 0.0;
  std::size_t epochs_per_task = 1;
  NoiseConfig noise{};
  ProjectionRule projection = ProjectionRule::kAlways;
  ClipGranularity clip_granularity = ClipGranularity::kPerExample;
  std::vector<std::size_t> hidden_layers{256, 256};
  Activation activation = Activation::kRelu;
  double delta = 1e-4;
  int lambda_max = kDefaultLambdaMax;
  /// Unset: Lemma 1 for the naive variant, Lemma 2 otherwise.
  std::optional<CompositionPolicy> policy;
  /// Mini-batches recorded for the learning curve.
  std::size_t lca_batches = 10;
  std::uint64_t seed = 1;

  bool is_private() const noexcept { return mode != TrainMode::kAgem; }

  CompositionPolicy effective_policy() const noexcept {
    if (policy) return *policy;
    return mode == TrainMode::kDpAgem ? CompositionPolicy::kLemma1 : CompositionPolicy::kLemma2;
  }

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be > 0");
    if (train_batch_size == 0) throw ConfigError("train batch size must be >= 1");
    if (ref_batch_size == 0) throw ConfigError("reference batch size must be >= 1");
    if (!(sampling_rate >= 0.0 && sampling_rate <= 1.0)) throw ConfigError("sampling rate must lie in (0, 1]");
    if (epochs_per_task == 0) throw ConfigError("epochs per task must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (lambda_max < 1) throw ConfigError("lambda_max must be >= 1");
    for (std::size_t h : hidden_layers) {
      if (h == 0) throw ConfigError("hidden layer widths must be positive");
    }
    noise.validate();
  }
};

struct ProjectionOutcome {
  bool projected = false;
  bool degenerate_reference = false;
};

/// g - (g.g_ref / g_ref.g_ref) g_ref, subject to `rule`. A zero reference
/// gradient leaves g unchanged and is reported through `outcome`.
inline ParamVector project_gradient(const ParamVector& g, const ParamVector& g_ref, ProjectionRule rule,
                                    ProjectionOutcome* outcome = nullptr) {
  ProjectionOutcome local;
  ProjectionOutcome& out = outcome != nullptr ? *outcome : local;
  out = {};
  const double ref_sq = g_ref.squared_norm();
  if (g.size() != g_ref.size()) throw InputError("project_gradient: size mismatch");
  if (ref_sq == 0.0) {
    out.degenerate_reference = true;
    return g;
  }
  const double d = dot(g, g_ref);
  if (rule == ProjectionRule::kOnlyIfConflict && d >= 0.0) return g;
  ParamVector result = g;
  result.axpy(-d / ref_sq, g_ref);
  out.projected = true;
  return result;
}

struct TrainStats {
  std::size_t steps = 0;
  std::size_t projections = 0;
  std::size_t degenerate_references = 0;
};

/// Called with (task_id, batches completed on that task).
using StepObserver = std::function<void(std::size_t, std::size_t)>;

/// Stateful driver for one continual-learning run: owns the model, the
/// episodic memory and the privacy ledger.
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::size_t input_dim, std::size_t num_classes)
      : cfg_(std::move(cfg)), net_(layer_dims(cfg_, input_dim, num_classes), cfg_.activation),
        ledger_(cfg_.delta, cfg_.lambda_max) {
    cfg_.validate();
    net_.init_uniform(cfg_.seed);
  }

  const TrainConfig& config() const noexcept { return cfg_; }
  const DenseNet& net() const noexcept { return net_; }
  DenseNet& net() noexcept { return net_; }
  const EpisodicMemory& memory() const noexcept { return memory_; }
  const PrivacyLedger& ledger() const noexcept { return ledger_; }
  const TrainStats& stats() const noexcept { return stats_; }
  std::size_t tasks_trained() const noexcept { return ledger_.num_tasks(); }

  double sampling_rate(std::size_t train_size) const {
    if (train_size == 0) throw InputError("empty training split");
    const double p = cfg_.sampling_rate > 0.0
                         ? cfg_.sampling_rate
                         : std::min(1.0, static_cast<double>(cfg_.train_batch_size) / static_cast<double>(train_size));
    if (p * static_cast<double>(train_size) < 1.0) {
      throw ConfigError("sampling rate times training split size must be >= 1");
    }
    return p;
  }

  std::size_t steps_per_task(std::size_t train_size) const {
    const double p = sampling_rate(train_size);
    return cfg_.epochs_per_task * static_cast<std::size_t>(std::ceil(1.0 / p - 1e-12));
  }

  /// Poisson mini-batch for (task, step): each example kept with probability p.
  std::vector<Example> draw_batch(std::size_t task_id, std::size_t step, const Dataset& train) const {
    const double p = sampling_rate(train.size());
    CounterRng rng(stream_key(cfg_.seed, {kTagBatch, task_id, step}));
    std::vector<Example> batch;
    for (const Example& ex : train.examples) {
      if (rng.uniform() < p) batch.push_back(ex);
    }
    return batch;
  }

  /// Reference draw of the noiseless baseline: uniform over the whole memory.
  std::vector<Example> draw_union_reference(std::size_t task_id, std::size_t step) const {
    CounterRng rng(stream_key(cfg_.seed, {kTagRefChoice, task_id, step}));
    return sample_memory_union(memory_, cfg_.ref_batch_size, rng);
  }

  /// Block choice and within-block draw of the single-block sampler.
  RefSample draw_block_reference(std::size_t task_id, std::size_t step) const {
    CounterRng choice(stream_key(cfg_.seed, {kTagRefChoice, task_id, step}));
    const std::size_t block_id = choose_reference_block(memory_, task_id, choice);
    CounterRng within(stream_key(cfg_.seed, {kTagRefBatch, task_id, step, block_id}));
    return RefSample{block_id, sample_block_batch(memory_.block(block_id), cfg_.ref_batch_size, within)};
  }

  std::vector<Example> draw_block_batch(std::size_t task_id, std::size_t step, std::size_t block_id) const {
    CounterRng within(stream_key(cfg_.seed, {kTagRefBatch, task_id, step, block_id}));
    return sample_block_batch(memory_.block(block_id), cfg_.ref_batch_size, within);
  }

  /// Trains the next task with the configured mode, then stores its
  /// reference split as a new memory block.
  void train_next(const Task& task, const StepObserver& observer = {}) {
    if (cfg_.mode == TrainMode::kDpAgem) {
      train_task_dp_agem(task, observer);
    } else {
      train_task(task, observer);
    }
  }

  /// Single-block reference sampling (or whole-memory sampling for the
  /// noiseless baseline).
  void train_task(const Task& task, const StepObserver& observer = {}) {
    const std::size_t task_id = begin_task(task);
    const double p = sampling_rate(task.train.size());
    const std::size_t steps = steps_per_task(task.train.size());
    for (std::size_t s = 0; s < steps; ++s) {
      const ParamVector g = training_gradient(task_id, s, task.train, p);
      ParamVector update;
      if (task_id == 1) {
        update = g;
      } else if (cfg_.mode == TrainMode::kAgem) {
        const auto ref = draw_union_reference(task_id, s);
        const ParamVector g_ref = grad(net_, ref);
        ledger_.track_ref_step_all_blocks(task_id, reference_rate(ref.size(), memory_.total_examples()), 0.0);
        update = project(g, g_ref);
      } else {
        const RefSample ref = draw_block_reference(task_id, s);
        const ParamVector g_ref = private_gradient(ref.examples, static_cast<double>(ref.examples.size()),
                                                  {kTagNoiseRef, task_id, s, ref.block_id});
        const double q = reference_rate(ref.examples.size(), memory_.block(ref.block_id).examples.size());
        ledger_.track_ref_step(task_id, ref.block_id, q, task_id - 1, cfg_.noise.sigma);
        update = project(g, g_ref);
      }
      apply(update);
      if (observer) observer(task_id, s + 1);
    }
    end_task(task_id, task);
  }

  /// Naive variant: each step averages privatized reference gradients from
  /// every previous block.
  void train_task_dp_agem(const Task& task, const StepObserver& observer = {}) {
    const std::size_t task_id = begin_task(task);
    const double p = sampling_rate(task.train.size());
    const std::size_t steps = steps_per_task(task.train.size());
    for (std::size_t s = 0; s < steps; ++s) {
      const ParamVector g = training_gradient(task_id, s, task.train, p);
      ParamVector update;
      if (task_id == 1) {
        update = g;
      } else {
        ParamVector g_ref(net_.num_params());
        double q = 1.0;
        for (std::size_t b = 1; b < task_id; ++b) {
          const auto batch = draw_block_batch(task_id, s, b);
          g_ref += private_gradient(batch, static_cast<double>(batch.size()), {kTagNoiseRef, task_id, s, b});
          q = reference_rate(batch.size(), memory_.block(b).examples.size());
        }
        g_ref *= 1.0 / static_cast<double>(task_id - 1);
        ledger_.track_ref_step_all_blocks(task_id, q, cfg_.noise.sigma);
        update = project(g, g_ref);
      }
      apply(update);
      if (observer) observer(task_id, s + 1);
    }
    end_task(task_id, task);
  }

  /// Privatized mean gradient of `batch`.
  ///
  /// kPerExample: (sum_i clip(g_i) + N(0, sigma^2 beta^2 I)) / denominator.
  /// kPerBatch:   clip(mean_i g_i) + N(0, sigma^2 beta^2 I).
  /// The noiseless mode returns the plain mean gradient (zero for an empty batch).
  ParamVector private_gradient(std::span<const Example> batch, double denominator,
                               std::initializer_list<std::uint64_t> noise_address) const {
    if (!cfg_.is_private()) {
      return batch.empty() ? ParamVector(net_.num_params()) : grad(net_, batch);
    }
    ParamVector out(net_.num_params());
    if (cfg_.clip_granularity == ClipGranularity::kPerExample) {
      ParamVector clipped(net_.num_params());
      for_each_example_gradient(net_, batch, [&](std::size_t, const ParamVector& gi) {
        clipped = gi;
        clip_grad_inplace(clipped, cfg_.noise.clip_bound);
        out += clipped;
      });
      out = add_noise(out, cfg_.noise, noise_address);
      if (denominator > 0.0) out *= 1.0 / denominator;
    } else {
      if (!batch.empty()) out = clip_grad(grad(net_, batch), cfg_.noise.clip_bound);
      out = add_noise(out, cfg_.noise, noise_address);
    }
    if (!out.all_finite()) throw NumericError("non-finite privatized gradient");
    return out;
  }

 private:
  static constexpr std::uint64_t kTagBatch = 0xba7c;
  static constexpr std::uint64_t kTagRefChoice = 0x4ef0;
  static constexpr std::uint64_t kTagRefBatch = 0x4ef1;
  static constexpr std::uint64_t kTagNoiseTrain = 0x2015;
  static constexpr std::uint64_t kTagNoiseRef = 0x2016;

  static std::vector<std::size_t> layer_dims(const TrainConfig& cfg, std::size_t input_dim,
                                             std::size_t num_classes) {
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), cfg.hidden_layers.begin(), cfg.hidden_layers.end());
    dims.push_back(num_classes);
    return dims;
  }

  static double reference_rate(std::size_t drawn, std::size_t pool) {
    return std::min(1.0, static_cast<double>(drawn) / static_cast<double>(pool));
  }

  std::size_t begin_task(const Task& task) {
    if (task.train.feature_dim != net_.input_dim()) throw InputError("task feature dimension mismatch");
    if (task.ref.empty()) throw InputError("task reference split is empty");
    const std::size_t task_id = ledger_.num_tasks() + 1;
    ledger_.begin_task(task_id);
    return task_id;
  }

  void end_task(std::size_t task_id, const Task& task) {
    memory_ = update_eps_mem(std::move(memory_), task.ref.examples, task_id);
  }

  ParamVector training_gradient(std::size_t task_id, std::size_t step, const Dataset& train, double p) {
    const auto batch = draw_batch(task_id, step, train);
    const double expected = p * static_cast<double>(train.size());
    ParamVector g = private_gradient(batch, expected, {kTagNoiseTrain, task_id, step});
    ledger_.track_training_step(task_id, p, cfg_.is_private() ? cfg_.noise.sigma : 0.0);
    return g;
  }

  ParamVector project(const ParamVector& g, const ParamVector& g_ref) {
    ProjectionOutcome outcome;
    ParamVector out = project_gradient(g, g_ref, cfg_.projection, &outcome);
    stats_.projections += outcome.projected ? 1 : 0;
    stats_.degenerate_references += outcome.degenerate_reference ? 1 : 0;
    return out;
  }

  void apply(const ParamVector& update) {
    net_.params().axpy(-cfg_.learning_rate, update);
    ++stats_.steps;
    if (!net_.params().all_finite()) throw NumericError("parameters diverged to non-finite values");
  }

  TrainConfig cfg_;
  DenseNet net_;
  EpisodicMemory memory_;
  PrivacyLedger ledger_;
  TrainStats stats_;
};

struct RunResult {
  AccuracyMatrix accuracy;
  LearningCurve curve;
  BudgetReport budget;
  TrainStats stats;
  std::vector<std::size_t> train_steps;  // per task
  std::vector<std::size_t> ref_steps;    // per task
};

/// Trains every task of the stream in order. After each task k it fills
/// a(k, j) for j <= k; during the first `lca_batches` steps of each task it
/// records that task's test accuracy for the learning curve.
inline RunResult run_stream(const TaskStream& stream, const TrainConfig& cfg) {
  if (stream.tasks.empty()) throw InputError("task stream is empty");
  const Task& first = stream.tasks.front();
  Trainer trainer(cfg, first.train.feature_dim, first.train.num_classes);

  RunResult result;
  result.accuracy = AccuracyMatrix(stream.num_tasks());
  for (std::size_t k = 1; k <= stream.num_tasks(); ++k) {
    const Task& task = stream.tasks[k - 1];
    std::vector<double> z{accuracy(trainer.net(), task.test.examples)};
    trainer.train_next(task, [&](std::size_t, std::size_t batches) {
      if (batches <= cfg.lca_batches) z.push_back(accuracy(trainer.net(), task.test.examples));
    });
    result.curve.curves.push_back(std::move(z));
    for (std::size_t j = 1; j <= k; ++j) {
      result.accuracy.set(k, j, accuracy(trainer.net(), stream.tasks[j - 1].test.examples));
    }
  }
  const std::size_t T = stream.num_tasks();
  result.budget = trainer.ledger().report(cfg.effective_policy(), T);
  result.stats = trainer.stats();
  for (std::size_t k = 1; k <= T; ++k) {
    result.train_steps.push_back(trainer.ledger().train_steps(k));
    result.ref_steps.push_back(trainer.ledger().ref_steps(k));
  }
  return result;
}

}  // namespace dpcl
