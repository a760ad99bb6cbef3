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
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dpcl/error.hpp"

namespace dpcl {

inline constexpr int kDefaultLambdaMax = 64;

/// Log moment of one invocation of the subsampled Gaussian mechanism with
/// sampling rate q and noise multiplier sigma, at integer order lambda:
///
///   alpha(lambda) = log E_{z~mu}[(mu(z)/mu0(z))^lambda]
///                 = log E_{z~mu0}[(mu(z)/mu0(z))^(lambda+1)]
///
/// where mu0 = N(0, sigma^2) and mu = (1-q) N(0, sigma^2) + q N(1, sigma^2).
/// Expanding (1 - q + q e^{(2z-1)/(2 sigma^2)})^(lambda+1) binomially and using
/// E_{mu0}[e^{k(2z-1)/(2 sigma^2)}] = e^{(k^2-k)/(2 sigma^2)} gives a finite
/// sum, evaluated here in log space.
inline double step_log_moment(double q, double sigma, int lambda) {
  if (!(q > 0.0 && q <= 1.0)) throw ConfigError("sampling rate must lie in (0, 1]");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be > 0");
  if (lambda < 1) throw ConfigError("moment order must be >= 1");
  const int n = lambda + 1;
  const double log_q = std::log(q);
  const double log_1mq = q < 1.0 ? std::log1p(-q) : -std::numeric_limits<double>::infinity();
  const double inv_2s2 = 1.0 / (2.0 * sigma * sigma);
  const double log_n_fact = std::lgamma(n + 1.0);

  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) {
    if (q == 1.0 && k < n) continue;
    const double log_binom = log_n_fact - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    const double kd = k;
    const double tail = k < n ? (n - k) * log_1mq : 0.0;  // 0 * log(0) when q == 1
    const double t = log_binom + kd * log_q + tail + (kd * kd - kd) * inv_2s2;
    terms.push_back(t);
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return std::max(0.0, m + std::log(s));
}

/// Cumulative log moments alpha(1..lambda_max) of a sequence of mechanism
/// invocations. A step with sigma == 0 carries no privacy guarantee; the state
/// then becomes unbounded and composes to infinity.
class MomentState {
 public:
  explicit MomentState(int lambda_max = kDefaultLambdaMax) {
    if (lambda_max < 1) throw ConfigError("lambda_max must be >= 1");
    log_moments_.assign(static_cast<std::size_t>(lambda_max), 0.0);
  }

  int lambda_max() const noexcept { return static_cast<int>(log_moments_.size()); }
  std::size_t steps() const noexcept { return steps_; }
  bool unbounded() const noexcept { return unbounded_; }

  /// alpha(lambda), lambda in 1..lambda_max.
  double log_moment(int lambda) const { return log_moments_.at(static_cast<std::size_t>(lambda - 1)); }
  std::span<const double> log_moments() const noexcept { return log_moments_; }

  /// Adds precomputed per-step log moments (indexed by lambda - 1).
  void add_step(std::span<const double> step_moments) {
    if (step_moments.size() != log_moments_.size()) throw InputError("moment order count mismatch");
    for (std::size_t i = 0; i < log_moments_.size(); ++i) log_moments_[i] += step_moments[i];
    ++steps_;
  }

  void add_step(double q, double sigma) {
    if (sigma == 0.0) {
      add_unbounded_step();
      return;
    }
    for (int l = 1; l <= lambda_max(); ++l) {
      log_moments_[static_cast<std::size_t>(l - 1)] += step_log_moment(q, sigma, l);
    }
    ++steps_;
  }

  void add_unbounded_step() {
    unbounded_ = true;
    ++steps_;
  }

 private:
  std::vector<double> log_moments_;
  std::size_t steps_ = 0;
  bool unbounded_ = false;
};

/// Tail-bound conversion eps = min_lambda (alpha(lambda) - ln delta) / lambda.
/// Zero steps compose to zero.
inline double compose_epsilon(const MomentState& state, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (state.steps() == 0) return 0.0;
  if (state.unbounded()) return std::numeric_limits<double>::infinity();
  const double log_inv_delta = -std::log(delta);
  double best = std::numeric_limits<double>::infinity();
  for (int l = 1; l <= state.lambda_max(); ++l) {
    best = std::min(best, (state.log_moment(l) + log_inv_delta) / l);
  }
  return std::max(0.0, best);
}

/// eps after `steps` identical invocations.
inline double compose_epsilon(double q, double sigma, std::size_t steps, double delta,
                              int lambda_max = kDefaultLambdaMax) {
  MomentState one(lambda_max);
  if (steps == 0) return compose_epsilon(one, delta);
  one.add_step(q, sigma);
  std::vector<double> total(one.log_moments().begin(), one.log_moments().end());
  for (double& v : total) v *= static_cast<double>(steps);
  MomentState state(lambda_max);
  state.add_step(total);
  return compose_epsilon(state, delta);
}

// ---------------------------------------------------------------------------
// Continual composition.

enum class CompositionPolicy {
  kLemma1,  // every previous block is touched at every task (naive DP-AGEM)
  kLemma2,  // one random block per step (DP-CL)
};

inline std::string to_string(CompositionPolicy p) {
  return p == CompositionPolicy::kLemma1 ? "lemma1" : "lemma2";
}

inline CompositionPolicy parse_policy(const std::string& s) {
  if (s == "lemma1") return CompositionPolicy::kLemma1;
  if (s == "lemma2") return CompositionPolicy::kLemma2;
  throw ConfigError("unknown policy '" + s + "' (expected lemma1|lemma2)");
}

/// How eps'_1 is treated by the Lemma 2 composition.
enum class FirstTaskRef {
  kZero,    // task 1 never computes a reference gradient
  kStrict,  // use eps'_1 as given
};

struct TaskBudget {
  std::size_t task_id = 0;
  double eps_train = 0.0;
  double eps_ref = 0.0;
};

struct BudgetReport {
  CompositionPolicy policy = CompositionPolicy::kLemma2;
  double delta = 0.0;
  std::size_t num_tasks = 0;
  std::vector<TaskBudget> budgets;  // sorted by task id, 1..T
  std::vector<double> per_task;     // eps_i(T)
  double total = 0.0;               // eps_T^all
};

namespace detail {

inline std::vector<TaskBudget> collect_budgets(std::span<const TaskBudget> budgets, std::size_t T) {
  if (T == 0) throw InputError("budget composition needs T >= 1");
  std::vector<TaskBudget> sorted(T);
  std::vector<bool> seen(T, false);
  for (const TaskBudget& b : budgets) {
    if (b.task_id == 0) throw InputError("task ids are 1-based");
    if (b.task_id > T) continue;
    if (seen[b.task_id - 1]) throw InputError("duplicate budget for task " + std::to_string(b.task_id));
    if (!(b.eps_train >= 0.0) || !(b.eps_ref >= 0.0)) {
      throw InputError("budget for task " + std::to_string(b.task_id) + " is negative");
    }
    seen[b.task_id - 1] = true;
    sorted[b.task_id - 1] = b;
  }
  for (std::size_t i = 0; i < T; ++i) {
    if (!seen[i]) throw InputError("missing budget for task " + std::to_string(i + 1));
  }
  return sorted;
}

inline void finish(BudgetReport& r) {
  r.total = 0.0;
  for (double v : r.per_task) r.total += v;
}

}  // namespace detail

/// eps_i(T) = eps_i + (T - i) eps'_i.
inline BudgetReport budget_lemma1(std::span<const TaskBudget> budgets, std::size_t T,
                                  double delta = 0.0) {
  BudgetReport r;
  r.policy = CompositionPolicy::kLemma1;
  r.delta = delta;
  r.num_tasks = T;
  r.budgets = detail::collect_budgets(budgets, T);
  for (const TaskBudget& b : r.budgets) {
    r.per_task.push_back(b.eps_train + static_cast<double>(T - b.task_id) * b.eps_ref);
  }
  detail::finish(r);
  return r;
}

/// eps_i(T) = eps_i + eps'_i.
inline BudgetReport budget_lemma2(std::span<const TaskBudget> budgets, std::size_t T,
                                  double delta = 0.0,
                                  FirstTaskRef first = FirstTaskRef::kZero) {
  BudgetReport r;
  r.policy = CompositionPolicy::kLemma2;
  r.delta = delta;
  r.num_tasks = T;
  r.budgets = detail::collect_budgets(budgets, T);
  if (first == FirstTaskRef::kZero) r.budgets.front().eps_ref = 0.0;
  for (const TaskBudget& b : r.budgets) r.per_task.push_back(b.eps_train + b.eps_ref);
  detail::finish(r);
  return r;
}

inline BudgetReport compose_budgets(CompositionPolicy policy, std::span<const TaskBudget> budgets,
                                    std::size_t T, double delta = 0.0,
                                    FirstTaskRef first = FirstTaskRef::kZero) {
  return policy == CompositionPolicy::kLemma1 ? budget_lemma1(budgets, T, delta)
                                              : budget_lemma2(budgets, T, delta, first);
}

/// Rows: task_id,eps_train,eps_ref,eps_task_at_T,total
inline void write_budget_csv(std::ostream& os, const BudgetReport& r) {
  os << "task_id,eps_train,eps_ref,eps_task_at_T,total\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < r.budgets.size(); ++i) {
    os << r.budgets[i].task_id << ',' << r.budgets[i].eps_train << ',' << r.budgets[i].eps_ref << ','
       << r.per_task[i] << ',' << r.total << '\n';
  }
}

/// Inverse of write_budget_csv (policy and delta are not part of the rows).
inline BudgetReport read_budget_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "task_id,eps_train,eps_ref,eps_task_at_T,total") {
    throw InputError("budget csv: unexpected header");
  }
  BudgetReport r;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f[5];
    for (auto& s : f) {
      if (!std::getline(ss, s, ',')) throw InputError("budget csv: short row '" + line + "'");
    }
    TaskBudget b{std::stoull(f[0]), std::stod(f[1]), std::stod(f[2])};
    r.budgets.push_back(b);
    r.per_task.push_back(std::stod(f[3]));
    r.total = std::stod(f[4]);
  }
  r.num_tasks = r.budgets.size();
  return r;
}

// ---------------------------------------------------------------------------
// Ledger

/// Per-task and per-block moment tracking for one training run.
///
/// Three views are kept:
///  * train(i): steps on task i's training split;
///  * ref(i): reference-gradient steps taken while training task i, at the
///    rate each memory example is actually exposed to (for DP-CL this is the
///    within-block rate divided by the number of candidate blocks);
///  * block(t, b): realized charges to block b while training task t.
class PrivacyLedger {
 public:
  explicit PrivacyLedger(double delta = 1e-4, int lambda_max = kDefaultLambdaMax)
      : delta_(delta), lambda_max_(lambda_max) {
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (lambda_max < 1) throw ConfigError("lambda_max must be >= 1");
  }

  double delta() const noexcept { return delta_; }
  int lambda_max() const noexcept { return lambda_max_; }
  std::size_t num_tasks() const noexcept { return train_.size(); }

  /// Opens the ledger entry for the next task; ids must be consecutive from 1.
  void begin_task(std::size_t task_id) {
    if (task_id != train_.size() + 1) {
      throw StateError("ledger expected task " + std::to_string(train_.size() + 1) + ", got " +
                       std::to_string(task_id));
    }
    train_.emplace_back(lambda_max_);
    ref_.emplace_back(lambda_max_);
    ref_steps_.push_back(0);
  }

  void track_training_step(std::size_t task_id, double q_train, double sigma) {
    add(train_.at(index(task_id)), q_train, sigma);
  }

  /// One DP-CL reference step: a single block chosen among
  /// `candidate_blocks`, examples drawn from it at rate q_within.
  void track_ref_step(std::size_t task_id, std::size_t block_id, double q_within,
                      std::size_t candidate_blocks, double sigma) {
    check_block(task_id, block_id);
    if (candidate_blocks == 0) throw ConfigError("candidate block count must be positive");
    add(ref_.at(index(task_id)), q_within / static_cast<double>(candidate_blocks), sigma);
    ++ref_steps_[index(task_id)];
    add(block_state(task_id, block_id), q_within, sigma);
  }

  /// One naive-variant reference step: every previous block sampled at q.
  void track_ref_step_all_blocks(std::size_t task_id, double q, double sigma) {
    const std::size_t i = index(task_id);
    if (task_id < 2) throw StateError("task 1 has no reference blocks");
    add(ref_.at(i), q, sigma);
    ++ref_steps_[i];
    for (std::size_t b = 1; b < task_id; ++b) add(block_state(task_id, b), q, sigma);
  }

  const MomentState& train_state(std::size_t task_id) const { return train_.at(index(task_id)); }
  const MomentState& ref_state(std::size_t task_id) const { return ref_.at(index(task_id)); }

  std::size_t train_steps(std::size_t task_id) const { return train_state(task_id).steps(); }
  std::size_t ref_steps(std::size_t task_id) const { return ref_steps_.at(index(task_id)); }

  /// Number of reference charges block b received over the whole run.
  std::size_t block_charges(std::size_t block_id) const {
    std::size_t n = 0;
    for (const auto& [key, state] : blocks_) {
      if (key.second == block_id) n += state.steps();
    }
    return n;
  }

  std::size_t block_charges(std::size_t task_id, std::size_t block_id) const {
    auto it = blocks_.find({task_id, block_id});
    return it == blocks_.end() ? 0 : it->second.steps();
  }

  double eps_train(std::size_t task_id) const { return compose_epsilon(train_state(task_id), delta_); }

  /// eps'_i as charged to task i in the Lemma 2 sense.
  double eps_ref(std::size_t task_id) const { return compose_epsilon(ref_state(task_id), delta_); }

  /// Budget spent on block b during task t (realized selections).
  double eps_block(std::size_t task_id, std::size_t block_id) const {
    auto it = blocks_.find({task_id, block_id});
    return it == blocks_.end() ? 0.0 : compose_epsilon(it->second, delta_);
  }

  /// Budget spent on block b over the whole run, composed through moments.
  double eps_block_total(std::size_t block_id) const {
    MomentState total(lambda_max_);
    bool any = false;
    for (const auto& [key, state] : blocks_) {
      if (key.second != block_id || state.steps() == 0) continue;
      any = true;
      if (state.unbounded()) return std::numeric_limits<double>::infinity();
      std::vector<double> m(state.log_moments().begin(), state.log_moments().end());
      total.add_step(m);
    }
    return any ? compose_epsilon(total, delta_) : 0.0;
  }

  /// (eps_i, eps'_i) for tasks 1..T under the given policy. For Lemma 1,
  /// eps'_i is the mean per-task spend on block i over tasks i+1..T, so that
  /// (T - i) eps'_i equals the summed per-task spend.
  std::vector<TaskBudget> task_budgets(CompositionPolicy policy, std::size_t T) const {
    if (T > num_tasks()) throw StateError("ledger holds fewer than T tasks");
    std::vector<TaskBudget> out;
    for (std::size_t i = 1; i <= T; ++i) {
      TaskBudget b{i, eps_train(i), 0.0};
      if (policy == CompositionPolicy::kLemma2) {
        b.eps_ref = eps_ref(i);
      } else if (T > i) {
        double sum = 0.0;
        for (std::size_t t = i + 1; t <= T; ++t) sum += eps_block(t, i);
        b.eps_ref = sum / static_cast<double>(T - i);
      }
      out.push_back(b);
    }
    return out;
  }

  BudgetReport report(CompositionPolicy policy, std::size_t T,
                      FirstTaskRef first = FirstTaskRef::kZero) const {
    const auto budgets = task_budgets(policy, T);
    return compose_budgets(policy, budgets, T, delta_, first);
  }

 private:
  std::size_t index(std::size_t task_id) const {
    if (task_id == 0 || task_id > train_.size()) {
      throw StateError("unknown task id " + std::to_string(task_id));
    }
    return task_id - 1;
  }

  void check_block(std::size_t task_id, std::size_t block_id) const {
    index(task_id);
    if (block_id == 0 || block_id >= task_id) {
      throw StateError("block " + std::to_string(block_id) + " is not available at task " +
                       std::to_string(task_id));
    }
  }

  MomentState& block_state(std::size_t task_id, std::size_t block_id) {
    auto it = blocks_.find({task_id, block_id});
    if (it == blocks_.end()) it = blocks_.emplace(std::pair{task_id, block_id}, MomentState(lambda_max_)).first;
    return it->second;
  }

  void add(MomentState& state, double q, double sigma) {
    if (sigma == 0.0) {
      state.add_unbounded_step();
      return;
    }
    const auto key = std::pair{q, sigma};
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      std::vector<double> m(static_cast<std::size_t>(lambda_max_));
      for (int l = 1; l <= lambda_max_; ++l) m[static_cast<std::size_t>(l - 1)] = step_log_moment(q, sigma, l);
      it = cache_.emplace(key, std::move(m)).first;
    }
    state.add_step(it->second);
  }

  double delta_;
  int lambda_max_;
  std::vector<MomentState> train_;
  std::vector<MomentState> ref_;
  std::vector<std::size_t> ref_steps_;
  std::map<std::pair<std::size_t, std::size_t>, MomentState> blocks_;
  std::map<std::pair<double, double>, std::vector<double>> cache_;
};

}  // namespace dpcl
