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

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dpcl/accountant.hpp"
#include "dpcl/error.hpp"
#include "dpcl/metrics.hpp"
#include "dpcl/rng.hpp"
#include "dpcl/task_data.hpp"
#include "dpcl/trainer.hpp"

namespace dpcl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

enum class DataKind { kSynthetic, kArchive };

struct DataSource {
  DataKind kind = DataKind::kSynthetic;
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  /// 0 keeps every example.
  std::size_t max_train = 0;
  std::size_t max_test = 0;

  std::size_t synthetic_dim = 64;
  std::size_t synthetic_classes = 10;
  std::size_t synthetic_train_per_class = 200;
  std::size_t synthetic_test_per_class = 50;
  double synthetic_margin = 16.0;
};

/// Everything needed to reproduce one experiment.
struct RunSpec {
  TrainConfig train;
  DataSource data;
  std::size_t tasks = 5;
  double ref_fraction = 0.1;
  bool permute = true;
  std::string out_dir = "out";
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const auto n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

inline std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_uint(key, trim(item)));
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "' expects true|false, got '" + v + "'");
}

}  // namespace detail

/// Serializes a run configuration as ordered key/value pairs.
inline KeyValues to_key_values(const RunSpec& s) {
  using detail::fmt_double;
  const TrainConfig& t = s.train;
  KeyValues kv{
      {"mode", to_string(t.mode)},
      {"tasks", std::to_string(s.tasks)},
      {"epochs", std::to_string(t.epochs_per_task)},
      {"batch", std::to_string(t.train_batch_size)},
      {"ref_batch", std::to_string(t.ref_batch_size)},
      {"sampling_rate", fmt_double(t.sampling_rate)},
      {"lr", fmt_double(t.learning_rate)},
      {"sigma", fmt_double(t.noise.sigma)},
      {"clip", fmt_double(t.noise.clip_bound)},
      {"clip_granularity", to_string(t.clip_granularity)},
      {"delta", fmt_double(t.delta)},
      {"lambda_max", std::to_string(t.lambda_max)},
      {"policy", t.policy ? to_string(*t.policy) : "auto"},
      {"projection", to_string(t.projection)},
      {"hidden", detail::join_sizes(t.hidden_layers)},
      {"activation", to_string(t.activation)},
      {"lca_batches", std::to_string(t.lca_batches)},
      {"seed", std::to_string(t.seed)},
      {"ref_fraction", fmt_double(s.ref_fraction)},
      {"permute", s.permute ? "true" : "false"},
      {"out", s.out_dir},
      {"data", s.data.kind == DataKind::kSynthetic ? "synthetic" : "archive"},
  };
  if (s.data.kind == DataKind::kArchive) {
    kv.insert(kv.end(), {{"train_images", s.data.train_images},
                         {"train_labels", s.data.train_labels},
                         {"test_images", s.data.test_images},
                         {"test_labels", s.data.test_labels},
                         {"max_train", std::to_string(s.data.max_train)},
                         {"max_test", std::to_string(s.data.max_test)}});
  } else {
    kv.insert(kv.end(), {{"synthetic_dim", std::to_string(s.data.synthetic_dim)},
                         {"synthetic_classes", std::to_string(s.data.synthetic_classes)},
                         {"synthetic_train_per_class", std::to_string(s.data.synthetic_train_per_class)},
                         {"synthetic_test_per_class", std::to_string(s.data.synthetic_test_per_class)},
                         {"synthetic_margin", fmt_double(s.data.synthetic_margin)}});
  }
  return kv;
}

/// Applies one key to a spec. Unknown keys are configuration errors.
inline void apply_key(RunSpec& s, const std::string& key, const std::string& v) {
  using namespace detail;
  TrainConfig& t = s.train;
  if (key == "mode") t.mode = parse_mode(v);
  else if (key == "tasks") s.tasks = to_uint(key, v);
  else if (key == "epochs") t.epochs_per_task = to_uint(key, v);
  else if (key == "batch") t.train_batch_size = to_uint(key, v);
  else if (key == "ref_batch") t.ref_batch_size = to_uint(key, v);
  else if (key == "sampling_rate") t.sampling_rate = to_double(key, v);
  else if (key == "lr") t.learning_rate = to_double(key, v);
  else if (key == "sigma") t.noise.sigma = to_double(key, v);
  else if (key == "clip") t.noise.clip_bound = to_double(key, v);
  else if (key == "clip_granularity") t.clip_granularity = parse_clip_granularity(v);
  else if (key == "delta") t.delta = to_double(key, v);
  else if (key == "lambda_max") t.lambda_max = static_cast<int>(to_uint(key, v));
  else if (key == "policy") t.policy = v == "auto" ? std::nullopt : std::optional(parse_policy(v));
  else if (key == "projection") t.projection = parse_projection(v);
  else if (key == "hidden") t.hidden_layers = to_sizes(key, v);
  else if (key == "activation") t.activation = parse_activation(v);
  else if (key == "lca_batches") t.lca_batches = to_uint(key, v);
  else if (key == "seed") t.seed = to_uint(key, v);
  else if (key == "ref_fraction") s.ref_fraction = to_double(key, v);
  else if (key == "permute") s.permute = to_bool(key, v);
  else if (key == "out") s.out_dir = v;
  else if (key == "data") {
    if (v == "synthetic") s.data.kind = DataKind::kSynthetic;
    else if (v == "archive") s.data.kind = DataKind::kArchive;
    else throw ConfigError("'data' expects synthetic|archive, got '" + v + "'");
  }
  else if (key == "train_images") s.data.train_images = v;
  else if (key == "train_labels") s.data.train_labels = v;
  else if (key == "test_images") s.data.test_images = v;
  else if (key == "test_labels") s.data.test_labels = v;
  else if (key == "max_train") s.data.max_train = to_uint(key, v);
  else if (key == "max_test") s.data.max_test = to_uint(key, v);
  else if (key == "synthetic_dim") s.data.synthetic_dim = to_uint(key, v);
  else if (key == "synthetic_classes") s.data.synthetic_classes = to_uint(key, v);
  else if (key == "synthetic_train_per_class") s.data.synthetic_train_per_class = to_uint(key, v);
  else if (key == "synthetic_test_per_class") s.data.synthetic_test_per_class = to_uint(key, v);
  else if (key == "synthetic_margin") s.data.synthetic_margin = to_double(key, v);
  else throw ConfigError("unknown configuration key '" + key + "'");
}

/// `key = value` per line; blank lines and lines starting with '#' are skipped.
inline KeyValues parse_key_values(std::istream& is) {
  KeyValues kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    kv.emplace_back(detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
  }
  return kv;
}

inline void write_key_values(std::ostream& os, const KeyValues& kv) {
  for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
}

inline RunSpec spec_from_key_values(const KeyValues& kv, RunSpec base = {}) {
  for (const auto& [k, v] : kv) apply_key(base, k, v);
  return base;
}

inline void validate(const RunSpec& s) {
  s.train.validate();
  if (s.tasks == 0) throw ConfigError("tasks must be >= 1");
  if (!(s.ref_fraction > 0.0 && s.ref_fraction < 1.0)) throw ConfigError("ref_fraction must lie in (0, 1)");
  if (s.out_dir.empty()) throw ConfigError("output directory must be set");
  if (s.data.kind == DataKind::kArchive) {
    if (s.data.train_images.empty() || s.data.train_labels.empty() || s.data.test_images.empty() ||
        s.data.test_labels.empty()) {
      throw ConfigError("archive data needs train/test image and label paths");
    }
  } else {
    if (s.data.synthetic_dim == 0 || s.data.synthetic_classes < 2 || s.data.synthetic_train_per_class == 0 ||
        s.data.synthetic_test_per_class == 0) {
      throw ConfigError("synthetic data needs dim >= 1, classes >= 2 and nonzero sample counts");
    }
    if (!(s.data.synthetic_margin > 0.0)) throw ConfigError("synthetic margin must be > 0");
  }
}

inline TaskStream build_stream(const RunSpec& s) {
  Dataset train, test;
  if (s.data.kind == DataKind::kArchive) {
    train = load_idx_archive(s.data.train_images, s.data.train_labels);
    test = load_idx_archive(s.data.test_images, s.data.test_labels, train.num_classes);
    if (s.data.max_train != 0 && train.size() > s.data.max_train) train.examples.resize(s.data.max_train);
    if (s.data.max_test != 0 && test.size() > s.data.max_test) test.examples.resize(s.data.max_test);
  } else {
    const auto& d = s.data;
    train = make_synthetic(d.synthetic_dim, d.synthetic_classes, d.synthetic_train_per_class, d.synthetic_margin,
                           s.train.seed, 0);
    test = make_synthetic(d.synthetic_dim, d.synthetic_classes, d.synthetic_test_per_class, d.synthetic_margin,
                          s.train.seed, 1);
  }
  return make_permuted_stream(train, test, s.tasks, s.train.seed, StreamOptions{s.ref_fraction, s.permute});
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << content;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace detail

/// Runs one experiment and writes accuracy_matrix.csv, metrics.csv,
/// budget_report.csv, learning_curve.csv and manifest.txt into spec.out_dir.
inline int cmd_run(const RunSpec& spec, std::ostream& log) {
  RunResult result;
  try {
    validate(spec);
    const TaskStream stream = build_stream(spec);
    result = run_stream(stream, spec.train);
  } catch (const NumericError& e) {
    log << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    log << "invalid configuration: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParseError& e) {
    log << "invalid input data: " << e.what() << '\n';
    return kExitConfig;
  } catch (const StateError& e) {
    log << "invalid configuration: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    const std::filesystem::path out(spec.out_dir);
    std::filesystem::create_directories(out);

    std::ostringstream acc;
    write_accuracy_csv(acc, result.accuracy);
    detail::write_file(out / "accuracy_matrix.csv", acc.str());

    std::ostringstream met;
    write_metrics_csv(met, summarize(result.accuracy, &result.curve, spec.train.lca_batches));
    detail::write_file(out / "metrics.csv", met.str());

    std::ostringstream bud;
    write_budget_csv(bud, result.budget);
    detail::write_file(out / "budget_report.csv", bud.str());

    std::ostringstream curve;
    curve << "task,batch,accuracy\n" << std::setprecision(17);
    for (std::size_t k = 0; k < result.curve.curves.size(); ++k) {
      for (std::size_t b = 0; b < result.curve.curves[k].size(); ++b) {
        curve << k + 1 << ',' << b << ',' << result.curve.curves[k][b] << '\n';
      }
    }
    detail::write_file(out / "learning_curve.csv", curve.str());

    KeyValues manifest = to_key_values(spec);
    manifest.emplace_back("policy_effective", to_string(spec.train.effective_policy()));
    manifest.emplace_back("total_steps", std::to_string(result.stats.steps));
    manifest.emplace_back("eps_total", detail::fmt_double(result.budget.total));
    manifest.emplace_back("timestamp", detail::utc_timestamp());
    std::ostringstream man;
    write_key_values(man, manifest);
    detail::write_file(out / "manifest.txt", man.str());
  } catch (const std::exception& e) {
    log << "cannot write outputs: " << e.what() << '\n';
    return kExitConfig;
  }

  const std::size_t T = result.accuracy.num_tasks();
  log << "final average accuracy " << average_accuracy(result.accuracy, T) << ", eps_total "
      << result.budget.total << " (" << to_string(result.budget.policy) << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Budget accumulation curves

struct BudgetCurveRow {
  std::size_t tasks = 0;
  double lemma1_total = 0.0;
  double lemma2_total = 0.0;
};

/// Draws eps_i and eps'_i ~ N(mean, std^2) (clamped at zero) for N tasks and
/// composes the totals for every prefix T = 1..N under both lemmas.
inline std::vector<BudgetCurveRow> budget_curve(double eps_mean, double eps_std, std::size_t N,
                                                std::uint64_t seed) {
  if (N == 0) throw ConfigError("task count must be >= 1");
  if (!(eps_std >= 0.0) || !std::isfinite(eps_mean)) throw ConfigError("invalid budget distribution");
  CounterRng rng(stream_key(seed, {0xb0d9}));
  std::vector<TaskBudget> budgets;
  for (std::size_t i = 1; i <= N; ++i) {
    const double e = std::max(0.0, eps_mean + eps_std * rng.gaussian());
    const double r = std::max(0.0, eps_mean + eps_std * rng.gaussian());
    budgets.push_back({i, e, r});
  }
  std::vector<BudgetCurveRow> rows;
  for (std::size_t T = 1; T <= N; ++T) {
    rows.push_back({T, budget_lemma1(budgets, T).total, budget_lemma2(budgets, T).total});
  }
  return rows;
}

inline void write_budget_curve_csv(std::ostream& os, const std::vector<BudgetCurveRow>& rows) {
  os << "T,lemma1_total,lemma2_total\n" << std::setprecision(17);
  for (const auto& r : rows) os << r.tasks << ',' << r.lemma1_total << ',' << r.lemma2_total << '\n';
}

inline int cmd_budget_curve(double eps_mean, double eps_std, std::size_t N, std::uint64_t seed,
                            std::ostream& out, std::ostream& log) {
  try {
    write_budget_curve_csv(out, budget_curve(eps_mean, eps_std, N, seed));
  } catch (const ConfigError& e) {
    log << "invalid configuration: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

}  // namespace dpcl::cli
