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
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dpcl/error.hpp"

namespace dpcl {

/// a(k, j): test accuracy on task j after training through task k, 1 <= j <= k.
class AccuracyMatrix {
 public:
  explicit AccuracyMatrix(std::size_t num_tasks = 0)
      : n_(num_tasks), cells_(num_tasks * num_tasks, kUnset) {}

  std::size_t num_tasks() const noexcept { return n_; }

  void set(std::size_t k, std::size_t j, double acc) {
    check(k, j);
    if (!(acc >= 0.0 && acc <= 1.0)) throw InputError("accuracy must lie in [0, 1]");
    cells_[(k - 1) * n_ + (j - 1)] = acc;
  }

  bool has(std::size_t k, std::size_t j) const {
    check(k, j);
    return !std::isnan(cells_[(k - 1) * n_ + (j - 1)]);
  }

  double at(std::size_t k, std::size_t j) const {
    if (!has(k, j)) {
      throw InputError("accuracy for task " + std::to_string(j) + " after task " + std::to_string(k) +
                       " is not populated");
    }
    return cells_[(k - 1) * n_ + (j - 1)];
  }

  bool row_complete(std::size_t k) const {
    if (k == 0 || k > n_) return false;
    for (std::size_t j = 1; j <= k; ++j) {
      if (!has(k, j)) return false;
    }
    return true;
  }

  friend bool operator==(const AccuracyMatrix& a, const AccuracyMatrix& b) {
    if (a.n_ != b.n_) return false;
    for (std::size_t i = 0; i < a.cells_.size(); ++i) {
      const bool na = std::isnan(a.cells_[i]);
      const bool nb = std::isnan(b.cells_[i]);
      if (na != nb || (!na && a.cells_[i] != b.cells_[i])) return false;
    }
    return true;
  }

 private:
  static constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

  void check(std::size_t k, std::size_t j) const {
    if (k == 0 || j == 0 || k > n_ || j > k) {
      throw InputError("accuracy index (" + std::to_string(k) + ", " + std::to_string(j) +
                       ") outside the lower triangle of a " + std::to_string(n_) + "-task matrix");
    }
  }

  std::size_t n_;
  std::vector<double> cells_;
};

/// Per-task b-shot accuracy: curves[k-1][b] is task k's test accuracy after b
/// mini-batches of task k (b = 0 is before the first update).
struct LearningCurve {
  std::vector<std::vector<double>> curves;

  /// Z_b averaged over tasks 1..T.
  std::vector<double> averaged(std::size_t T) const {
    if (T == 0 || T > curves.size()) throw InputError("learning curve does not cover T tasks");
    std::size_t len = curves[0].size();
    for (std::size_t k = 0; k < T; ++k) len = std::min(len, curves[k].size());
    std::vector<double> z(len, 0.0);
    for (std::size_t k = 0; k < T; ++k) {
      for (std::size_t b = 0; b < len; ++b) z[b] += curves[k][b];
    }
    for (double& v : z) v /= static_cast<double>(T);
    return z;
  }
};

/// Mean of row T.
inline double average_accuracy(const AccuracyMatrix& m, std::size_t T) {
  if (!m.row_complete(T)) throw InputError("accuracy row " + std::to_string(T) + " is not populated");
  double s = 0.0;
  for (std::size_t j = 1; j <= T; ++j) s += m.at(T, j);
  return s / static_cast<double>(T);
}

struct Forgetting {
  double mean = 0.0;
  double worst = 0.0;
};

/// f_j = max_{l<T} a(l, j) - a(T, j) over j < T; returns mean and max.
inline Forgetting forgetting(const AccuracyMatrix& m, std::size_t T) {
  if (T < 2) throw InputError("forgetting needs at least two tasks");
  if (!m.row_complete(T)) throw InputError("accuracy row " + std::to_string(T) + " is not populated");
  Forgetting out{0.0, -std::numeric_limits<double>::infinity()};
  for (std::size_t j = 1; j < T; ++j) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t l = j; l < T; ++l) best = std::max(best, m.at(l, j));
    const double f = best - m.at(T, j);
    out.mean += f;
    out.worst = std::max(out.worst, f);
  }
  out.mean /= static_cast<double>(T - 1);
  return out;
}

/// Mean of Z_0..Z_beta.
inline double lca(std::span<const double> z, std::size_t beta) {
  if (z.size() < beta + 1) {
    throw InputError("learning curve has " + std::to_string(z.size()) + " points, LCA needs " +
                     std::to_string(beta + 1));
  }
  double s = 0.0;
  for (std::size_t b = 0; b <= beta; ++b) s += z[b];
  return s / static_cast<double>(beta + 1);
}

inline double lca(const LearningCurve& curve, std::size_t T, std::size_t beta) {
  return lca(curve.averaged(T), beta);
}

// ---------------------------------------------------------------------------
// CSV

/// Header "after_task,task_1,...,task_N"; cells above the diagonal are empty.
inline void write_accuracy_csv(std::ostream& os, const AccuracyMatrix& m) {
  os << "after_task";
  for (std::size_t j = 1; j <= m.num_tasks(); ++j) os << ",task_" << j;
  os << '\n' << std::setprecision(17);
  for (std::size_t k = 1; k <= m.num_tasks(); ++k) {
    os << k;
    for (std::size_t j = 1; j <= m.num_tasks(); ++j) {
      os << ',';
      if (j <= k && m.has(k, j)) os << m.at(k, j);
    }
    os << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

inline AccuracyMatrix read_accuracy_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw InputError("accuracy csv: missing header");
  const auto header = detail::split_csv(line);
  if (header.empty() || header[0] != "after_task") throw InputError("accuracy csv: bad header");
  const std::size_t n = header.size() - 1;
  AccuracyMatrix m(n);
  std::size_t k = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != n + 1) throw InputError("accuracy csv: row has wrong field count");
    k = std::stoull(f[0]);
    for (std::size_t j = 1; j <= n; ++j) {
      if (f[j].empty()) continue;
      m.set(k, j, std::stod(f[j]));
    }
  }
  return m;
}

struct MetricsRow {
  std::size_t tasks_seen = 0;
  double average_accuracy = 0.0;
  std::optional<double> forgetting;
  std::optional<double> worst_forgetting;
  std::optional<double> lca;
};

/// One row per prefix length T; metrics undefined at T are left empty.
inline std::vector<MetricsRow> summarize(const AccuracyMatrix& m, const LearningCurve* curve,
                                         std::size_t beta) {
  std::vector<MetricsRow> rows;
  for (std::size_t T = 1; T <= m.num_tasks(); ++T) {
    if (!m.row_complete(T)) break;
    MetricsRow r;
    r.tasks_seen = T;
    r.average_accuracy = average_accuracy(m, T);
    if (T >= 2) {
      const auto f = forgetting(m, T);
      r.forgetting = f.mean;
      r.worst_forgetting = f.worst;
    }
    if (curve != nullptr && curve->curves.size() >= T) {
      const auto z = curve->averaged(T);
      if (z.size() >= beta + 1) r.lca = lca(z, beta);
    }
    rows.push_back(r);
  }
  return rows;
}

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << "tasks_seen,average_accuracy,forgetting,worst_case_forgetting,lca\n" << std::setprecision(17);
  auto opt = [&os](const std::optional<double>& v) {
    os << ',';
    if (v) os << *v;
  };
  for (const auto& r : rows) {
    os << r.tasks_seen << ',' << r.average_accuracy;
    opt(r.forgetting);
    opt(r.worst_forgetting);
    opt(r.lca);
    os << '\n';
  }
}

inline std::vector<MetricsRow> read_metrics_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "tasks_seen,average_accuracy,forgetting,worst_case_forgetting,lca") {
    throw InputError("metrics csv: bad header");
  }
  auto opt = [](const std::string& s) -> std::optional<double> {
    if (s.empty()) return std::nullopt;
    return std::stod(s);
  };
  std::vector<MetricsRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 5) throw InputError("metrics csv: row has wrong field count");
    rows.push_back({std::stoull(f[0]), std::stod(f[1]), opt(f[2]), opt(f[3]), opt(f[4])});
  }
  return rows;
}

}  // namespace dpcl
