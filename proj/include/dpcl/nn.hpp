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
#include <span>
#include <string>
#include <vector>

#include "dpcl/error.hpp"
#include "dpcl/param_vector.hpp"
#include "dpcl/rng.hpp"

namespace dpcl {

/// One labeled sample: a feature vector and a class index.
struct Example {
  std::vector<double> x;
  std::size_t y = 0;

  friend bool operator==(const Example&, const Example&) = default;
};

enum class Activation { kRelu, kTanh };

inline std::string to_string(Activation a) { return a == Activation::kRelu ? "relu" : "tanh"; }

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + s + "' (expected relu|tanh)");
}

inline double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

inline std::vector<double> softmax(std::span<const double> z) {
  const double lse = log_sum_exp(z);
  std::vector<double> p(z.size());
  for (std::size_t c = 0; c < z.size(); ++c) p[c] = std::exp(z[c] - lse);
  return p;
}

/// Fully connected feed-forward classifier with a softmax output layer.
///
/// All weights and biases live in a single flat ParamVector. Layer l occupies
/// a contiguous range holding its weight matrix (row-major, one row per output
/// unit) followed by its bias vector. Gradients use the same layout.
class DenseNet {
 public:
  /// dims = {input, hidden..., classes}; at least two entries, all positive.
  explicit DenseNet(std::vector<std::size_t> dims, Activation activation = Activation::kRelu)
      : dims_(std::move(dims)), activation_(activation) {
    if (dims_.size() < 2) throw ConfigError("DenseNet needs at least input and output dims");
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      if (dims_[l] == 0 || dims_[l + 1] == 0) throw ConfigError("DenseNet dims must be positive");
      weight_offsets_.push_back(offset);
      offset += dims_[l] * dims_[l + 1];
      bias_offsets_.push_back(offset);
      offset += dims_[l + 1];
    }
    params_ = ParamVector(offset, 0.0);
  }

  /// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
  void init_uniform(std::uint64_t seed) {
    CounterRng rng(stream_key(seed, {0x1417}));
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(dims_[l]));
      const std::size_t begin = weight_offsets_[l];
      const std::size_t end = bias_offsets_[l] + dims_[l + 1];
      for (std::size_t i = begin; i < end; ++i) params_[i] = (2.0 * rng.uniform() - 1.0) * bound;
    }
  }

  const std::vector<std::size_t>& dims() const noexcept { return dims_; }
  std::size_t input_dim() const noexcept { return dims_.front(); }
  std::size_t num_classes() const noexcept { return dims_.back(); }
  std::size_t num_layers() const noexcept { return dims_.size() - 1; }
  std::size_t num_params() const noexcept { return params_.size(); }
  Activation activation() const noexcept { return activation_; }

  ParamVector& params() noexcept { return params_; }
  const ParamVector& params() const noexcept { return params_; }

  std::size_t weight_offset(std::size_t layer) const { return weight_offsets_.at(layer); }
  std::size_t bias_offset(std::size_t layer) const { return bias_offsets_.at(layer); }

  /// Output-layer scores before the softmax.
  std::vector<double> logits(std::span<const double> x) const {
    check_input(x);
    std::vector<double> a(x.begin(), x.end());
    for (std::size_t l = 0; l < num_layers(); ++l) {
      a = affine(l, a);
      if (l + 1 < num_layers()) activate(a);
    }
    return a;
  }

  /// Class probabilities.
  std::vector<double> forward(std::span<const double> x) const { return softmax(logits(x)); }

  std::size_t predict(std::span<const double> x) const {
    const auto z = logits(x);
    // First maximum wins ties.
    return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
  }

  /// Cross-entropy loss of a single example and its parameter gradient,
  /// written into `grad` (resized to num_params(), previous content replaced).
  double example_gradient(const Example& ex, ParamVector& grad) const {
    check_example(ex);
    if (grad.size() != num_params()) grad = ParamVector(num_params());

    // Forward, keeping every layer's (post-activation) output.
    std::vector<std::vector<double>> acts;
    acts.reserve(num_layers() + 1);
    acts.emplace_back(ex.x);
    for (std::size_t l = 0; l < num_layers(); ++l) {
      auto z = affine(l, acts.back());
      if (l + 1 < num_layers()) activate(z);
      acts.push_back(std::move(z));
    }
    const std::vector<double>& out = acts.back();
    const double lse = log_sum_exp(out);
    const double loss = lse - out[ex.y];

    // delta = dL/dz for the current layer's pre-activation.
    std::vector<double> delta(out.size());
    for (std::size_t c = 0; c < out.size(); ++c) delta[c] = std::exp(out[c] - lse);
    delta[ex.y] -= 1.0;

    for (std::size_t l = num_layers(); l-- > 0;) {
      const std::size_t in = dims_[l];
      const std::size_t outn = dims_[l + 1];
      const std::vector<double>& a_in = acts[l];
      double* gw = grad.values().data() + weight_offsets_[l];
      double* gb = grad.values().data() + bias_offsets_[l];
      for (std::size_t o = 0; o < outn; ++o) {
        const double d = delta[o];
        double* row = gw + o * in;
        for (std::size_t i = 0; i < in; ++i) row[i] = d * a_in[i];
        gb[o] = d;
      }
      if (l == 0) break;
      const double* w = params_.values().data() + weight_offsets_[l];
      std::vector<double> prev(in, 0.0);
      for (std::size_t o = 0; o < outn; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* row = w + o * in;
        for (std::size_t i = 0; i < in; ++i) prev[i] += d * row[i];
      }
      for (std::size_t i = 0; i < in; ++i) prev[i] *= activation_derivative(a_in[i]);
      delta = std::move(prev);
    }
    return loss;
  }

 private:
  void check_input(std::span<const double> x) const {
    if (x.size() != input_dim()) {
      throw InputError("input has " + std::to_string(x.size()) + " features, network expects " +
                       std::to_string(input_dim()));
    }
  }

  void check_example(const Example& ex) const {
    check_input(ex.x);
    if (ex.y >= num_classes()) {
      throw InputError("label " + std::to_string(ex.y) + " outside [0, " +
                       std::to_string(num_classes()) + ")");
    }
  }

  std::vector<double> affine(std::size_t l, std::span<const double> in) const {
    const std::size_t n_in = dims_[l];
    const std::size_t n_out = dims_[l + 1];
    const double* w = params_.values().data() + weight_offsets_[l];
    const double* b = params_.values().data() + bias_offsets_[l];
    std::vector<double> out(n_out);
    for (std::size_t o = 0; o < n_out; ++o) {
      double s = b[o];
      const double* row = w + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) s += row[i] * in[i];
      out[o] = s;
    }
    return out;
  }

  void activate(std::vector<double>& z) const {
    if (activation_ == Activation::kRelu) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    } else {
      for (double& v : z) v = std::tanh(v);
    }
  }

  // Derivative expressed through the activation's output.
  double activation_derivative(double a) const {
    if (activation_ == Activation::kRelu) return a > 0.0 ? 1.0 : 0.0;
    return 1.0 - a * a;
  }

  std::vector<std::size_t> dims_;
  Activation activation_;
  std::vector<std::size_t> weight_offsets_;
  std::vector<std::size_t> bias_offsets_;
  ParamVector params_;
};

inline std::vector<double> forward(const DenseNet& net, std::span<const double> x) {
  return net.forward(x);
}

/// Mean softmax cross-entropy over a nonempty batch.
inline double loss(const DenseNet& net, std::span<const Example> batch) {
  if (batch.empty()) throw InputError("loss: empty batch");
  double total = 0.0;
  for (const Example& ex : batch) {
    const auto z = net.logits(ex.x);
    if (ex.y >= z.size()) throw InputError("loss: label out of range");
    total += log_sum_exp(z) - z[ex.y];
  }
  return total / static_cast<double>(batch.size());
}

/// Visits the gradient of every example in batch order. The ParamVector passed
/// to `visit` is a scratch buffer reused between calls.
inline void for_each_example_gradient(
    const DenseNet& net, std::span<const Example> batch,
    const std::function<void(std::size_t, const ParamVector&)>& visit) {
  ParamVector scratch(net.num_params());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    net.example_gradient(batch[i], scratch);
    visit(i, scratch);
  }
}

inline std::vector<ParamVector> per_example_grads(const DenseNet& net,
                                                  std::span<const Example> batch) {
  if (batch.empty()) throw InputError("per_example_grads: empty batch");
  std::vector<ParamVector> out;
  out.reserve(batch.size());
  for_each_example_gradient(net, batch, [&](std::size_t, const ParamVector& g) { out.push_back(g); });
  return out;
}

/// Gradient of the mean loss over the batch.
inline ParamVector grad(const DenseNet& net, std::span<const Example> batch) {
  if (batch.empty()) throw InputError("grad: empty batch");
  ParamVector sum(net.num_params());
  for_each_example_gradient(net, batch, [&](std::size_t, const ParamVector& g) { sum += g; });
  sum *= 1.0 / static_cast<double>(batch.size());
  return sum;
}

/// Fraction of examples whose argmax prediction equals the label.
inline double accuracy(const DenseNet& net, std::span<const Example> data) {
  if (data.empty()) throw InputError("accuracy: empty dataset");
  std::size_t correct = 0;
  for (const Example& ex : data) correct += net.predict(ex.x) == ex.y ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace dpcl
