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
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include "dpcl/error.hpp"
#include "dpcl/memory.hpp"
#include "dpcl/nn.hpp"
#include "dpcl/rng.hpp"

namespace dpcl {

struct Dataset {
  std::vector<Example> examples;
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;

  std::size_t size() const noexcept { return examples.size(); }
  bool empty() const noexcept { return examples.empty(); }
};

// ---------------------------------------------------------------------------
// Binary image/label archives: big-endian u32 header fields followed by raw
// unsigned bytes. Images: magic 0x00000803, count, rows, cols. Labels: magic
// 0x00000801, count.

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                               const std::string& what) {
  if (offset + 4 > buf.size()) throw ParseError(what + ": truncated header", offset);
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

inline void write_be32(std::ofstream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), 4);
}

}  // namespace detail

/// Loads an image archive and its label archive. Pixels are scaled to [0, 1].
/// num_classes == 0 infers it as max label + 1.
inline Dataset load_idx_archive(const std::string& images_path, const std::string& labels_path,
                                std::size_t num_classes = 0) {
  const auto img = detail::read_file(images_path);
  const auto lab = detail::read_file(labels_path);

  const std::uint32_t img_magic = detail::read_be32(img, 0, images_path);
  if (img_magic != kIdxImageMagic) {
    throw ParseError(images_path + ": bad image magic " + std::to_string(img_magic), 0);
  }
  const std::uint32_t lab_magic = detail::read_be32(lab, 0, labels_path);
  if (lab_magic != kIdxLabelMagic) {
    throw ParseError(labels_path + ": bad label magic " + std::to_string(lab_magic), 0);
  }
  const std::size_t n_img = detail::read_be32(img, 4, images_path);
  const std::size_t rows = detail::read_be32(img, 8, images_path);
  const std::size_t cols = detail::read_be32(img, 12, images_path);
  const std::size_t n_lab = detail::read_be32(lab, 4, labels_path);
  if (n_img != n_lab) {
    throw ParseError("image count " + std::to_string(n_img) + " != label count " +
                         std::to_string(n_lab),
                     4);
  }
  const std::size_t d = rows * cols;
  if (img.size() < 16 + n_img * d) throw ParseError(images_path + ": truncated pixel data", img.size());
  if (lab.size() < 8 + n_lab) throw ParseError(labels_path + ": truncated label data", lab.size());

  Dataset ds;
  ds.feature_dim = d;
  ds.examples.reserve(n_img);
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n_img; ++i) {
    Example ex;
    ex.x.resize(d);
    const unsigned char* px = img.data() + 16 + i * d;
    for (std::size_t k = 0; k < d; ++k) ex.x[k] = static_cast<double>(px[k]) / 255.0;
    ex.y = lab[8 + i];
    max_label = std::max(max_label, ex.y);
    ds.examples.push_back(std::move(ex));
  }
  ds.num_classes = num_classes != 0 ? num_classes : (n_img == 0 ? 0 : max_label + 1);
  for (std::size_t i = 0; i < n_img; ++i) {
    if (ds.examples[i].y >= ds.num_classes) {
      throw ParseError("label " + std::to_string(ds.examples[i].y) + " out of range", 8 + i);
    }
  }
  return ds;
}

/// Writes `images` (each rows*cols bytes) and `labels` as an archive pair.
inline void write_idx_archive(const std::string& images_path, const std::string& labels_path,
                              const std::vector<std::vector<std::uint8_t>>& images,
                              const std::vector<std::uint8_t>& labels, std::uint32_t rows,
                              std::uint32_t cols) {
  if (images.size() != labels.size()) throw InputError("image/label count mismatch");
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw InputError("cannot write archive");
  detail::write_be32(img, kIdxImageMagic);
  detail::write_be32(img, static_cast<std::uint32_t>(images.size()));
  detail::write_be32(img, rows);
  detail::write_be32(img, cols);
  for (const auto& im : images) {
    if (im.size() != std::size_t{rows} * cols) throw InputError("image has wrong pixel count");
    img.write(reinterpret_cast<const char*>(im.data()), static_cast<std::streamsize>(im.size()));
  }
  detail::write_be32(lab, kIdxLabelMagic);
  detail::write_be32(lab, static_cast<std::uint32_t>(labels.size()));
  lab.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

// ---------------------------------------------------------------------------
// Permuted task streams

using Permutation = std::vector<std::size_t>;

inline Permutation identity_permutation(std::size_t d) {
  Permutation p(d);
  std::iota(p.begin(), p.end(), std::size_t{0});
  return p;
}

inline Permutation random_permutation(std::size_t d, CounterRng& rng) {
  Permutation p = identity_permutation(d);
  for (std::size_t i = d; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

inline Permutation invert(const Permutation& p) {
  Permutation inv(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) inv[p[i]] = i;
  return inv;
}

inline bool is_permutation_of_iota(const Permutation& p) {
  std::vector<bool> seen(p.size(), false);
  for (std::size_t v : p) {
    if (v >= p.size() || seen[v]) return false;
    seen[v] = true;
  }
  return true;
}

/// out[i] = x[perm[i]]
inline std::vector<double> apply_permutation(const std::vector<double>& x, const Permutation& perm) {
  if (x.size() != perm.size()) throw InputError("permutation length does not match features");
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out[i] = x[perm[i]];
  return out;
}

inline Dataset permute_dataset(const Dataset& ds, const Permutation& perm) {
  Dataset out{{}, ds.num_classes, ds.feature_dim};
  out.examples.reserve(ds.size());
  for (const Example& ex : ds.examples) out.examples.push_back({apply_permutation(ex.x, perm), ex.y});
  return out;
}

struct Task {
  Dataset train;
  Dataset ref;
  Dataset test;
  Permutation permutation;
};

struct TaskStream {
  std::vector<Task> tasks;

  std::size_t num_tasks() const noexcept { return tasks.size(); }
};

struct StreamOptions {
  double ref_fraction = 0.1;
  /// false: every task reuses the identity permutation.
  bool permute = true;
};

/// Builds N tasks from a base train/test pair. Task 1 keeps the identity
/// permutation; later tasks draw independent seeded permutations. Each task's
/// training pool is shuffled and split into disjoint train and reference parts.
inline TaskStream make_permuted_stream(const Dataset& base_train, const Dataset& base_test,
                                       std::size_t N, std::uint64_t seed,
                                       StreamOptions opts = {}) {
  if (N == 0) throw ConfigError("task count must be >= 1");
  if (!(opts.ref_fraction > 0.0 && opts.ref_fraction < 1.0)) {
    throw ConfigError("ref_fraction must lie in (0, 1)");
  }
  if (base_train.size() < 2) throw InputError("need at least two training examples per task");
  const std::size_t d = base_train.feature_dim;
  const std::size_t n = base_train.size();
  auto n_ref = static_cast<std::size_t>(std::llround(opts.ref_fraction * static_cast<double>(n)));
  n_ref = std::clamp<std::size_t>(n_ref, 1, n - 1);

  TaskStream stream;
  for (std::size_t t = 1; t <= N; ++t) {
    CounterRng perm_rng(stream_key(seed, {0x9e2, t}));
    Permutation perm = (t == 1 || !opts.permute) ? identity_permutation(d) : random_permutation(d, perm_rng);

    CounterRng split_rng(stream_key(seed, {0x5b1, t}));
    Permutation order = random_permutation(n, split_rng);
    Task task;
    task.permutation = perm;
    task.train = Dataset{{}, base_train.num_classes, d};
    task.ref = Dataset{{}, base_train.num_classes, d};
    for (std::size_t k = 0; k < n; ++k) {
      const Example& ex = base_train.examples[order[k]];
      Dataset& dst = k < n_ref ? task.ref : task.train;
      dst.examples.push_back({apply_permutation(ex.x, perm), ex.y});
    }
    task.test = permute_dataset(base_test, perm);
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

/// Isotropic Gaussian class blobs in [0, 1]^d.
///
/// Class centres are seeded sparse 0/1 patterns; the blob standard deviation
/// is (minimum centre distance) / margin. Samples are clamped to [0, 1].
/// `seed` fixes the centres; `sample_stream` selects an independent draw of
/// samples around them, so train and test sets can share centres.
inline Dataset make_synthetic(std::size_t d, std::size_t C, std::size_t n_per_class, double margin,
                              std::uint64_t seed, std::uint64_t sample_stream = 0) {
  if (!(margin > 0.0)) throw ConfigError("margin must be > 0");
  if (d == 0 || C == 0) throw ConfigError("synthetic data needs d >= 1 and C >= 1");

  // Each class mean is 1 on a sparse support of d/4 coordinates and 0
  // elsewhere, like a stroke image on a blank background. Supports are
  // redrawn a few times to keep the classes apart.
  const std::size_t active = std::max<std::size_t>(1, d / 4);
  CounterRng code_rng(stream_key(seed, {0xc0de}));
  std::vector<std::vector<double>> means;
  std::size_t min_hamming = 0;
  for (int attempt = 0; attempt < 64; ++attempt) {
    std::vector<std::vector<double>> cand(C, std::vector<double>(d, 0.0));
    for (auto& m : cand) {
      for (std::size_t k : sample_without_replacement(d, active, code_rng)) m[k] = 1.0;
    }
    std::size_t h_min = d;
    for (std::size_t a = 0; a < C; ++a) {
      for (std::size_t b = a + 1; b < C; ++b) {
        std::size_t h = 0;
        for (std::size_t k = 0; k < d; ++k) h += cand[a][k] != cand[b][k] ? 1 : 0;
        h_min = std::min(h_min, h);
      }
    }
    if (means.empty() || h_min > min_hamming) {
      means = std::move(cand);
      min_hamming = h_min;
    }
    if (min_hamming >= active) break;
  }

  const double min_dist = C > 1 ? std::sqrt(static_cast<double>(std::max<std::size_t>(min_hamming, 1))) : 1.0;
  const double blob_std = min_dist / margin;

  Dataset ds{{}, C, d};
  ds.examples.reserve(C * n_per_class);
  CounterRng rng(stream_key(seed, {0x5a3, sample_stream}));
  for (std::size_t i = 0; i < n_per_class; ++i) {
    for (std::size_t c = 0; c < C; ++c) {
      Example ex;
      ex.y = c;
      ex.x.resize(d);
      for (std::size_t k = 0; k < d; ++k) {
        ex.x[k] = std::clamp(means[c][k] + blob_std * rng.gaussian(), 0.0, 1.0);
      }
      ds.examples.push_back(std::move(ex));
    }
  }
  return ds;
}

}  // namespace dpcl
