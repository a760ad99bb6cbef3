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
#include <cstdint>
#include <initializer_list>

#include "dpcl/error.hpp"
#include "dpcl/param_vector.hpp"
#include "dpcl/rng.hpp"

namespace dpcl {

/// Gaussian mechanism parameters: noise multiplier, L2 clipping bound and the
/// seed that roots every noise stream.
struct NoiseConfig {
  double sigma = 1.0;
  double clip_bound = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be >= 0");
    if (!(clip_bound > 0.0) || !std::isfinite(clip_bound)) {
      throw ConfigError("clip bound must be > 0");
    }
  }
};

/// Scales g onto the L2 ball of radius beta; g is returned unchanged when it
/// already lies inside.
inline ParamVector clip_grad(const ParamVector& g, double beta) {
  if (!(beta > 0.0)) throw ConfigError("clip_grad: beta must be > 0");
  if (!g.all_finite()) throw NumericError("clip_grad: non-finite gradient");
  const double norm = g.norm();
  if (norm <= beta) return g;
  ParamVector out = g;
  out *= beta / norm;
  // Rounding in the scale can leave the norm a few ulps above beta.
  while (out.norm() > beta) out *= std::nextafter(1.0, 0.0);
  return out;
}

/// In-place variant used on the hot path; returns the pre-clip norm.
inline double clip_grad_inplace(ParamVector& g, double beta) {
  if (!(beta > 0.0)) throw ConfigError("clip_grad: beta must be > 0");
  const double norm = g.norm();
  if (!std::isfinite(norm)) throw NumericError("clip_grad: non-finite gradient");
  if (norm > beta) {
    g *= beta / norm;
    while (g.norm() > beta) g *= std::nextafter(1.0, 0.0);
  }
  return norm;
}

/// Adds i.i.d. N(0, (sigma * beta)^2) noise to every coordinate. The noise is
/// drawn from the stream addressed by (cfg.seed, address...), so the same
/// address always yields the same noise vector.
inline ParamVector add_noise(const ParamVector& g, const NoiseConfig& cfg,
                             std::initializer_list<std::uint64_t> address = {}) {
  cfg.validate();
  if (!g.all_finite()) throw NumericError("add_noise: non-finite input");
  ParamVector out = g;
  const double scale = cfg.sigma * cfg.clip_bound;
  if (scale == 0.0) return out;
  CounterRng rng(stream_key(cfg.seed, address));
  for (double& v : out) v += scale * rng.gaussian();
  return out;
}

}  // namespace dpcl
