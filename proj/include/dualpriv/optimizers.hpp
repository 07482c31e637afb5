//
// Copyright 2026 The dualpriv Authors
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

#ifndef DUALPRIV_OPTIMIZERS_HPP_
#define DUALPRIV_OPTIMIZERS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dualpriv/numeric.hpp"

// Differentially private optimizer steps over block-structured parameter
// sets:
//
//  * dp_sgd_step:      clip per-sample gradients to C, average, add
//                       N(0, sigma^2 C^2 / m^2 I), take a gradient step.
//  * dual_priv_step:   same privatized gradient, then a post-noise
//                       top-K% block mask gates the update. The mask is
//                       pure post-processing: it reads only the noised
//                       gradient, so the accountant never sees it.
//  * dpzo_step:        zeroth-order variant privatizing one clipped
//                       scalar loss difference along a shared random
//                       direction.
//
// Noise is always drawn before any norm or mask computation; nonprivate
// runs must say so explicitly to skip the draw.

namespace dualpriv {

struct ParamBlock {
  std::string name;
  Vec64 values;
};

// Ordered named blocks; the block is the unit of masking.
struct ParamSet {
  std::vector<ParamBlock> blocks;

  std::size_t total_dim() const {
    std::size_t n = 0;
    for (const ParamBlock& b : blocks) {
      n += b.values.size();
    }
    return n;
  }

  Vec64 flatten() const {
    Vec64 flat;
    flat.reserve(total_dim());
    for (const ParamBlock& b : blocks) {
      flat.insert(flat.end(), b.values.begin(), b.values.end());
    }
    return flat;
  }

  void validate() const {
    if (blocks.empty() || total_dim() == 0) {
      throw std::invalid_argument("ParamSet: needs at least one nonempty block");
    }
    std::set<std::string> names;
    for (const ParamBlock& b : blocks) {
      if (!names.insert(b.name).second) {
        throw std::invalid_argument("ParamSet: duplicate block name " + b.name);
      }
    }
  }
};

// Per-sample gradients (flattened in ParamSet block order) plus the clip
// threshold they are bound by.
struct GradBatch {
  std::vector<Vec64> per_sample;
  double clip_c = 1.0;
};

struct UpdateMask {
  std::vector<bool> block_flags;

  std::size_t set_count() const {
    std::size_t n = 0;
    for (bool f : block_flags) {
      n += f ? 1 : 0;
    }
    return n;
  }
};

struct StepConfig {
  double learning_rate = 0.1;
  double clip_c = 1.0;
  double noise_multiplier = 0.0;
  std::size_t batch_size = 1;
  double top_k_percent = 100.0;
  bool nonprivate = false;  // required to skip the noise draw

  // DPZO only.
  double perturb_phi = 0.15;
  double clip_c_zo = 1.0;
  double noise_sigma_zo = 0.0;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw std::invalid_argument("StepConfig: bad learning rate");
    }
    if (!(clip_c > 0.0)) {
      throw std::invalid_argument("StepConfig: clip_c must be positive");
    }
    if (noise_multiplier < 0.0) {
      throw std::invalid_argument("StepConfig: noise multiplier must be >= 0");
    }
    if (batch_size < 1) {
      throw std::invalid_argument("StepConfig: batch size must be >= 1");
    }
    if (!(top_k_percent > 0.0 && top_k_percent <= 100.0)) {
      throw std::invalid_argument("StepConfig: top_k_percent must lie in (0, 100]");
    }
    if (!(perturb_phi > 0.0)) {
      throw std::invalid_argument("StepConfig: perturb_phi must be positive");
    }
    if (!(clip_c_zo > 0.0) || noise_sigma_zo < 0.0) {
      throw std::invalid_argument("StepConfig: bad DPZO noise parameters");
    }
  }
};

// g / max(1, ||g||_2 / C): norm bounded by C, direction preserved,
// sub-threshold gradients returned unchanged (bit-identical).
inline Vec64 clip_gradient(const Vec64& g, double clip_c) {
  if (!(clip_c > 0.0)) {
    throw std::invalid_argument("clip_gradient: clip threshold must be positive");
  }
  const double norm = l2_norm(g);  // rejects non-finite input
  const double scale = std::max(1.0, norm / clip_c);
  if (scale == 1.0) {
    return g;
  }
  Vec64 out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    out[i] = g[i] / scale;
  }
  return out;
}

// (1/m) sum of clipped gradients + N(0, sigma^2 C^2 / m^2 I). Batches are
// fixed-size: the declared batch size must match the sample count. With
// sigma == 0 the result is the plain mean, bit for bit.
template <class Rng>
Vec64 aggregate_and_noise(const GradBatch& batch, double noise_multiplier,
                          std::size_t batch_size, Rng& rng) {
  if (batch.per_sample.empty()) {
    throw std::invalid_argument("aggregate_and_noise: empty batch");
  }
  if (batch.per_sample.size() != batch_size) {
    throw std::invalid_argument(
        "aggregate_and_noise: batch size mismatch (fixed-size batches)");
  }
  const std::size_t dim = batch.per_sample.front().size();
  const double tol = batch.clip_c * (1.0 + 1e-9);
  for (const Vec64& g : batch.per_sample) {
    if (g.size() != dim) {
      throw std::invalid_argument("aggregate_and_noise: gradient dim mismatch");
    }
    if (l2_norm(g) > tol) {
      throw std::invalid_argument(
          "aggregate_and_noise: unclipped gradient in batch");
    }
  }
  Vec64 mean(dim, 0.0);
  for (const Vec64& g : batch.per_sample) {
    for (std::size_t i = 0; i < dim; ++i) {
      mean[i] += g[i];
    }
  }
  const double inv_m = 1.0 / static_cast<double>(batch_size);
  for (double& x : mean) {
    x *= inv_m;
  }
  const double noise_std = noise_multiplier * batch.clip_c * inv_m;
  if (noise_std > 0.0) {
    const Vec64 noise = gaussian_vec(rng, dim, noise_std);
    for (std::size_t i = 0; i < dim; ++i) {
      mean[i] += noise[i];
    }
  }
  return mean;
}

// L2 norm of each block's slice of the flattened gradient, in block order.
inline Vec64 block_norms(const Vec64& flat, const ParamSet& params) {
  if (flat.size() != params.total_dim()) {
    throw std::invalid_argument("block_norms: gradient/parameter length mismatch");
  }
  Vec64 norms;
  norms.reserve(params.blocks.size());
  std::size_t offset = 0;
  for (const ParamBlock& b : params.blocks) {
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < b.values.size(); ++i) {
      sum_sq += flat[offset + i] * flat[offset + i];
    }
    norms.push_back(std::sqrt(sum_sq));
    offset += b.values.size();
  }
  return norms;
}

namespace detail {

// ceil((p / 100) * j) with a 1e-9 guard so exact-integer products (say,
// 50% of 4 blocks) cannot drift up a block through FP rounding.
inline std::size_t top_k_count(double top_k_percent, std::size_t num_blocks) {
  const double raw =
      top_k_percent * static_cast<double>(num_blocks) / 100.0;
  const auto k = static_cast<long long>(std::ceil(raw - 1e-9));
  return static_cast<std::size_t>(
      std::max(1ll, std::min(static_cast<long long>(num_blocks), k)));
}

}  // namespace detail

// Flag exactly ceil((P_K/100) * J) blocks: the largest norms win, ties go
// to the lowest block index.
inline UpdateMask build_mask(const Vec64& norms, double top_k_percent) {
  if (norms.empty()) {
    throw std::invalid_argument("build_mask: no block norms");
  }
  if (!(top_k_percent > 0.0 && top_k_percent <= 100.0)) {
    throw std::invalid_argument("build_mask: top_k_percent must lie in (0, 100]");
  }
  const std::size_t k_count = detail::top_k_count(top_k_percent, norms.size());
  std::vector<std::size_t> order(norms.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&norms](std::size_t a, std::size_t b) {
    if (norms[a] != norms[b]) return norms[a] > norms[b];
    return a < b;
  });
  UpdateMask mask;
  mask.block_flags.assign(norms.size(), false);
  for (std::size_t i = 0; i < k_count; ++i) {
    mask.block_flags[order[i]] = true;
  }
  return mask;
}

namespace detail {

inline std::vector<Vec64> clip_batch(const GradBatch& batch, double clip_c) {
  std::vector<Vec64> clipped;
  clipped.reserve(batch.per_sample.size());
  for (const Vec64& g : batch.per_sample) {
    clipped.push_back(clip_gradient(g, clip_c));
  }
  return clipped;
}

// theta -= lr * grad on flagged blocks; unflagged blocks are copied
// verbatim so their bits cannot move. dp_sgd and dual_priv share this so
// their arithmetic is identical when the mask is all-ones.
inline ParamSet apply_masked_update(const ParamSet& params, const Vec64& grad,
                                    double learning_rate, const UpdateMask& mask) {
  ParamSet next = params;
  std::size_t offset = 0;
  for (std::size_t j = 0; j < next.blocks.size(); ++j) {
    Vec64& values = next.blocks[j].values;
    if (mask.block_flags[j]) {
      for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] -= learning_rate * grad[offset + i];
      }
    }
    offset += values.size();
  }
  return next;
}

template <class Rng>
Vec64 privatized_gradient(const GradBatch& batch, const StepConfig& cfg,
                          Rng& rng) {
  GradBatch clipped{clip_batch(batch, cfg.clip_c), cfg.clip_c};
  const double sigma = cfg.nonprivate ? 0.0 : cfg.noise_multiplier;
  return aggregate_and_noise(clipped, sigma, cfg.batch_size, rng);
}

}  // namespace detail

// Standard DP-SGD step: theta -= lr * privatized gradient.
template <class Rng>
ParamSet dp_sgd_step(const ParamSet& params, const GradBatch& batch,
                     const StepConfig& cfg, Rng& rng) {
  cfg.validate();
  params.validate();
  const Vec64 noisy = detail::privatized_gradient(batch, cfg, rng);
  UpdateMask all;
  all.block_flags.assign(params.blocks.size(), true);
  return detail::apply_masked_update(params, noisy, cfg.learning_rate, all);
}

// Gradient-update pruning step. Order matters: the noise lands on the
// aggregated gradient first; block norms and the top-K% mask are computed
// from the already-noised vector and gate the update only. Parameters in
// unflagged blocks come back bit-identical.
template <class Rng>
std::pair<ParamSet, UpdateMask> dual_priv_step(const ParamSet& params,
                                               const GradBatch& batch,
                                               const StepConfig& cfg, Rng& rng) {
  cfg.validate();
  params.validate();
  const Vec64 noisy = detail::privatized_gradient(batch, cfg, rng);
  const Vec64 norms = block_norms(noisy, params);
  const UpdateMask mask = build_mask(norms, cfg.top_k_percent);
  ParamSet next = detail::apply_masked_update(params, noisy, cfg.learning_rate, mask);
  return {std::move(next), mask};
}

// Zeroth-order step. One shared direction z ~ N(0, I) per step; each
// sample contributes a loss difference L(theta + phi z) - L(theta - phi z)
// clipped to [-C_zo, C_zo]; the batch average is privatized with scalar
// Gaussian noise of std sigma_zo * C_zo / m; update is
// theta -= lr * s * z / (2 phi).
//
// loss(theta, i) must evaluate the per-sample loss of sample i at theta.
template <class Rng, class LossFn>
ParamSet dpzo_step(const ParamSet& params, LossFn&& loss,
                   std::size_t num_samples, const StepConfig& cfg, Rng& rng) {
  cfg.validate();
  params.validate();
  if (num_samples == 0) {
    throw std::invalid_argument("dpzo_step: empty batch");
  }
  const std::size_t dim = params.total_dim();
  const Vec64 z = gaussian_vec(rng, dim, 1.0);

  auto shifted = [&params, &z, dim](double scale) {
    ParamSet shifted_params = params;
    std::size_t offset = 0;
    for (ParamBlock& b : shifted_params.blocks) {
      for (std::size_t i = 0; i < b.values.size(); ++i) {
        b.values[i] += scale * z[offset + i];
      }
      offset += b.values.size();
    }
    return shifted_params;
  };
  const ParamSet theta_plus = shifted(cfg.perturb_phi);
  const ParamSet theta_minus = shifted(-cfg.perturb_phi);

  double sum = 0.0;
  for (std::size_t i = 0; i < num_samples; ++i) {
    const double diff = loss(theta_plus, i) - loss(theta_minus, i);
    if (!std::isfinite(diff)) {
      throw std::runtime_error("dpzo_step: non-finite loss difference");
    }
    sum += std::clamp(diff, -cfg.clip_c_zo, cfg.clip_c_zo);
  }
  double s = sum / static_cast<double>(num_samples);
  const double noise_std = (cfg.nonprivate ? 0.0 : cfg.noise_sigma_zo) *
                           cfg.clip_c_zo / static_cast<double>(num_samples);
  if (noise_std > 0.0) {
    s += noise_std * rng.normal();
  }

  const double coeff = cfg.learning_rate * s / (2.0 * cfg.perturb_phi);
  ParamSet next = params;
  std::size_t offset = 0;
  for (ParamBlock& b : next.blocks) {
    for (std::size_t i = 0; i < b.values.size(); ++i) {
      b.values[i] -= coeff * z[offset + i];
    }
    offset += b.values.size();
  }
  return next;
}

}  // namespace dualpriv

#endif  // DUALPRIV_OPTIMIZERS_HPP_
