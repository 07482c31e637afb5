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

#ifndef DUALPRIV_MODELS_HPP_
#define DUALPRIV_MODELS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dualpriv/numeric.hpp"
#include "dualpriv/optimizers.hpp"
#include "dualpriv/token_pruner.hpp"

// Desk-scale differentiable models with exact per-sample gradients:
// a linear softmax classifier, a one-hidden-layer tanh MLP, and a
// token-pooling classifier (mean over token embeddings, then linear).
// tanh keeps the finite-difference gradient oracle clean; ReLU kinks
// would break its tolerances. Plus synthetic dataset generators and
// neighboring-dataset construction.

namespace dualpriv {

enum class ModelKind { kLinear, kMlp, kTokenPool };
enum class BlockPolicy { kPerTensor, kPerRow };

struct ModelSpec {
  ModelKind kind = ModelKind::kLinear;
  std::size_t input_dim = 0;   // feature dim (linear/mlp) or token dim (token-pool)
  std::size_t hidden_dim = 0;  // mlp only
  std::size_t num_classes = 2;
  std::uint64_t init_seed = 0;
  BlockPolicy block_policy = BlockPolicy::kPerTensor;

  void validate() const {
    if (input_dim == 0 || num_classes < 2) {
      throw std::invalid_argument("ModelSpec: need input_dim >= 1, classes >= 2");
    }
    if (kind == ModelKind::kMlp && hidden_dim == 0) {
      throw std::invalid_argument("ModelSpec: mlp needs hidden_dim >= 1");
    }
  }
};

struct TokenInput {
  TokenSet tokens;
  AttentionStack heads;
};

// One record: either a flat feature vector or a token set with its
// attention maps. label < num_classes.
struct Sample {
  Vec64 features;
  std::optional<TokenInput> tokens;
  int label = 0;

  bool is_token_modality() const { return tokens.has_value(); }
};

struct Dataset {
  std::string kind;
  std::uint64_t seed = 0;
  std::size_t num_classes = 2;
  std::vector<Sample> samples;

  void validate() const {
    if (samples.empty()) {
      throw std::invalid_argument("Dataset: empty");
    }
    for (const Sample& s : samples) {
      if (s.label < 0 || static_cast<std::size_t>(s.label) >= num_classes) {
        throw std::invalid_argument("Dataset: label out of range");
      }
    }
  }
};

namespace detail {

// Weight matrices are drawn element by element in row-major order from
// one stream, so the two block policies describe the same model.
inline void append_matrix_blocks(ParamSet& params, const std::string& name,
                                 std::size_t rows, std::size_t cols,
                                 BlockPolicy policy, SeededRng& rng,
                                 double init_std) {
  if (policy == BlockPolicy::kPerTensor) {
    Vec64 w(rows * cols);
    for (double& x : w) {
      x = init_std * rng.normal();
    }
    params.blocks.push_back({name, std::move(w)});
  } else {
    for (std::size_t r = 0; r < rows; ++r) {
      Vec64 w(cols);
      for (double& x : w) {
        x = init_std * rng.normal();
      }
      params.blocks.push_back({name + ".row" + std::to_string(r), std::move(w)});
    }
  }
}

inline const Vec64* matrix_rows_flat(const ParamSet& params, std::size_t& cursor,
                                     Vec64& scratch, std::size_t rows,
                                     std::size_t cols, BlockPolicy policy) {
  // Collect `rows` blocks (per-row policy) or one block (per-tensor) into
  // a contiguous row-major view.
  if (policy == BlockPolicy::kPerTensor) {
    (void)rows;
    (void)cols;
    return &params.blocks[cursor++].values;
  }
  scratch.clear();
  scratch.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const Vec64& row = params.blocks[cursor++].values;
    scratch.insert(scratch.end(), row.begin(), row.end());
  }
  return &scratch;
}

}  // namespace detail

// Gaussian init with std 0.1, biases zero, all seeded.
inline ParamSet init_params(const ModelSpec& spec) {
  spec.validate();
  constexpr double kInitStd = 0.1;
  SeededRng rng(spec.init_seed);
  ParamSet params;
  if (spec.kind == ModelKind::kMlp) {
    detail::append_matrix_blocks(params, "w1", spec.hidden_dim, spec.input_dim,
                                 spec.block_policy, rng, kInitStd);
    params.blocks.push_back({"b1", Vec64(spec.hidden_dim, 0.0)});
    detail::append_matrix_blocks(params, "w2", spec.num_classes, spec.hidden_dim,
                                 spec.block_policy, rng, kInitStd);
    params.blocks.push_back({"b2", Vec64(spec.num_classes, 0.0)});
  } else {
    detail::append_matrix_blocks(params, "w", spec.num_classes, spec.input_dim,
                                 spec.block_policy, rng, kInitStd);
    params.blocks.push_back({"b", Vec64(spec.num_classes, 0.0)});
  }
  params.validate();
  return params;
}

namespace detail {

inline Vec64 pooled_input(const ModelSpec& spec, const Sample& sample) {
  if (spec.kind == ModelKind::kTokenPool) {
    if (!sample.tokens.has_value()) {
      throw std::invalid_argument("token-pool model needs token samples");
    }
    const Mat64& t = sample.tokens->tokens.tokens;
    if (t.cols != spec.input_dim) {
      throw std::invalid_argument("token dim does not match model input_dim");
    }
    Vec64 mean(t.cols, 0.0);
    for (std::size_t r = 0; r < t.rows; ++r) {
      for (std::size_t c = 0; c < t.cols; ++c) {
        mean[c] += t.at(r, c);
      }
    }
    for (double& x : mean) {
      x /= static_cast<double>(t.rows);
    }
    return mean;
  }
  if (sample.features.size() != spec.input_dim) {
    throw std::invalid_argument("feature dim does not match model input_dim");
  }
  return sample.features;
}

struct ForwardState {
  Vec64 input;       // x (or pooled x-bar)
  Vec64 hidden;      // mlp: tanh(w1 x + b1)
  Vec64 logit_vec;   // final logits
};

inline ForwardState forward(const ModelSpec& spec, const ParamSet& params,
                            const Sample& sample) {
  ForwardState st;
  st.input = pooled_input(spec, sample);
  std::size_t cursor = 0;
  Vec64 scratch;
  if (spec.kind == ModelKind::kMlp) {
    const Vec64& w1 = *matrix_rows_flat(params, cursor, scratch, spec.hidden_dim,
                                        spec.input_dim, spec.block_policy);
    const Vec64& b1 = params.blocks[cursor++].values;
    st.hidden.assign(spec.hidden_dim, 0.0);
    for (std::size_t h = 0; h < spec.hidden_dim; ++h) {
      double z = b1[h];
      for (std::size_t i = 0; i < spec.input_dim; ++i) {
        z += w1[h * spec.input_dim + i] * st.input[i];
      }
      st.hidden[h] = std::tanh(z);
    }
    Vec64 scratch2;
    const Vec64& w2 = *matrix_rows_flat(params, cursor, scratch2, spec.num_classes,
                                        spec.hidden_dim, spec.block_policy);
    const Vec64& b2 = params.blocks[cursor++].values;
    st.logit_vec.assign(spec.num_classes, 0.0);
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
      double z = b2[c];
      for (std::size_t h = 0; h < spec.hidden_dim; ++h) {
        z += w2[c * spec.hidden_dim + h] * st.hidden[h];
      }
      st.logit_vec[c] = z;
    }
  } else {
    const Vec64& w = *matrix_rows_flat(params, cursor, scratch, spec.num_classes,
                                       spec.input_dim, spec.block_policy);
    const Vec64& b = params.blocks[cursor++].values;
    st.logit_vec.assign(spec.num_classes, 0.0);
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
      double z = b[c];
      for (std::size_t i = 0; i < spec.input_dim; ++i) {
        z += w[c * spec.input_dim + i] * st.input[i];
      }
      st.logit_vec[c] = z;
    }
  }
  return st;
}

inline double log_sum_exp_vec(const Vec64& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double x : z) {
    sum += std::exp(x - m);
  }
  return m + std::log(sum);
}

}  // namespace detail

inline Vec64 logits(const ModelSpec& spec, const ParamSet& params,
                    const Sample& sample) {
  return detail::forward(spec, params, sample).logit_vec;
}

// Cross-entropy -log softmax(z)[label], evaluated in log space.
inline double forward_loss(const ModelSpec& spec, const ParamSet& params,
                           const Sample& sample) {
  if (sample.label < 0 ||
      static_cast<std::size_t>(sample.label) >= spec.num_classes) {
    throw std::invalid_argument("forward_loss: label out of range");
  }
  const Vec64 z = logits(spec, params, sample);
  return detail::log_sum_exp_vec(z) - z[static_cast<std::size_t>(sample.label)];
}

// Argmax prediction; ties resolve to the lowest class index.
inline int predict(const ModelSpec& spec, const ParamSet& params,
                   const Sample& sample) {
  const Vec64 z = logits(spec, params, sample);
  std::size_t best = 0;
  for (std::size_t c = 1; c < z.size(); ++c) {
    if (z[c] > z[best]) {
      best = c;
    }
  }
  return static_cast<int>(best);
}

// Exact analytic gradient of forward_loss, flattened in block order.
inline Vec64 per_sample_grad(const ModelSpec& spec, const ParamSet& params,
                             const Sample& sample) {
  const detail::ForwardState st = detail::forward(spec, params, sample);
  const Vec64 p = softmax_row(st.logit_vec);
  Vec64 delta_out(p);  // p - onehot(label)
  delta_out[static_cast<std::size_t>(sample.label)] -= 1.0;

  Vec64 grad;
  grad.reserve(params.total_dim());
  if (spec.kind == ModelKind::kMlp) {
    Vec64 scratch2;
    // Skip ahead to w2 to form the hidden-layer error first.
    const std::size_t w1_blocks =
        spec.block_policy == BlockPolicy::kPerTensor ? 1 : spec.hidden_dim;
    std::size_t w2_cursor = w1_blocks + 1;
    const Vec64& w2 = *detail::matrix_rows_flat(params, w2_cursor, scratch2,
                                                spec.num_classes, spec.hidden_dim,
                                                spec.block_policy);
    Vec64 delta_hidden(spec.hidden_dim, 0.0);
    for (std::size_t h = 0; h < spec.hidden_dim; ++h) {
      double back = 0.0;
      for (std::size_t c = 0; c < spec.num_classes; ++c) {
        back += w2[c * spec.hidden_dim + h] * delta_out[c];
      }
      delta_hidden[h] = back * (1.0 - st.hidden[h] * st.hidden[h]);
    }
    // dW1 = delta_hidden x^T, db1 = delta_hidden.
    for (std::size_t h = 0; h < spec.hidden_dim; ++h) {
      for (std::size_t i = 0; i < spec.input_dim; ++i) {
        grad.push_back(delta_hidden[h] * st.input[i]);
      }
    }
    grad.insert(grad.end(), delta_hidden.begin(), delta_hidden.end());
    // dW2 = delta_out h^T, db2 = delta_out.
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
      for (std::size_t h = 0; h < spec.hidden_dim; ++h) {
        grad.push_back(delta_out[c] * st.hidden[h]);
      }
    }
    grad.insert(grad.end(), delta_out.begin(), delta_out.end());
  } else {
    // dW = delta_out x^T, db = delta_out.
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
      for (std::size_t i = 0; i < spec.input_dim; ++i) {
        grad.push_back(delta_out[c] * st.input[i]);
      }
    }
    grad.insert(grad.end(), delta_out.begin(), delta_out.end());
  }
  return grad;
}

// Central-difference gradient, coordinate by coordinate. The oracle side
// of the gradient checks; deliberately independent of per_sample_grad.
inline Vec64 finite_diff_grad(const ModelSpec& spec, const ParamSet& params,
                              const Sample& sample, double h) {
  if (!(h > 0.0)) {
    throw std::invalid_argument("finite_diff_grad: h must be positive");
  }
  Vec64 grad;
  grad.reserve(params.total_dim());
  ParamSet perturbed = params;
  for (std::size_t j = 0; j < perturbed.blocks.size(); ++j) {
    for (std::size_t i = 0; i < perturbed.blocks[j].values.size(); ++i) {
      const double original = perturbed.blocks[j].values[i];
      perturbed.blocks[j].values[i] = original + h;
      const double up = forward_loss(spec, perturbed, sample);
      perturbed.blocks[j].values[i] = original - h;
      const double down = forward_loss(spec, perturbed, sample);
      perturbed.blocks[j].values[i] = original;
      grad.push_back((up - down) / (2.0 * h));
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Synthetic datasets.

struct SyntheticSpec {
  std::string kind;  // "gauss-blobs" | "token-grid"
  std::size_t num_samples = 0;
  std::size_t num_classes = 2;
  std::uint64_t seed = 0;
  // Distinguishes draws from the same generative process: splits share the
  // seed (and therefore the class means) but sample fresh noise. The train
  // loop uses split 0 for training data and split 1 for the test set.
  std::uint64_t split_id = 0;

  // gauss-blobs: class-conditional unit Gaussians whose means sit
  // `separation` noise-stds apart.
  std::size_t feature_dim = 10;
  double separation = 10.0;

  // token-grid: per sample, `planted_tokens` randomly placed patch tokens
  // carry the class mean and the CLS attention mass; the rest are noise.
  std::size_t num_tokens = 16;
  std::size_t token_dim = 8;
  std::size_t planted_tokens = 3;
  std::size_t num_heads = 2;

  void validate() const {
    if (kind != "gauss-blobs" && kind != "token-grid") {
      throw std::invalid_argument("SyntheticSpec: unknown kind " + kind);
    }
    if (num_samples < num_classes || num_classes < 2) {
      throw std::invalid_argument("SyntheticSpec: need n >= num_classes >= 2");
    }
    if (kind == "gauss-blobs" && feature_dim == 0) {
      throw std::invalid_argument("SyntheticSpec: feature_dim must be >= 1");
    }
    if (kind == "token-grid") {
      if (num_tokens < 2 || token_dim == 0 || num_heads == 0) {
        throw std::invalid_argument("SyntheticSpec: bad token-grid shape");
      }
      if (planted_tokens == 0 || planted_tokens > num_tokens - 1) {
        throw std::invalid_argument(
            "SyntheticSpec: planted_tokens must lie in [1, num_tokens - 1]");
      }
    }
  }
};

namespace detail {

inline std::vector<Vec64> class_means(std::size_t num_classes, std::size_t dim,
                                      double separation, SeededRng& rng) {
  // Random unit directions scaled to half the separation; for two classes
  // this is the classic +/- mu pair.
  std::vector<Vec64> means;
  means.reserve(num_classes);
  Vec64 first_dir;
  for (std::size_t c = 0; c < num_classes; ++c) {
    Vec64 dir = gaussian_vec(rng, dim, 1.0);
    const double norm = l2_norm(dir);
    for (double& x : dir) {
      x = x / norm * (separation / 2.0);
    }
    if (c == 0) {
      first_dir = dir;
    } else if (c == 1 && num_classes == 2) {
      for (std::size_t i = 0; i < dim; ++i) {
        dir[i] = -first_dir[i];
      }
    }
    means.push_back(std::move(dir));
  }
  return means;
}

inline Sample make_token_sample(const SyntheticSpec& spec, const Vec64& mean,
                                int label, SeededRng& rng) {
  const std::size_t n = spec.num_tokens;
  const std::size_t d = spec.token_dim;

  // Planted patch positions (token rows 1..n-1).
  std::vector<std::size_t> patches(n - 1);
  std::iota(patches.begin(), patches.end(), std::size_t{1});
  std::vector<std::size_t> planted;
  for (std::size_t i = 0; i < spec.planted_tokens; ++i) {
    const std::size_t j = i + rng.next_below(patches.size() - i);
    std::swap(patches[i], patches[j]);
    planted.push_back(patches[i]);
  }
  std::sort(planted.begin(), planted.end());

  Mat64 tok(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    const bool is_planted =
        std::binary_search(planted.begin(), planted.end(), r);
    const Vec64 noise = gaussian_vec(rng, d, is_planted ? 0.3 : 1.0);
    for (std::size_t c = 0; c < d; ++c) {
      tok.at(r, c) = noise[c] + (is_planted ? mean[c] : 0.0);
    }
  }

  // Attention heads: CLS row concentrates on the planted patches (logit
  // gap 4 plus a small per-head jitter); other rows are uniform.
  AttentionStack stack;
  for (std::size_t h = 0; h < spec.num_heads; ++h) {
    Mat64 head(n, n);
    Vec64 cls_logits(n, 0.0);
    for (std::size_t j : planted) {
      cls_logits[j] = 4.0 + 0.1 * rng.next_unit();
    }
    const Vec64 cls_row = softmax_row(cls_logits);
    for (std::size_t j = 0; j < n; ++j) {
      head.at(0, j) = cls_row[j];
    }
    const Vec64 uniform_row = softmax_row(Vec64(n, 0.0));
    for (std::size_t i = 1; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        head.at(i, j) = uniform_row[j];
      }
    }
    stack.heads.push_back(std::move(head));
  }

  Sample s;
  s.tokens = TokenInput{TokenSet{std::move(tok), 0}, std::move(stack)};
  s.label = label;
  return s;
}

}  // namespace detail

inline Dataset make_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  // Class means come from a split-independent stream; only the per-sample
  // noise differs between splits of the same seed.
  SeededRng means_rng(spec.seed, 0x3EA75ull);
  SeededRng rng(spec.seed, 0xDA7Aull + spec.split_id);
  const std::size_t dim =
      spec.kind == "gauss-blobs" ? spec.feature_dim : spec.token_dim;
  const std::vector<Vec64> means =
      detail::class_means(spec.num_classes, dim, spec.separation, means_rng);

  Dataset ds;
  ds.kind = spec.kind;
  ds.seed = spec.seed;
  ds.num_classes = spec.num_classes;
  ds.samples.reserve(spec.num_samples);
  for (std::size_t i = 0; i < spec.num_samples; ++i) {
    const int label = static_cast<int>(i % spec.num_classes);
    if (spec.kind == "gauss-blobs") {
      Sample s;
      s.features = gaussian_vec(rng, dim, 1.0);
      for (std::size_t c = 0; c < dim; ++c) {
        s.features[c] += means[static_cast<std::size_t>(label)][c];
      }
      s.label = label;
      ds.samples.push_back(std::move(s));
    } else {
      ds.samples.push_back(detail::make_token_sample(
          spec, means[static_cast<std::size_t>(label)], label, rng));
    }
  }
  ds.validate();
  return ds;
}

// Neighboring pair under add-or-remove adjacency: the original set and a
// copy with one uniformly chosen record removed.
template <class Rng>
std::pair<Dataset, Dataset> make_neighbors(const Dataset& d, Rng& rng) {
  if (d.samples.size() < 2) {
    throw std::invalid_argument("make_neighbors: need at least two records");
  }
  Dataset smaller = d;
  const std::size_t victim = rng.next_below(d.samples.size());
  smaller.samples.erase(smaller.samples.begin() +
                        static_cast<std::ptrdiff_t>(victim));
  return {d, std::move(smaller)};
}

}  // namespace dualpriv

#endif  // DUALPRIV_MODELS_HPP_
