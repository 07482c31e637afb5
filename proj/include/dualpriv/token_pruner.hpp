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

#ifndef DUALPRIV_TOKEN_PRUNER_HPP_
#define DUALPRIV_TOKEN_PRUNER_HPP_

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dualpriv/numeric.hpp"

// Attention-based visual-token pruning and fusion. Given token embeddings
// and per-head attention maps (attention is an *input* here; no encoder
// lives in this library), keep the CLS token and the top-K patch tokens by
// aggregated CLS attention, then collapse the remaining patches into k
// fused contextual tokens: each fused token is a randomly chosen center
// plus the mean of its cosine-similarity cluster plus heuristic Gaussian
// noise. The whole stage is preprocessing and never touches the privacy
// accountant.
//
// Index conventions: token row 0 is CLS; patch j lives in token row j for
// j in [1, n-1] and its score sits at scores[j - 1]. All tie-breaks
// resolve to the lowest index so golden fixtures stay stable.

namespace dualpriv {

struct TokenSet {
  Mat64 tokens;                // n x d embeddings, row 0 = CLS
  std::size_t cls_index = 0;   // fixed at 0

  std::size_t count() const { return tokens.rows; }
  std::size_t dim() const { return tokens.cols; }

  void validate() const {
    if (tokens.rows < 2 || tokens.cols < 1) {
      throw std::invalid_argument("TokenSet: need n >= 2 tokens of dim >= 1");
    }
    if (cls_index != 0) {
      throw std::invalid_argument("TokenSet: cls_index is fixed at 0");
    }
    ensure_finite(tokens.values, "TokenSet");
  }
};

struct AttentionStack {
  std::vector<Mat64> heads;  // H maps, each n x n, row-stochastic

  void validate(std::size_t n) const {
    if (heads.empty()) {
      throw std::invalid_argument("AttentionStack: need at least one head");
    }
    for (const Mat64& h : heads) {
      if (h.rows != n || h.cols != n) {
        throw std::invalid_argument("AttentionStack: head shape mismatch");
      }
      ensure_finite(h.values, "AttentionStack");
      for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          row_sum += h.at(i, j);
        }
        if (std::abs(row_sum - 1.0) > 1e-9) {
          throw std::invalid_argument(
              "AttentionStack: attention rows must sum to 1");
        }
      }
    }
  }
};

// Which axis of the aggregated map carries the CLS importance scores.
// Row = attention mass CLS places on each patch (the default reading);
// Column = attention each patch places on CLS.
enum class ClsAxis { kRow, kColumn };

struct PruneConfig {
  std::size_t keep_k = 0;     // dominant patch tokens retained verbatim
  std::size_t centers_k = 0;  // fused contextual tokens
  double sigma_fuse = 0.0;    // heuristic fusion noise std, >= 0
  ClsAxis cls_axis = ClsAxis::kRow;

  void validate(std::size_t n) const {
    if (keep_k + centers_k > n - 1) {
      throw std::invalid_argument(
          "PruneConfig: keep_k + centers_k must not exceed patch count");
    }
    if (sigma_fuse < 0.0) {
      throw std::invalid_argument("PruneConfig: sigma_fuse must be >= 0");
    }
  }
};

struct PrunedTokens {
  Mat64 tokens;  // (keep_k + centers_k + 1) x d, ordered [cls, dominant..., fused...]
  std::vector<std::size_t> dominant_indices;  // original indices, ascending
  std::vector<std::size_t> center_indices;    // cluster id -> original index
  std::map<std::size_t, std::size_t> cluster_assignment;  // member -> cluster id
};

// Entrywise mean of the head maps.
inline Mat64 aggregate_heads(const AttentionStack& stack) {
  if (stack.heads.empty()) {
    throw std::invalid_argument("aggregate_heads: no heads");
  }
  const std::size_t rows = stack.heads.front().rows;
  const std::size_t cols = stack.heads.front().cols;
  Mat64 avg(rows, cols);
  for (const Mat64& h : stack.heads) {
    if (h.rows != rows || h.cols != cols) {
      throw std::invalid_argument("aggregate_heads: head shape mismatch");
    }
    for (std::size_t i = 0; i < h.values.size(); ++i) {
      avg.values[i] += h.values[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(stack.heads.size());
  for (double& x : avg.values) {
    x *= inv;
  }
  return avg;
}

// Importance score of patch j, read from the aggregated map along the
// configured CLS axis. Returns n-1 scores.
inline Vec64 cls_scores(const Mat64& s_avg, ClsAxis axis = ClsAxis::kRow) {
  if (s_avg.rows != s_avg.cols || s_avg.rows < 2) {
    throw std::invalid_argument("cls_scores: need a square map with n >= 2");
  }
  const std::size_t n = s_avg.rows;
  Vec64 scores(n - 1);
  for (std::size_t j = 1; j < n; ++j) {
    scores[j - 1] = axis == ClsAxis::kRow ? s_avg.at(0, j) : s_avg.at(j, 0);
  }
  return scores;
}

// Token indices of the keep_k highest-scoring patches, ascending.
inline std::vector<std::size_t> select_dominant(const Vec64& scores,
                                                std::size_t keep_k) {
  if (keep_k > scores.size()) {
    throw std::invalid_argument("select_dominant: keep_k exceeds patch count");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  std::vector<std::size_t> picked(order.begin(),
                                  order.begin() + static_cast<std::ptrdiff_t>(keep_k));
  for (std::size_t& idx : picked) {
    idx += 1;  // score slot -> token row
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

// Uniform random size-k subset of the pool, without replacement. The
// selection order defines the cluster ids.
template <class Rng>
std::vector<std::size_t> pick_centers(const std::vector<std::size_t>& pool,
                                      std::size_t centers_k, Rng& rng) {
  if (centers_k > pool.size()) {
    throw std::invalid_argument("pick_centers: centers_k exceeds pool size");
  }
  std::vector<std::size_t> scratch = pool;
  std::vector<std::size_t> centers;
  centers.reserve(centers_k);
  for (std::size_t i = 0; i < centers_k; ++i) {
    const std::size_t j = i + rng.next_below(scratch.size() - i);
    std::swap(scratch[i], scratch[j]);
    centers.push_back(scratch[i]);
  }
  return centers;
}

// Assign each member token to the center maximizing cosine similarity;
// ties go to the lowest cluster id.
inline std::map<std::size_t, std::size_t> assign_clusters(
    const TokenSet& tokens, const std::vector<std::size_t>& members,
    const std::vector<std::size_t>& centers) {
  if (centers.empty()) {
    throw std::invalid_argument("assign_clusters: no centers");
  }
  std::vector<Vec64> center_rows;
  center_rows.reserve(centers.size());
  for (std::size_t c : centers) {
    center_rows.push_back(tokens.tokens.row(c));
  }
  std::map<std::size_t, std::size_t> assignment;
  for (std::size_t m : members) {
    const Vec64 row = tokens.tokens.row(m);
    std::size_t best = 0;
    double best_sim = -2.0;
    for (std::size_t l = 0; l < center_rows.size(); ++l) {
      const double sim = cosine_sim(row, center_rows[l]);
      if (sim > best_sim) {
        best_sim = sim;
        best = l;
      }
    }
    assignment[m] = best;
  }
  return assignment;
}

// Fused contextual token per cluster: center + mean of assigned members
// + N(0, sigma_fuse^2 I). An empty cluster degrades to center + noise.
template <class Rng>
std::vector<Vec64> fuse_clusters(
    const TokenSet& tokens, const std::vector<std::size_t>& centers,
    const std::map<std::size_t, std::size_t>& assignment, double sigma_fuse,
    Rng& rng) {
  const std::size_t d = tokens.dim();
  std::vector<Vec64> member_sums(centers.size(), Vec64(d, 0.0));
  std::vector<std::size_t> member_counts(centers.size(), 0);
  for (const auto& [member, cluster] : assignment) {
    const Vec64 row = tokens.tokens.row(member);
    for (std::size_t i = 0; i < d; ++i) {
      member_sums[cluster][i] += row[i];
    }
    member_counts[cluster] += 1;
  }
  std::vector<Vec64> fused;
  fused.reserve(centers.size());
  for (std::size_t l = 0; l < centers.size(); ++l) {
    Vec64 c = tokens.tokens.row(centers[l]);
    if (member_counts[l] > 0) {
      const double inv = 1.0 / static_cast<double>(member_counts[l]);
      for (std::size_t i = 0; i < d; ++i) {
        c[i] += member_sums[l][i] * inv;
      }
    }
    const Vec64 noise = gaussian_vec(rng, d, sigma_fuse);
    for (std::size_t i = 0; i < d; ++i) {
      c[i] += noise[i];
    }
    fused.push_back(std::move(c));
  }
  return fused;
}

// Full pruning pipeline. Output rows: [cls, dominant tokens by
// original index, fused tokens by cluster id]; always keep_k + centers_k
// + 1 rows.
template <class Rng>
PrunedTokens prune_and_fuse(const TokenSet& tokens, const AttentionStack& stack,
                            const PruneConfig& config, Rng& rng) {
  tokens.validate();
  stack.validate(tokens.count());
  config.validate(tokens.count());

  const Mat64 s_avg = aggregate_heads(stack);
  const Vec64 scores = cls_scores(s_avg, config.cls_axis);
  const std::vector<std::size_t> dominant = select_dominant(scores, config.keep_k);

  std::vector<std::size_t> non_dominant;
  for (std::size_t j = 1; j < tokens.count(); ++j) {
    if (!std::binary_search(dominant.begin(), dominant.end(), j)) {
      non_dominant.push_back(j);
    }
  }

  PrunedTokens out;
  out.dominant_indices = dominant;
  if (config.centers_k > 0) {
    out.center_indices = pick_centers(non_dominant, config.centers_k, rng);
    std::vector<std::size_t> members;
    for (std::size_t j : non_dominant) {
      if (std::find(out.center_indices.begin(), out.center_indices.end(), j) ==
          out.center_indices.end()) {
        members.push_back(j);
      }
    }
    out.cluster_assignment = assign_clusters(tokens, members, out.center_indices);
  }

  const std::size_t d = tokens.dim();
  out.tokens = Mat64(config.keep_k + config.centers_k + 1, d);
  std::size_t row = 0;
  const Vec64 cls = tokens.tokens.row(tokens.cls_index);
  std::copy(cls.begin(), cls.end(), out.tokens.values.begin());
  ++row;
  for (std::size_t j : dominant) {
    const Vec64 v = tokens.tokens.row(j);
    std::copy(v.begin(), v.end(),
              out.tokens.values.begin() + static_cast<std::ptrdiff_t>(row * d));
    ++row;
  }
  if (config.centers_k > 0) {
    const std::vector<Vec64> fused =
        fuse_clusters(tokens, out.center_indices, out.cluster_assignment,
                      config.sigma_fuse, rng);
    for (const Vec64& c : fused) {
      std::copy(c.begin(), c.end(),
                out.tokens.values.begin() + static_cast<std::ptrdiff_t>(row * d));
      ++row;
    }
  }
  return out;
}

}  // namespace dualpriv

#endif  // DUALPRIV_TOKEN_PRUNER_HPP_
