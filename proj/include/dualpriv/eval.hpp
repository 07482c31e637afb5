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

#ifndef DUALPRIV_EVAL_HPP_
#define DUALPRIV_EVAL_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dualpriv/accountant.hpp"
#include "dualpriv/models.hpp"
#include "dualpriv/numeric.hpp"
#include "dualpriv/optimizers.hpp"
#include "dualpriv/token_pruner.hpp"

// Seeded training loops for the three optimizers with optional token
// pruning up front, top-K% sweeps, accuracy, and the loss-threshold
// membership-inference evaluation. Everything is deterministic under the
// run seed; wall-clock is the only nondeterministic report field.

namespace dualpriv {

enum class Method { kSgdNonprivate, kDpSgd, kDualPriv, kDpzo };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::kSgdNonprivate: return "sgd-nonprivate";
    case Method::kDpSgd: return "dpsgd";
    case Method::kDualPriv: return "dualpriv";
    case Method::kDpzo: return "dpzo";
  }
  throw std::logic_error("method_name: unknown method");
}

inline Method method_from_name(const std::string& name) {
  if (name == "sgd-nonprivate") return Method::kSgdNonprivate;
  if (name == "dpsgd") return Method::kDpSgd;
  if (name == "dualpriv") return Method::kDualPriv;
  if (name == "dpzo") return Method::kDpzo;
  throw std::invalid_argument("unknown method: " + name);
}

// Target budget as written in configs. q, T and C join it inside train()
// once the dataset geometry is known; delta <= 0 means "use 1/N".
struct PrivacyBudget {
  double epsilon = 0.0;
  double delta = 0.0;
};

struct RunConfig {
  Method method = Method::kSgdNonprivate;
  std::optional<PrivacyBudget> privacy;  // nullopt <=> nonprivate
  StepConfig step;
  std::optional<PruneConfig> prune;  // token pruning stage, or off
  bool sigma_fuse_auto = true;       // wire sigma_fuse = sigma * C / m
  ModelSpec model;
  SyntheticSpec data;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  // Per-step learning rate; null means the constant step.learning_rate.
  std::function<double(long)> lr_schedule;

  void validate() const {
    const bool wants_privacy = method != Method::kSgdNonprivate;
    if (wants_privacy != privacy.has_value()) {
      throw std::invalid_argument(
          "RunConfig: method/privacy mismatch (nonprivate <=> no budget)");
    }
    if (privacy.has_value() && !(privacy->epsilon > 0.0)) {
      throw std::invalid_argument("RunConfig: target epsilon must be positive");
    }
    data.validate();
    model.validate();
    if (step.batch_size > data.num_samples) {
      throw std::invalid_argument("RunConfig: batch larger than dataset");
    }
  }
};

// The accountant-facing slice of a run. Serialized byte-identically for
// runs whose privacy inputs coincide, whatever post-processing (masking,
// pruning) differed; that equality is itself a test.
struct PrivacyReport {
  bool is_private = false;
  double target_epsilon = std::numeric_limits<double>::infinity();
  double delta = 0.0;
  double sample_rate_q = 0.0;
  long steps = 0;
  double clip_c = 0.0;
  double sigma = 0.0;
  double epsilon_consumed = 0.0;
  double order_used = 0.0;
};

struct RunReport {
  std::string method;
  double top_k_percent = 100.0;
  std::uint64_t seed = 0;
  double final_train_acc = 0.0;
  double final_test_acc = 0.0;
  std::vector<double> loss_trajectory;          // mean minibatch loss per step
  std::vector<double> mask_fraction_per_step;   // dualpriv only
  PrivacyReport privacy;
  double sigma_fuse_used = 0.0;
  double wall_clock_sec = 0.0;
};

struct TrainOutput {
  RunReport report;
  ModelSpec model;
  ParamSet params;
  Dataset train_set;  // post-pruning view when token pruning ran
  Dataset test_set;
};

struct MiaReport {
  std::vector<double> member_scores;     // -loss: higher = more member-like
  std::vector<double> nonmember_scores;
  double auc = 0.5;
  double best_threshold_accuracy = 0.5;
};

inline double accuracy(const ModelSpec& spec, const ParamSet& params,
                       const Dataset& data) {
  data.validate();
  std::size_t correct = 0;
  for (const Sample& s : data.samples) {
    correct += predict(spec, params, s) == s.label ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.samples.size());
}

namespace detail {

// Fixed stream ids so independent randomness sources cannot collide.
constexpr std::uint64_t kShuffleStreamBase = 0x100;
constexpr std::uint64_t kNoiseStream = 0x200;
constexpr std::uint64_t kPruneStreamBase = 0x10000;

inline std::vector<std::size_t> shuffled_indices(std::size_t n, SeededRng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t j = i + rng.next_below(n - i);
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

// Replace each token sample's tokens with the pruning stage output. One
// derived stream per sample, so batches could be pruned concurrently
// without changing results.
inline Dataset prune_dataset(const Dataset& data, const PruneConfig& cfg,
                             std::uint64_t run_seed) {
  Dataset pruned = data;
  for (std::size_t i = 0; i < pruned.samples.size(); ++i) {
    Sample& s = pruned.samples[i];
    if (!s.tokens.has_value()) {
      continue;
    }
    SeededRng rng(run_seed, kPruneStreamBase + i);
    PrunedTokens out = prune_and_fuse(s.tokens->tokens, s.tokens->heads, cfg, rng);
    s.tokens->tokens = TokenSet{std::move(out.tokens), 0};
    s.tokens->heads.heads.clear();
  }
  return pruned;
}

inline PrivacyReport account_run(const std::optional<PrivacyBudget>& budget,
                                 double q, long steps, double clip_c,
                                 double sigma) {
  PrivacyReport rep;
  if (!budget.has_value()) {
    return rep;
  }
  rep.is_private = true;
  rep.target_epsilon = budget->epsilon;
  rep.delta = budget->delta;
  rep.sample_rate_q = q;
  rep.steps = steps;
  rep.clip_c = clip_c;
  rep.sigma = sigma;
  if (steps > 0) {
    const DpConversion dp =
        rdp_to_dp(compose(subsampled_gaussian_curve(q, sigma), steps),
                  budget->delta);
    rep.epsilon_consumed = dp.epsilon;
    rep.order_used = dp.order;
  }
  return rep;
}

}  // namespace detail

// Run one seeded training loop: ceil(N/m) * epochs steps of the selected
// optimizer. Private methods calibrate sigma for T = total steps and
// q = m / N before the first step; token pruning, when enabled, runs once
// over the dataset up front with sigma_fuse wired to sigma * C / m unless
// pinned explicitly.
inline TrainOutput train(const RunConfig& cfg, const Dataset& train_in,
                         const Dataset& test_in) {
  const auto t_start = std::chrono::steady_clock::now();
  cfg.validate();

  const std::size_t n = train_in.samples.size();
  const std::size_t m = cfg.step.batch_size;
  const std::size_t steps_per_epoch = (n + m - 1) / m;
  const long total_steps = static_cast<long>(steps_per_epoch * cfg.epochs);
  const double q = static_cast<double>(m) / static_cast<double>(n);

  StepConfig step_cfg = cfg.step;
  step_cfg.nonprivate = !cfg.privacy.has_value();

  std::optional<PrivacyBudget> budget = cfg.privacy;
  SigmaResult calibrated{0.0, 0.0, 0.0};
  if (budget.has_value()) {
    if (budget->delta <= 0.0) {
      budget->delta = 1.0 / static_cast<double>(n);
    }
    if (total_steps > 0) {
      PrivacySpec spec;
      spec.epsilon = budget->epsilon;
      spec.delta = budget->delta;
      spec.sample_rate_q = q;
      spec.steps_t = total_steps;
      spec.clip_c = step_cfg.clip_c;
      calibrated = calibrate_sigma(spec);
      if (cfg.method == Method::kDpzo) {
        step_cfg.noise_sigma_zo = calibrated.sigma;
      } else {
        step_cfg.noise_multiplier = calibrated.sigma;
      }
    }
  } else {
    step_cfg.noise_multiplier = 0.0;
    step_cfg.noise_sigma_zo = 0.0;
  }

  double sigma_fuse_used = 0.0;
  Dataset train_set = train_in;
  Dataset test_set = test_in;
  if (cfg.prune.has_value()) {
    PruneConfig prune_cfg = *cfg.prune;
    if (cfg.sigma_fuse_auto) {
      prune_cfg.sigma_fuse = calibrated.sigma * step_cfg.clip_c /
                             static_cast<double>(m);
    }
    sigma_fuse_used = prune_cfg.sigma_fuse;
    train_set = detail::prune_dataset(train_set, prune_cfg, cfg.seed);
    test_set = detail::prune_dataset(test_set, prune_cfg, cfg.seed);
  }

  ParamSet params = init_params(cfg.model);
  SeededRng noise_rng(cfg.seed, detail::kNoiseStream);

  RunReport report;
  report.method = method_name(cfg.method);
  report.top_k_percent = step_cfg.top_k_percent;
  report.seed = cfg.seed;
  report.loss_trajectory.reserve(static_cast<std::size_t>(total_steps));

  long step_index = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    SeededRng shuffle_rng(cfg.seed, detail::kShuffleStreamBase + epoch);
    const std::vector<std::size_t> perm = detail::shuffled_indices(n, shuffle_rng);
    for (std::size_t k = 0; k < steps_per_epoch; ++k, ++step_index) {
      // Fixed-size batches: the permutation wraps so the last batch of an
      // epoch is still exactly m samples.
      std::vector<std::size_t> batch_idx(m);
      for (std::size_t j = 0; j < m; ++j) {
        batch_idx[j] = perm[(k * m + j) % n];
      }
      try {
        if (cfg.lr_schedule) {
          step_cfg.learning_rate = cfg.lr_schedule(step_index);
        }
        double batch_loss = 0.0;
        for (std::size_t j : batch_idx) {
          batch_loss += forward_loss(cfg.model, params, train_set.samples[j]);
        }
        batch_loss /= static_cast<double>(m);
        if (!std::isfinite(batch_loss)) {
          throw std::runtime_error("non-finite loss");
        }
        report.loss_trajectory.push_back(batch_loss);

        if (cfg.method == Method::kDpzo) {
          auto loss_fn = [&](const ParamSet& theta, std::size_t i) {
            return forward_loss(cfg.model, theta, train_set.samples[batch_idx[i]]);
          };
          params = dpzo_step(params, loss_fn, m, step_cfg, noise_rng);
        } else {
          GradBatch batch;
          batch.clip_c = step_cfg.clip_c;
          batch.per_sample.reserve(m);
          for (std::size_t j : batch_idx) {
            batch.per_sample.push_back(
                per_sample_grad(cfg.model, params, train_set.samples[j]));
          }
          if (cfg.method == Method::kDualPriv) {
            auto [next, mask] = dual_priv_step(params, batch, step_cfg, noise_rng);
            params = std::move(next);
            report.mask_fraction_per_step.push_back(
                static_cast<double>(mask.set_count()) /
                static_cast<double>(mask.block_flags.size()));
          } else {
            params = dp_sgd_step(params, batch, step_cfg, noise_rng);
          }
        }
      } catch (const std::exception& e) {
        throw std::runtime_error("train: failure at step " +
                                 std::to_string(step_index) + ": " + e.what());
      }
    }
  }

  report.privacy = detail::account_run(budget, q, total_steps, step_cfg.clip_c,
                                       budget.has_value() && cfg.method == Method::kDpzo
                                           ? step_cfg.noise_sigma_zo
                                           : step_cfg.noise_multiplier);
  if (report.privacy.is_private &&
      report.privacy.epsilon_consumed > report.privacy.target_epsilon + 1e-6) {
    throw std::runtime_error("train: accountant exceeded the configured budget");
  }
  report.sigma_fuse_used = sigma_fuse_used;
  report.final_train_acc = accuracy(cfg.model, params, train_set);
  report.final_test_acc = accuracy(cfg.model, params, test_set);
  report.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();

  TrainOutput out;
  out.report = std::move(report);
  out.model = cfg.model;
  out.params = std::move(params);
  out.train_set = std::move(train_set);
  out.test_set = std::move(test_set);
  return out;
}

// Synthesize train and test sets from the config's data spec, then train.
// The test split is a fresh draw from the same generative process: it
// shares the seed (and so the class structure) and differs only in its
// split id.
inline TrainOutput train(const RunConfig& cfg) {
  const Dataset train_set = make_synthetic(cfg.data);
  SyntheticSpec test_spec = cfg.data;
  test_spec.split_id = cfg.data.split_id + 1;
  const Dataset test_set = make_synthetic(test_spec);
  return train(cfg, train_set, test_set);
}

// One seeded run per top-K% value, everything else (including the seed)
// held fixed.
inline std::vector<TrainOutput> sweep_topk(const RunConfig& base,
                                           const std::vector<double>& grid) {
  if (grid.empty()) {
    throw std::invalid_argument("sweep_topk: empty grid");
  }
  std::vector<TrainOutput> outputs;
  outputs.reserve(grid.size());
  for (double pk : grid) {
    RunConfig cfg = base;
    cfg.step.top_k_percent = pk;
    outputs.push_back(train(cfg));
  }
  return outputs;
}

// Loss-threshold membership inference: score every sample by -loss and
// summarize separability by the Mann-Whitney AUC (ties count half).
inline MiaReport mia_evaluate(const ModelSpec& spec, const ParamSet& params,
                              const Dataset& members, const Dataset& nonmembers) {
  members.validate();
  nonmembers.validate();
  MiaReport rep;
  rep.member_scores.reserve(members.samples.size());
  for (const Sample& s : members.samples) {
    rep.member_scores.push_back(-forward_loss(spec, params, s));
  }
  rep.nonmember_scores.reserve(nonmembers.samples.size());
  for (const Sample& s : nonmembers.samples) {
    rep.nonmember_scores.push_back(-forward_loss(spec, params, s));
  }

  double wins = 0.0;
  for (double sm : rep.member_scores) {
    for (double sn : rep.nonmember_scores) {
      if (sm > sn) {
        wins += 1.0;
      } else if (sm == sn) {
        wins += 0.5;
      }
    }
  }
  rep.auc = wins / (static_cast<double>(rep.member_scores.size()) *
                    static_cast<double>(rep.nonmember_scores.size()));

  // Best accuracy over thresholds of the rule "member iff score >= t".
  std::vector<double> thresholds = rep.member_scores;
  thresholds.insert(thresholds.end(), rep.nonmember_scores.begin(),
                    rep.nonmember_scores.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());
  const double total = static_cast<double>(rep.member_scores.size() +
                                           rep.nonmember_scores.size());
  double best = 0.0;
  for (double t : thresholds) {
    std::size_t correct = 0;
    for (double sm : rep.member_scores) {
      correct += sm >= t ? 1 : 0;
    }
    for (double sn : rep.nonmember_scores) {
      correct += sn < t ? 1 : 0;
    }
    best = std::max(best, static_cast<double>(correct) / total);
  }
  rep.best_threshold_accuracy = best;
  return rep;
}

}  // namespace dualpriv

#endif  // DUALPRIV_EVAL_HPP_
