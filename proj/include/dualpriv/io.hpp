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

#ifndef DUALPRIV_IO_HPP_
#define DUALPRIV_IO_HPP_

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dualpriv/eval.hpp"
#include "dualpriv/models.hpp"
#include "dualpriv/numeric.hpp"
#include "dualpriv/optimizers.hpp"
#include "dualpriv/token_pruner.hpp"

// JSON file formats (versioned, insertion-ordered so identical state
// serializes to identical bytes) and the CSV row export for sweep tables.
// Schemas are documented in the README.

namespace dualpriv {

using njson = nlohmann::ordered_json;

constexpr int kSchemaVersion = 1;

// Thrown on malformed input files; the CLI maps it to the usage/config
// exit code.
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

namespace io_detail {

inline const njson& require(const njson& j, const std::string& key) {
  if (!j.contains(key)) {
    throw SchemaError("missing required key: " + key);
  }
  return j.at(key);
}

inline njson matrix_to_json(const Mat64& m) {
  njson rows = njson::array();
  for (std::size_t r = 0; r < m.rows; ++r) {
    rows.push_back(m.row(r));
  }
  return rows;
}

inline Mat64 matrix_from_json(const njson& j, const char* what) {
  if (!j.is_array() || j.empty()) {
    throw SchemaError(std::string(what) + ": expected a nonempty 2-d array");
  }
  const std::size_t rows = j.size();
  const std::size_t cols = j.front().size();
  Mat64 m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) {
      throw SchemaError(std::string(what) + ": ragged rows");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      m.at(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

}  // namespace io_detail

// --------------------------------------------------------------------------
// Datasets: {"schema_version", "kind", "seed", "num_classes", "samples":
// [{"features": [...] | "tokens": [[...]] (+ optional "heads"), "label"}]}

inline njson to_json(const Dataset& d) {
  njson j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = d.kind;
  j["seed"] = d.seed;
  j["num_classes"] = d.num_classes;
  njson samples = njson::array();
  for (const Sample& s : d.samples) {
    njson js;
    if (s.tokens.has_value()) {
      js["tokens"] = io_detail::matrix_to_json(s.tokens->tokens.tokens);
      if (!s.tokens->heads.heads.empty()) {
        njson heads = njson::array();
        for (const Mat64& h : s.tokens->heads.heads) {
          heads.push_back(io_detail::matrix_to_json(h));
        }
        js["heads"] = std::move(heads);
      }
    } else {
      js["features"] = s.features;
    }
    js["label"] = s.label;
    samples.push_back(std::move(js));
  }
  j["samples"] = std::move(samples);
  return j;
}

inline Dataset dataset_from_json(const njson& j) {
  Dataset d;
  d.kind = io_detail::require(j, "kind").get<std::string>();
  d.seed = io_detail::require(j, "seed").get<std::uint64_t>();
  d.num_classes = io_detail::require(j, "num_classes").get<std::size_t>();
  for (const njson& js : io_detail::require(j, "samples")) {
    Sample s;
    s.label = io_detail::require(js, "label").get<int>();
    if (js.contains("tokens")) {
      TokenInput ti;
      ti.tokens = TokenSet{io_detail::matrix_from_json(js.at("tokens"), "tokens"), 0};
      if (js.contains("heads")) {
        for (const njson& h : js.at("heads")) {
          ti.heads.heads.push_back(io_detail::matrix_from_json(h, "heads"));
        }
      }
      s.tokens = std::move(ti);
    } else if (js.contains("features")) {
      s.features = js.at("features").get<Vec64>();
    } else {
      throw SchemaError("sample needs either \"features\" or \"tokens\"");
    }
    d.samples.push_back(std::move(s));
  }
  d.validate();
  return d;
}

// --------------------------------------------------------------------------
// Pruned tokens (prune-demo output).

inline njson to_json(const PrunedTokens& p) {
  njson j;
  j["schema_version"] = kSchemaVersion;
  j["tokens"] = io_detail::matrix_to_json(p.tokens);
  j["dominant_indices"] = p.dominant_indices;
  j["center_indices"] = p.center_indices;
  njson assignment = njson::array();
  for (const auto& [member, cluster] : p.cluster_assignment) {
    assignment.push_back(njson::array({member, cluster}));
  }
  j["cluster_assignment"] = std::move(assignment);
  return j;
}

// --------------------------------------------------------------------------
// Models: spec + named parameter blocks.

inline std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kLinear: return "linear";
    case ModelKind::kMlp: return "mlp";
    case ModelKind::kTokenPool: return "token-pool";
  }
  throw std::logic_error("unknown model kind");
}

inline ModelKind model_kind_from_name(const std::string& name) {
  if (name == "linear") return ModelKind::kLinear;
  if (name == "mlp") return ModelKind::kMlp;
  if (name == "token-pool") return ModelKind::kTokenPool;
  throw SchemaError("unknown model kind: " + name);
}

inline njson to_json(const ModelSpec& spec) {
  njson j;
  j["kind"] = model_kind_name(spec.kind);
  j["input_dim"] = spec.input_dim;
  j["hidden_dim"] = spec.hidden_dim;
  j["num_classes"] = spec.num_classes;
  j["init_seed"] = spec.init_seed;
  j["block_policy"] =
      spec.block_policy == BlockPolicy::kPerTensor ? "per-tensor" : "per-row";
  return j;
}

inline ModelSpec model_spec_from_json(const njson& j) {
  ModelSpec spec;
  spec.kind = model_kind_from_name(io_detail::require(j, "kind").get<std::string>());
  spec.input_dim = io_detail::require(j, "input_dim").get<std::size_t>();
  spec.hidden_dim = j.value("hidden_dim", std::size_t{0});
  spec.num_classes = io_detail::require(j, "num_classes").get<std::size_t>();
  spec.init_seed = j.value("init_seed", std::uint64_t{0});
  const std::string policy = j.value("block_policy", std::string("per-tensor"));
  if (policy == "per-tensor") {
    spec.block_policy = BlockPolicy::kPerTensor;
  } else if (policy == "per-row") {
    spec.block_policy = BlockPolicy::kPerRow;
  } else {
    throw SchemaError("unknown block_policy: " + policy);
  }
  spec.validate();
  return spec;
}

inline njson to_json(const ModelSpec& spec, const ParamSet& params) {
  njson j;
  j["schema_version"] = kSchemaVersion;
  j["model"] = to_json(spec);
  njson blocks = njson::array();
  for (const ParamBlock& b : params.blocks) {
    njson jb;
    jb["name"] = b.name;
    jb["values"] = b.values;
    blocks.push_back(std::move(jb));
  }
  j["params"] = std::move(blocks);
  return j;
}

inline std::pair<ModelSpec, ParamSet> model_from_json(const njson& j) {
  const ModelSpec spec = model_spec_from_json(io_detail::require(j, "model"));
  ParamSet params;
  for (const njson& jb : io_detail::require(j, "params")) {
    params.blocks.push_back({io_detail::require(jb, "name").get<std::string>(),
                             io_detail::require(jb, "values").get<Vec64>()});
  }
  params.validate();
  return {spec, params};
}

// --------------------------------------------------------------------------
// Reports.

inline njson to_json(const PrivacyReport& p) {
  njson j;
  j["is_private"] = p.is_private;
  if (p.is_private) {
    j["target_epsilon"] = p.target_epsilon;
    j["delta"] = p.delta;
    j["sample_rate_q"] = p.sample_rate_q;
    j["steps"] = p.steps;
    j["clip_c"] = p.clip_c;
    j["sigma"] = p.sigma;
    j["epsilon_consumed"] = p.epsilon_consumed;
    j["order_used"] = p.order_used;
  } else {
    j["target_epsilon"] = nullptr;
    j["epsilon_consumed"] = nullptr;
  }
  return j;
}

inline njson to_json(const RunReport& r, bool include_wall_clock = true) {
  njson j;
  j["schema_version"] = kSchemaVersion;
  j["method"] = r.method;
  j["top_k_percent"] = r.top_k_percent;
  j["seed"] = r.seed;
  j["final_train_acc"] = r.final_train_acc;
  j["final_test_acc"] = r.final_test_acc;
  j["loss_trajectory"] = r.loss_trajectory;
  j["mask_fraction_per_step"] = r.mask_fraction_per_step;
  j["privacy"] = to_json(r.privacy);
  j["sigma_fuse_used"] = r.sigma_fuse_used;
  if (include_wall_clock) {
    j["wall_clock_sec"] = r.wall_clock_sec;
  }
  return j;
}

inline njson to_json(const MiaReport& r) {
  njson j;
  j["schema_version"] = kSchemaVersion;
  j["member_scores"] = r.member_scores;
  j["nonmember_scores"] = r.nonmember_scores;
  j["auc"] = r.auc;
  j["best_threshold_accuracy"] = r.best_threshold_accuracy;
  return j;
}

// CSV row export for sweep tables.
inline std::string csv_header() {
  return "method,eps,P_K,seed,final_test_acc,auc";
}

inline std::string csv_row(const RunReport& r, double auc = std::nan("")) {
  std::ostringstream os;
  os << r.method << ',';
  if (r.privacy.is_private) {
    os << r.privacy.target_epsilon;
  } else {
    os << "inf";
  }
  os << ',' << r.top_k_percent << ',' << r.seed << ',' << r.final_test_acc << ',';
  if (!std::isnan(auc)) {
    os << auc;
  }
  return os.str();
}

// --------------------------------------------------------------------------
// Run configs (the experiment file the CLI consumes).

inline SyntheticSpec synthetic_spec_from_json(const njson& j) {
  SyntheticSpec spec;
  spec.kind = io_detail::require(j, "kind").get<std::string>();
  spec.num_samples = io_detail::require(j, "num_samples").get<std::size_t>();
  spec.num_classes = j.value("num_classes", std::size_t{2});
  spec.seed = j.value("seed", std::uint64_t{0});
  spec.split_id = j.value("split_id", std::uint64_t{0});
  spec.feature_dim = j.value("feature_dim", std::size_t{10});
  spec.separation = j.value("separation", 10.0);
  spec.num_tokens = j.value("num_tokens", std::size_t{16});
  spec.token_dim = j.value("token_dim", std::size_t{8});
  spec.planted_tokens = j.value("planted_tokens", std::size_t{3});
  spec.num_heads = j.value("num_heads", std::size_t{2});
  spec.validate();
  return spec;
}

inline njson to_json(const SyntheticSpec& s) {
  njson j;
  j["kind"] = s.kind;
  j["num_samples"] = s.num_samples;
  j["num_classes"] = s.num_classes;
  j["seed"] = s.seed;
  if (s.kind == "gauss-blobs") {
    j["feature_dim"] = s.feature_dim;
    j["separation"] = s.separation;
  } else {
    j["separation"] = s.separation;
    j["num_tokens"] = s.num_tokens;
    j["token_dim"] = s.token_dim;
    j["planted_tokens"] = s.planted_tokens;
    j["num_heads"] = s.num_heads;
  }
  return j;
}

inline RunConfig run_config_from_json(const njson& j) {
  RunConfig cfg;
  cfg.method = method_from_name(io_detail::require(j, "method").get<std::string>());
  if (j.contains("privacy") && !j.at("privacy").is_null()) {
    const njson& p = j.at("privacy");
    PrivacyBudget budget;
    budget.epsilon = io_detail::require(p, "epsilon").get<double>();
    // delta missing or <= 0 means "use 1/N".
    budget.delta = p.value("delta", -1.0);
    cfg.privacy = budget;
  }
  const njson& st = io_detail::require(j, "step");
  cfg.step.learning_rate = io_detail::require(st, "learning_rate").get<double>();
  cfg.step.clip_c = st.value("clip_c", 1.0);
  cfg.step.batch_size = io_detail::require(st, "batch_size").get<std::size_t>();
  cfg.step.top_k_percent = st.value("top_k_percent", 100.0);
  if (j.contains("dpzo")) {
    const njson& z = j.at("dpzo");
    cfg.step.perturb_phi = z.value("perturb_phi", 0.15);
    cfg.step.clip_c_zo = z.value("clip_c_zo", 1.0);
  }
  if (j.contains("prune") && !j.at("prune").is_null()) {
    const njson& pr = j.at("prune");
    PruneConfig prune;
    prune.keep_k = io_detail::require(pr, "keep_k").get<std::size_t>();
    prune.centers_k = io_detail::require(pr, "centers_k").get<std::size_t>();
    if (pr.contains("sigma_fuse") && pr.at("sigma_fuse").is_number()) {
      prune.sigma_fuse = pr.at("sigma_fuse").get<double>();
      cfg.sigma_fuse_auto = false;
    } else {
      cfg.sigma_fuse_auto = true;  // "auto" or absent
    }
    const std::string axis = pr.value("cls_axis", std::string("row"));
    if (axis == "row") {
      prune.cls_axis = ClsAxis::kRow;
    } else if (axis == "column") {
      prune.cls_axis = ClsAxis::kColumn;
    } else {
      throw SchemaError("unknown cls_axis: " + axis);
    }
    cfg.prune = prune;
  }
  cfg.model = model_spec_from_json(io_detail::require(j, "model"));
  cfg.data = synthetic_spec_from_json(io_detail::require(j, "data"));
  cfg.epochs = j.value("epochs", std::size_t{1});
  cfg.seed = j.value("seed", std::uint64_t{0});
  if (!io_detail::require(j, "model").contains("init_seed")) {
    // Derive the init seed from the run seed when not pinned.
    cfg.model.init_seed = splitmix64(cfg.seed ^ 0xC0FFEEull);
  }
  cfg.validate();
  return cfg;
}

// --------------------------------------------------------------------------
// File helpers.

inline njson load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw SchemaError("cannot open file: " + path);
  }
  try {
    njson j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("malformed JSON in " + path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write file: " + path);
  }
  out << text;
}

}  // namespace dualpriv

#endif  // DUALPRIV_IO_HPP_
