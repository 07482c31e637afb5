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

// dualpriv command-line front end.
//
// Subcommands: calibrate, train, sweep, prune-demo, attack, report.
// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
// DUALPRIV_SEED overrides the config seed; an explicit --seed flag wins
// over the environment.

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <future>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dualpriv/dualpriv.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

using dualpriv::njson;

std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> grid;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) {
      grid.push_back(std::stod(item));
    }
  }
  if (grid.empty()) {
    throw dualpriv::SchemaError("empty --grid");
  }
  return grid;
}

// Seed precedence: --seed flag, then DUALPRIV_SEED, then the config file.
// The override is applied to the raw JSON so seed-derived fields (model
// init when unpinned) are rederived by the parser.
dualpriv::RunConfig load_run_config(const std::string& path,
                                    std::optional<std::uint64_t> seed_flag) {
  njson j = dualpriv::load_json_file(path);
  if (seed_flag.has_value()) {
    j["seed"] = *seed_flag;
  } else if (const char* env = std::getenv("DUALPRIV_SEED")) {
    j["seed"] = static_cast<std::uint64_t>(std::stoull(env));
  }
  return dualpriv::run_config_from_json(j);
}

void write_run_outputs(const dualpriv::TrainOutput& out, const std::string& dir,
                       const std::string& stem) {
  std::filesystem::create_directories(dir);
  const std::string report_path = dir + "/" + stem + ".json";
  const std::string model_path = dir + "/" + stem + "_model.json";
  const std::string csv_path = dir + "/" + stem + ".csv";
  dualpriv::write_text_file(report_path, dualpriv::to_json(out.report).dump(2) + "\n");
  dualpriv::write_text_file(model_path,
                            dualpriv::to_json(out.model, out.params).dump(2) + "\n");
  dualpriv::write_text_file(
      csv_path, dualpriv::csv_header() + "\n" + dualpriv::csv_row(out.report) + "\n");
}

int cmd_calibrate(double eps, double delta, double q, long steps, double clip) {
  dualpriv::PrivacySpec spec;
  spec.epsilon = eps;
  spec.delta = delta;
  spec.sample_rate_q = q;
  spec.steps_t = steps;
  spec.clip_c = clip;
  dualpriv::SigmaResult result = dualpriv::calibrate_sigma(spec);
  njson j;
  j["sigma"] = result.sigma;
  j["achieved_epsilon"] = result.achieved_epsilon;
  j["order_used"] = result.order_used;
  std::cout << j.dump() << std::endl;
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed_flag, bool dump_data) {
  const dualpriv::RunConfig cfg = load_run_config(config_path, seed_flag);
  const dualpriv::TrainOutput out = dualpriv::train(cfg);
  write_run_outputs(out, out_dir, "report");
  if (dump_data) {
    // The training split doubles as the member set for attack runs; the
    // held-out split is the nonmember set.
    dualpriv::write_text_file(out_dir + "/members.json",
                              dualpriv::to_json(out.train_set).dump() + "\n");
    dualpriv::write_text_file(out_dir + "/nonmembers.json",
                              dualpriv::to_json(out.test_set).dump() + "\n");
  }
  std::cout << dualpriv::to_json(out.report).dump() << std::endl;
  return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& grid_csv,
              const std::string& out_dir, unsigned jobs,
              std::optional<std::uint64_t> seed_flag) {
  const dualpriv::RunConfig base = load_run_config(config_path, seed_flag);
  const std::vector<double> grid = parse_grid(grid_csv);

  std::vector<dualpriv::TrainOutput> outputs(grid.size());
  if (jobs <= 1) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      dualpriv::RunConfig cfg = base;
      cfg.step.top_k_percent = grid[i];
      outputs[i] = dualpriv::train(cfg);
    }
  } else {
    // Independent seeded runs; bounded worker pool.
    std::vector<std::future<dualpriv::TrainOutput>> futures(grid.size());
    std::size_t next = 0;
    while (next < grid.size()) {
      const std::size_t batch_end = std::min(grid.size(), next + jobs);
      for (std::size_t i = next; i < batch_end; ++i) {
        dualpriv::RunConfig cfg = base;
        cfg.step.top_k_percent = grid[i];
        futures[i] = std::async(std::launch::async,
                                [cfg]() { return dualpriv::train(cfg); });
      }
      for (std::size_t i = next; i < batch_end; ++i) {
        outputs[i] = futures[i].get();
      }
      next = batch_end;
    }
  }

  std::filesystem::create_directories(out_dir);
  std::ostringstream csv;
  csv << dualpriv::csv_header() << "\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::ostringstream stem;
    stem << "report_pk" << grid[i];
    dualpriv::write_text_file(out_dir + "/" + stem.str() + ".json",
                              dualpriv::to_json(outputs[i].report).dump(2) + "\n");
    csv << dualpriv::csv_row(outputs[i].report) << "\n";
  }
  dualpriv::write_text_file(out_dir + "/sweep.csv", csv.str());
  std::cout << "{\"runs\": " << grid.size() << ", \"csv\": \"" << out_dir
            << "/sweep.csv\"}" << std::endl;
  return kExitOk;
}

int cmd_prune_demo(const std::string& input_path, const std::string& output_path,
                   std::size_t keep_k, std::size_t centers_k, double sigma_fuse,
                   std::uint64_t seed, const std::string& cls_axis) {
  const njson j = dualpriv::load_json_file(input_path);
  dualpriv::TokenSet tokens{
      dualpriv::io_detail::matrix_from_json(
          dualpriv::io_detail::require(j, "tokens"), "tokens"),
      0};
  dualpriv::AttentionStack stack;
  for (const njson& h : dualpriv::io_detail::require(j, "heads")) {
    stack.heads.push_back(dualpriv::io_detail::matrix_from_json(h, "heads"));
  }
  dualpriv::PruneConfig cfg;
  cfg.keep_k = keep_k;
  cfg.centers_k = centers_k;
  cfg.sigma_fuse = sigma_fuse;
  if (cls_axis == "row") {
    cfg.cls_axis = dualpriv::ClsAxis::kRow;
  } else if (cls_axis == "column") {
    cfg.cls_axis = dualpriv::ClsAxis::kColumn;
  } else {
    throw dualpriv::SchemaError("unknown --cls-axis: " + cls_axis);
  }
  dualpriv::SeededRng rng(seed);
  const dualpriv::PrunedTokens pruned =
      dualpriv::prune_and_fuse(tokens, stack, cfg, rng);
  const std::string text = dualpriv::to_json(pruned).dump(2) + "\n";
  if (output_path.empty() || output_path == "-") {
    std::cout << text;
  } else {
    dualpriv::write_text_file(output_path, text);
    std::cout << "{\"tokens_out\": " << pruned.tokens.rows << "}" << std::endl;
  }
  return kExitOk;
}

int cmd_attack(const std::string& model_path, const std::string& members_path,
               const std::string& nonmembers_path, const std::string& out_path) {
  const auto [spec, params] =
      dualpriv::model_from_json(dualpriv::load_json_file(model_path));
  const dualpriv::Dataset members =
      dualpriv::dataset_from_json(dualpriv::load_json_file(members_path));
  const dualpriv::Dataset nonmembers =
      dualpriv::dataset_from_json(dualpriv::load_json_file(nonmembers_path));
  const dualpriv::MiaReport report =
      dualpriv::mia_evaluate(spec, params, members, nonmembers);
  if (!out_path.empty()) {
    dualpriv::write_text_file(out_path, dualpriv::to_json(report).dump(2) + "\n");
  }
  njson j;
  j["auc"] = report.auc;
  j["best_threshold_accuracy"] = report.best_threshold_accuracy;
  std::cout << j.dump() << std::endl;
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_path) {
  std::ostringstream csv;
  csv << dualpriv::csv_header() << "\n";
  for (const std::string& path : inputs) {
    const njson j = dualpriv::load_json_file(path);
    dualpriv::RunReport r;
    r.method = dualpriv::io_detail::require(j, "method").get<std::string>();
    r.top_k_percent = dualpriv::io_detail::require(j, "top_k_percent").get<double>();
    r.seed = dualpriv::io_detail::require(j, "seed").get<std::uint64_t>();
    r.final_test_acc =
        dualpriv::io_detail::require(j, "final_test_acc").get<double>();
    const njson& p = dualpriv::io_detail::require(j, "privacy");
    r.privacy.is_private = p.value("is_private", false);
    if (r.privacy.is_private) {
      r.privacy.target_epsilon = p.at("target_epsilon").get<double>();
    }
    csv << dualpriv::csv_row(r) << "\n";
  }
  if (out_path.empty() || out_path == "-") {
    std::cout << csv.str();
  } else {
    dualpriv::write_text_file(out_path, csv.str());
    std::cout << "{\"rows\": " << inputs.size() << "}" << std::endl;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dualpriv: differentially private optimization toolkit"};
  app.require_subcommand(1);

  // calibrate
  auto* calibrate = app.add_subcommand(
      "calibrate", "Compute the noise multiplier for a privacy budget");
  double eps = 0.0, delta = 0.0, q = 1.0, clip = 1.0;
  long steps = 1;
  calibrate->add_option("--eps", eps, "target epsilon")->required();
  calibrate->add_option("--delta", delta, "target delta")->required();
  calibrate->add_option("--q", q, "sampling rate m/N");
  calibrate->add_option("--steps", steps, "total optimizer steps");
  calibrate->add_option("--clip", clip, "clipping norm C");

  // train
  auto* train_cmd = app.add_subcommand("train", "Run one experiment config");
  std::string config_path, out_dir = "out";
  std::optional<std::uint64_t> seed_flag;
  bool dump_data = false;
  train_cmd->add_option("--config", config_path, "experiment JSON")->required();
  train_cmd->add_option("--out", out_dir, "output directory");
  train_cmd->add_option("--seed", seed_flag, "override config seed");
  train_cmd->add_flag("--dump-data", dump_data,
                      "also write members.json/nonmembers.json dataset splits");

  // sweep
  auto* sweep_cmd =
      app.add_subcommand("sweep", "Run a top-K% grid from one base config");
  std::string sweep_config, sweep_grid = "10,50,80,100", sweep_out = "out";
  unsigned jobs = 1;
  std::optional<std::uint64_t> sweep_seed;
  sweep_cmd->add_option("--config", sweep_config, "experiment JSON")->required();
  sweep_cmd->add_option("--grid", sweep_grid, "comma-separated P_K values");
  sweep_cmd->add_option("--out", sweep_out, "output directory");
  sweep_cmd->add_option("--jobs", jobs, "parallel workers");
  sweep_cmd->add_option("--seed", sweep_seed, "override config seed");

  // prune-demo
  auto* prune_cmd =
      app.add_subcommand("prune-demo", "Prune and fuse one token set");
  std::string prune_in, prune_out;
  std::size_t keep_k = 0, centers_k = 0;
  double sigma_fuse = 0.0;
  std::uint64_t prune_seed = 0;
  std::string cls_axis = "row";
  prune_cmd->add_option("--input", prune_in, "token-set JSON")->required();
  prune_cmd->add_option("--output", prune_out, "output JSON (- for stdout)");
  prune_cmd->add_option("--keep-k", keep_k, "dominant tokens kept")->required();
  prune_cmd->add_option("--centers-k", centers_k, "fusion clusters")->required();
  prune_cmd->add_option("--sigma-fuse", sigma_fuse, "fusion noise std");
  prune_cmd->add_option("--seed", prune_seed, "rng seed");
  prune_cmd->add_option("--cls-axis", cls_axis, "row|column");

  // attack
  auto* attack_cmd =
      app.add_subcommand("attack", "Loss-threshold membership inference");
  std::string model_path, members_path, nonmembers_path, attack_out;
  attack_cmd->add_option("--model", model_path, "model JSON")->required();
  attack_cmd->add_option("--members", members_path, "member dataset JSON")->required();
  attack_cmd->add_option("--nonmembers", nonmembers_path, "nonmember dataset JSON")
      ->required();
  attack_cmd->add_option("--out", attack_out, "MIA report JSON path");

  // report
  auto* report_cmd =
      app.add_subcommand("report", "Aggregate run reports into CSV");
  std::vector<std::string> report_inputs;
  std::string report_out;
  report_cmd->add_option("--inputs", report_inputs, "run report JSONs")
      ->required()
      ->expected(-1);
  report_cmd->add_option("--out", report_out, "CSV path (- for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << std::endl;
    return kExitUsage;
  }

  try {
    if (calibrate->parsed()) {
      return cmd_calibrate(eps, delta, q, steps, clip);
    }
    if (train_cmd->parsed()) {
      return cmd_train(config_path, out_dir, seed_flag, dump_data);
    }
    if (sweep_cmd->parsed()) {
      return cmd_sweep(sweep_config, sweep_grid, sweep_out, jobs, sweep_seed);
    }
    if (prune_cmd->parsed()) {
      return cmd_prune_demo(prune_in, prune_out, keep_k, centers_k, sigma_fuse,
                            prune_seed, cls_axis);
    }
    if (attack_cmd->parsed()) {
      return cmd_attack(model_path, members_path, nonmembers_path, attack_out);
    }
    if (report_cmd->parsed()) {
      return cmd_report(report_inputs, report_out);
    }
  } catch (const dualpriv::SchemaError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const std::exception& e) {
    // calibrate's unreachable-budget report is a usage problem, not a crash.
    if (calibrate->parsed()) {
      std::cerr << "calibration error: " << e.what() << std::endl;
      return kExitUsage;
    }
    std::cerr << "runtime error: " << e.what() << std::endl;
    return kExitRuntime;
  }
  return kExitUsage;
}
