// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stepwise/io.hpp"
#include "stepwise/reward_model.hpp"
#include "stepwise/verifier.hpp"

namespace stepwise {

// End-to-end run: generate -> sample -> annotate -> train -> verify ->
// rl-demo. Every stage writes one artifact stamped with the config hash and
// is skipped when that artifact already exists with a matching stamp.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "run";

  // synthetic task
  int depth = 4;
  std::int64_t value_lo = 1;
  std::int64_t value_hi = 9;
  std::string ops = "+-";
  int train_problems = 200;
  int test_problems = 100;

  // generation / annotation
  double generator_error_rate = 0.3;
  int samples_per_problem = 15;   // training solutions per problem
  int candidates_per_problem = 64;
  double completer_error_rate = 0.3;
  int n_rollouts = 8;             // N
  LabelSource estimator = LabelSource::hard;

  // reward model
  double learning_rate = 0.1;
  int epochs = 5;
  double l2 = 1e-6;
  std::size_t feature_dim = kDefaultFeatureDim;

  // verification
  std::vector<std::string> strategies = {"sc", "orm", "prm", "sc+prm"};
  std::vector<int> n_grid = {1, 4, 16, 64};
  int trials = 3;

  // rl demo
  bool rl_enabled = false;
  int rl_iterations = 60;
  int rl_episodes_per_iteration = 32;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& value);
};

struct RunReport {
  nlohmann::json body;
};

Strategy strategy_from_name(const std::string& name, RewardMode model_mode);

// Runs all stages; each failure is rethrown tagged with the stage name and
// already-produced artifacts are left in place. Rerunning with the same
// config recomputes nothing and returns an identical report.
RunReport run_pipeline(const RunConfig& config);

}  // namespace stepwise
