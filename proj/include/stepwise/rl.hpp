// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stepwise/reward_model.hpp"
#include "stepwise/synth.hpp"

namespace stepwise {

inline constexpr int kNumActions = 4;
inline constexpr int kPolicyFeatureCount = 3;

using ActionFeatures = std::array<double, kPolicyFeatureCount>;

// Step-wise generation environment over a synthetic chain problem. Each
// step the agent picks the next intermediate result from a small menu (the
// exact value plus positive-offset distractors, in a per-state order), the
// step text is appended, and the episode ends when the answer marker is
// emitted or the horizon is reached.
class StepEnv {
 public:
  StepEnv(Problem problem, int horizon);

  struct ActionSet {
    std::vector<std::int64_t> results;        // size kNumActions
    std::vector<ActionFeatures> features;     // per action
  };

  bool done() const { return done_; }
  int steps_taken() const { return static_cast<int>(steps_.size()); }
  ActionSet actions() const;
  void apply(int action);

  const Problem& problem() const { return problem_; }
  Solution to_solution() const;
  bool success() const;

 private:
  Problem problem_;
  Chain chain_;
  int horizon_;
  std::int64_t state_;
  std::vector<Step> steps_;
  bool done_ = false;
};

// Softmax policy, linear in per-action features.
struct Policy {
  std::array<double, kPolicyFeatureCount> weights{};

  bool operator==(const Policy&) const = default;
};

std::vector<double> action_logits(const Policy& policy,
                                  const StepEnv::ActionSet& actions);
// probabilities sum to 1 within 1e-9
std::vector<double> action_probs(const Policy& policy,
                                 const StepEnv::ActionSet& actions);

// ======================== Rewards ========================

// PRM score of the prefix ending at the just-completed step; emitted once
// per step, no extra terminal bonus.
double step_reward(const RewardModel& prm, const Problem& problem,
                   std::string_view prefix_after_step);

// Single terminal reward from the ORM; zero elsewhere.
double outcome_reward(const RewardModel& orm, const Problem& problem,
                      const Solution& full_solution);

// Per-step reward stream for one finished episode.
using RewardFn =
    std::function<std::vector<double>(const Problem&, const Solution&)>;

RewardFn make_step_reward_fn(RewardModel prm);
RewardFn make_outcome_reward_fn(RewardModel orm);

// ======================== PPO ========================

struct PPOConfig {
  double clip_epsilon = 0.2;
  double kl_coefficient = 0.04;
  double discount = 1.0;
  double gae_lambda = 0.95;
  double learning_rate = 0.1;
  int iterations = 100;
  int episodes_per_iteration = 64;
  int inner_epochs = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

// One visited state with everything the surrogate needs.
struct StepSample {
  std::vector<ActionFeatures> features;  // all actions
  int action = 0;
  double old_prob = 0.0;                 // collection-time pi(a|s)
  std::vector<double> ref_probs;         // frozen reference pi(.|s)
  double advantage = 0.0;
};

struct FrozenBatch {
  std::vector<StepSample> samples;
};

// Clipped-surrogate PPO loss with a KL penalty against the reference
// policy, averaged over the batch. Minimized.
double surrogate_objective(const Policy& policy, const FrozenBatch& batch,
                           const PPOConfig& config);
std::array<double, kPolicyFeatureCount> surrogate_gradient(
    const Policy& policy, const FrozenBatch& batch, const PPOConfig& config);

// KL(pi_theta(.|s) || pi_ref(.|s)) averaged over batch states.
double mean_kl(const Policy& policy, const FrozenBatch& batch);

struct PPOTrace {
  struct Iteration {
    double mean_success = 0.0;  // sampled episodes hitting the gold answer
    double mean_reward = 0.0;
    double mean_kl = 0.0;       // vs the frozen reference, after the update
    double loss = 0.0;          // surrogate after the update
  };
  std::vector<Iteration> iterations;
};

using EnvFactory = std::function<StepEnv(std::uint64_t episode_seed)>;

EnvFactory make_synth_env_factory(std::vector<Problem> problems, int horizon);

// Step-by-step PPO: collects episodes, computes GAE(lambda) advantages from
// the chosen reward stream over a per-step-index empirical-mean baseline,
// then takes inner_epochs descent steps on the surrogate per iteration.
Policy train_ppo(Policy policy, const EnvFactory& env_factory,
                 const RewardFn& reward_fn, const PPOConfig& config,
                 PPOTrace* trace = nullptr);

// Fraction of episodes whose greedy (argmax) decoding reaches the gold
// answer.
double greedy_success_rate(const Policy& policy, const EnvFactory& env_factory,
                           int episodes, std::uint64_t seed);

}  // namespace stepwise
