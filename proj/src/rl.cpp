// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#include "stepwise/rl.hpp"

#include <algorithm>
#include <cmath>

namespace stepwise {

namespace {

constexpr std::int64_t kMenuOffsets[kNumActions] = {0, 1, 2, 3};

}  // namespace

StepEnv::StepEnv(Problem problem, int horizon)
    : problem_(std::move(problem)), horizon_(horizon) {
  if (horizon < 1) throw Error("StepEnv: horizon must be >= 1");
  auto chain = parse_chain(problem_.question);
  if (!chain)
    throw Error("StepEnv: question is not a synthetic chain: " + problem_.id);
  chain_ = std::move(*chain);
  state_ = chain_.start;
}

StepEnv::ActionSet StepEnv::actions() const {
  if (done_) throw Error("StepEnv::actions called on a finished episode");
  const int k = steps_taken();
  const std::int64_t exact = chain_.apply(k, state_);

  // per-state menu order, so "pick index 0" is never a shortcut
  std::array<int, kNumActions> perm{0, 1, 2, 3};
  SplitMix64 rng(derive_seed(fnv1a64(problem_.id), "menu",
                             static_cast<std::uint64_t>(k)));
  for (int i = kNumActions; i > 1; --i) {
    int j = static_cast<int>(rng.uniform_int(0, i - 1));
    std::swap(perm[static_cast<std::size_t>(i - 1)],
              perm[static_cast<std::size_t>(j)]);
  }

  ActionSet set;
  set.results.reserve(kNumActions);
  set.features.reserve(kNumActions);
  for (int a = 0; a < kNumActions; ++a) {
    std::int64_t offset = kMenuOffsets[perm[static_cast<std::size_t>(a)]];
    std::int64_t result = exact + offset;
    set.results.push_back(result);
    set.features.push_back(ActionFeatures{
        offset == 0 ? 1.0 : 0.0,
        static_cast<double>(offset) / 3.0,
        result % 2 == 0 ? 1.0 : 0.0,
    });
  }
  return set;
}

void StepEnv::apply(int action) {
  if (done_) throw Error("StepEnv::apply called on a finished episode");
  if (action < 0 || action >= kNumActions)
    throw IndexOutOfRange("StepEnv::apply: bad action " +
                          std::to_string(action));
  ActionSet set = actions();
  const int k = steps_taken();
  const Chain::Link& link = chain_.links[static_cast<std::size_t>(k)];
  std::int64_t result = set.results[static_cast<std::size_t>(action)];

  std::string text = std::to_string(state_) + " " + link.op + " " +
                     std::to_string(link.operand) + " = " +
                     std::to_string(result) + ".";
  state_ = result;
  bool terminal = k + 1 == chain_.depth();
  if (terminal) text += "\n" + answer_marker_line(std::to_string(state_));
  steps_.push_back(Step{k + 1, std::move(text)});
  done_ = terminal || steps_taken() >= horizon_;
}

Solution StepEnv::to_solution() const {
  Solution solution;
  solution.problem_id = problem_.id;
  solution.solution_id = problem_.id + "-episode";
  solution.steps = steps_;
  if (!steps_.empty())
    solution.answer = extract_answer_marker(steps_.back().text);
  return solution;
}

bool StepEnv::success() const {
  Solution solution = to_solution();
  return solution.answer &&
         answers_match(*solution.answer, problem_.gold_answer);
}

std::vector<double> action_logits(const Policy& policy,
                                  const StepEnv::ActionSet& actions) {
  std::vector<double> logits;
  logits.reserve(actions.features.size());
  for (const ActionFeatures& f : actions.features) {
    double z = 0.0;
    for (int d = 0; d < kPolicyFeatureCount; ++d)
      z += policy.weights[static_cast<std::size_t>(d)] *
           f[static_cast<std::size_t>(d)];
    logits.push_back(z);
  }
  return logits;
}

namespace {

std::vector<double> softmax(const std::vector<double>& logits) {
  double max_logit = *std::max_element(logits.begin(), logits.end());
  std::vector<double> probs(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - max_logit);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  return probs;
}

std::vector<double> probs_for(const Policy& policy,
                              const std::vector<ActionFeatures>& features) {
  std::vector<double> logits;
  logits.reserve(features.size());
  for (const ActionFeatures& f : features) {
    double z = 0.0;
    for (int d = 0; d < kPolicyFeatureCount; ++d)
      z += policy.weights[static_cast<std::size_t>(d)] *
           f[static_cast<std::size_t>(d)];
    logits.push_back(z);
  }
  return softmax(logits);
}

}  // namespace

std::vector<double> action_probs(const Policy& policy,
                                 const StepEnv::ActionSet& actions) {
  return softmax(action_logits(policy, actions));
}

// ======================== Rewards ========================

double step_reward(const RewardModel& prm, const Problem& problem,
                   std::string_view prefix_after_step) {
  if (prm.mode != RewardMode::prm)
    throw Error("step_reward requires a PRM-mode model");
  return score_prefix(prm, problem, prefix_after_step);
}

double outcome_reward(const RewardModel& orm, const Problem& problem,
                      const Solution& full_solution) {
  return score_solution(orm, problem, full_solution);
}

RewardFn make_step_reward_fn(RewardModel prm) {
  return [prm = std::move(prm)](const Problem& problem,
                                const Solution& solution) {
    std::vector<double> rewards;
    rewards.reserve(solution.steps.size());
    for (int i = 1; i <= static_cast<int>(solution.steps.size()); ++i)
      rewards.push_back(
          step_reward(prm, problem, step_prefix(solution, i)));
    return rewards;
  };
}

RewardFn make_outcome_reward_fn(RewardModel orm) {
  return [orm = std::move(orm)](const Problem& problem,
                                const Solution& solution) {
    std::vector<double> rewards(solution.steps.size(), 0.0);
    if (!rewards.empty())
      rewards.back() = outcome_reward(orm, problem, solution);
    return rewards;
  };
}

// ======================== PPO ========================

void PPOConfig::validate() const {
  if (clip_epsilon <= 0) throw Error("PPOConfig: clip_epsilon must be > 0");
  if (kl_coefficient < 0) throw Error("PPOConfig: kl_coefficient must be >= 0");
  if (discount <= 0 || discount > 1)
    throw Error("PPOConfig: discount must be in (0,1]");
  if (iterations < 1 || episodes_per_iteration < 1 || inner_epochs < 1)
    throw Error("PPOConfig: counts must be >= 1");
}

double surrogate_objective(const Policy& policy, const FrozenBatch& batch,
                           const PPOConfig& config) {
  if (batch.samples.empty()) return 0.0;
  double total = 0.0;
  for (const StepSample& s : batch.samples) {
    std::vector<double> probs = probs_for(policy, s.features);
    double ratio = probs[static_cast<std::size_t>(s.action)] / s.old_prob;
    double unclipped = ratio * s.advantage;
    double clipped = std::clamp(ratio, 1.0 - config.clip_epsilon,
                                1.0 + config.clip_epsilon) *
                     s.advantage;
    total += -std::min(unclipped, clipped);

    if (config.kl_coefficient > 0.0) {
      double kl = 0.0;
      for (std::size_t a = 0; a < probs.size(); ++a)
        kl += probs[a] * std::log(probs[a] / s.ref_probs[a]);
      total += config.kl_coefficient * kl;
    }
  }
  return total / static_cast<double>(batch.samples.size());
}

std::array<double, kPolicyFeatureCount> surrogate_gradient(
    const Policy& policy, const FrozenBatch& batch, const PPOConfig& config) {
  std::array<double, kPolicyFeatureCount> grad{};
  if (batch.samples.empty()) return grad;

  for (const StepSample& s : batch.samples) {
    std::vector<double> probs = probs_for(policy, s.features);

    ActionFeatures mean_features{};
    for (std::size_t a = 0; a < probs.size(); ++a)
      for (int d = 0; d < kPolicyFeatureCount; ++d)
        mean_features[static_cast<std::size_t>(d)] +=
            probs[a] * s.features[a][static_cast<std::size_t>(d)];

    double p_a = probs[static_cast<std::size_t>(s.action)];
    double ratio = p_a / s.old_prob;
    double unclipped = ratio * s.advantage;
    double clipped = std::clamp(ratio, 1.0 - config.clip_epsilon,
                                1.0 + config.clip_epsilon) *
                     s.advantage;
    // d ratio / d theta = ratio * (phi_a - mean phi); zero when the clipped
    // branch is active outside the trust region
    if (unclipped <= clipped) {
      for (int d = 0; d < kPolicyFeatureCount; ++d)
        grad[static_cast<std::size_t>(d)] +=
            -s.advantage * ratio *
            (s.features[static_cast<std::size_t>(s.action)]
                        [static_cast<std::size_t>(d)] -
             mean_features[static_cast<std::size_t>(d)]);
    }

    if (config.kl_coefficient > 0.0) {
      for (std::size_t a = 0; a < probs.size(); ++a) {
        double log_ratio = std::log(probs[a] / s.ref_probs[a]);
        for (int d = 0; d < kPolicyFeatureCount; ++d)
          grad[static_cast<std::size_t>(d)] +=
              config.kl_coefficient * probs[a] * log_ratio *
              (s.features[a][static_cast<std::size_t>(d)] -
               mean_features[static_cast<std::size_t>(d)]);
      }
    }
  }
  for (double& g : grad) g /= static_cast<double>(batch.samples.size());
  return grad;
}

double mean_kl(const Policy& policy, const FrozenBatch& batch) {
  if (batch.samples.empty()) return 0.0;
  double total = 0.0;
  for (const StepSample& s : batch.samples) {
    std::vector<double> probs = probs_for(policy, s.features);
    for (std::size_t a = 0; a < probs.size(); ++a)
      total += probs[a] * std::log(probs[a] / s.ref_probs[a]);
  }
  return total / static_cast<double>(batch.samples.size());
}

EnvFactory make_synth_env_factory(std::vector<Problem> problems, int horizon) {
  if (problems.empty()) throw Error("env factory needs at least one problem");
  return [problems = std::move(problems), horizon](std::uint64_t seed) {
    SplitMix64 rng(hash_mix(seed, 0x656e76));
    std::size_t index = static_cast<std::size_t>(rng.next() % problems.size());
    return StepEnv(problems[index], horizon);
  };
}

namespace {

struct EpisodeData {
  std::vector<StepSample> samples;  // advantage unfilled
  std::vector<double> rewards;
  bool success = false;
};

EpisodeData collect_episode(const Policy& policy, const Policy& reference,
                            StepEnv& env, const RewardFn& reward_fn,
                            SplitMix64& rng) {
  EpisodeData episode;
  while (!env.done()) {
    StepEnv::ActionSet set = env.actions();
    std::vector<double> probs = probs_for(policy, set.features);

    double u = rng.uniform();
    int action = 0;
    double acc = 0.0;
    for (std::size_t a = 0; a < probs.size(); ++a) {
      acc += probs[a];
      if (u < acc) {
        action = static_cast<int>(a);
        break;
      }
      action = static_cast<int>(a);  // fp slack falls through to the last
    }

    StepSample sample;
    sample.features = set.features;
    sample.action = action;
    sample.old_prob = probs[static_cast<std::size_t>(action)];
    sample.ref_probs = probs_for(reference, set.features);
    episode.samples.push_back(std::move(sample));
    env.apply(action);
  }
  Solution solution = env.to_solution();
  episode.rewards = reward_fn(env.problem(), solution);
  if (episode.rewards.size() != episode.samples.size())
    throw Error("reward stream length mismatch");
  episode.success = env.success();
  return episode;
}

}  // namespace

Policy train_ppo(Policy policy, const EnvFactory& env_factory,
                 const RewardFn& reward_fn, const PPOConfig& config,
                 PPOTrace* trace) {
  config.validate();
  const Policy reference = policy;  // frozen KL anchor

  for (int iter = 0; iter < config.iterations; ++iter) {
    std::vector<EpisodeData> episodes;
    episodes.reserve(static_cast<std::size_t>(config.episodes_per_iteration));
    for (int e = 0; e < config.episodes_per_iteration; ++e) {
      std::uint64_t episode_seed =
          derive_seed(config.seed, "episode",
                      static_cast<std::uint64_t>(iter) * 1000003ULL +
                          static_cast<std::uint64_t>(e));
      StepEnv env = env_factory(episode_seed);
      SplitMix64 rng(hash_mix(episode_seed, 0x616374));
      episodes.push_back(
          collect_episode(policy, reference, env, reward_fn, rng));
    }

    // per-step-index empirical-mean baseline over discounted returns-to-go
    std::size_t max_len = 0;
    for (const EpisodeData& ep : episodes)
      max_len = std::max(max_len, ep.rewards.size());
    std::vector<double> value(max_len + 1, 0.0);
    std::vector<std::size_t> counts(max_len + 1, 0);
    std::vector<std::vector<double>> returns(episodes.size());
    for (std::size_t e = 0; e < episodes.size(); ++e) {
      const std::vector<double>& rewards = episodes[e].rewards;
      returns[e].assign(rewards.size(), 0.0);
      double acc = 0.0;
      for (std::size_t t = rewards.size(); t-- > 0;) {
        acc = rewards[t] + config.discount * acc;
        returns[e][t] = acc;
      }
      for (std::size_t t = 0; t < rewards.size(); ++t) {
        value[t] += returns[e][t];
        counts[t] += 1;
      }
    }
    for (std::size_t t = 0; t < value.size(); ++t)
      if (counts[t] > 0) value[t] /= static_cast<double>(counts[t]);

    // GAE(lambda)
    FrozenBatch batch;
    double reward_sum = 0.0;
    std::size_t reward_count = 0;
    for (EpisodeData& ep : episodes) {
      const std::size_t len = ep.rewards.size();
      std::vector<double> advantage(len, 0.0);
      double next_adv = 0.0;
      for (std::size_t t = len; t-- > 0;) {
        double next_value = t + 1 < len ? value[t + 1] : 0.0;
        double delta =
            ep.rewards[t] + config.discount * next_value - value[t];
        next_adv = delta + config.discount * config.gae_lambda * next_adv;
        advantage[t] = next_adv;
      }
      for (std::size_t t = 0; t < len; ++t) {
        ep.samples[t].advantage = advantage[t];
        batch.samples.push_back(std::move(ep.samples[t]));
        reward_sum += ep.rewards[t];
        ++reward_count;
      }
    }

    for (int epoch = 0; epoch < config.inner_epochs; ++epoch) {
      std::array<double, kPolicyFeatureCount> grad =
          surrogate_gradient(policy, batch, config);
      for (int d = 0; d < kPolicyFeatureCount; ++d) {
        double step = config.learning_rate * grad[static_cast<std::size_t>(d)];
        if (!std::isfinite(step))
          throw NonFiniteLoss("train_ppo: non-finite gradient at iteration " +
                              std::to_string(iter));
        policy.weights[static_cast<std::size_t>(d)] -= step;
      }
    }

    if (trace) {
      PPOTrace::Iteration it;
      std::size_t wins = 0;
      for (const EpisodeData& ep : episodes) wins += ep.success ? 1 : 0;
      it.mean_success =
          static_cast<double>(wins) / static_cast<double>(episodes.size());
      it.mean_reward = reward_count == 0
                           ? 0.0
                           : reward_sum / static_cast<double>(reward_count);
      it.mean_kl = mean_kl(policy, batch);
      it.loss = surrogate_objective(policy, batch, config);
      if (!std::isfinite(it.loss))
        throw NonFiniteLoss("train_ppo: non-finite loss at iteration " +
                            std::to_string(iter));
      trace->iterations.push_back(it);
    }
  }
  return policy;
}

double greedy_success_rate(const Policy& policy, const EnvFactory& env_factory,
                           int episodes, std::uint64_t seed) {
  if (episodes < 1) throw Error("greedy_success_rate: episodes must be >= 1");
  int wins = 0;
  for (int e = 0; e < episodes; ++e) {
    StepEnv env =
        env_factory(derive_seed(seed, "eval", static_cast<std::uint64_t>(e)));
    while (!env.done()) {
      StepEnv::ActionSet set = env.actions();
      std::vector<double> probs = probs_for(policy, set.features);
      int best = 0;
      for (std::size_t a = 1; a < probs.size(); ++a)
        if (probs[a] > probs[static_cast<std::size_t>(best)])
          best = static_cast<int>(a);
      env.apply(best);
    }
    wins += env.success() ? 1 : 0;
  }
  return static_cast<double>(wins) / static_cast<double>(episodes);
}

}  // namespace stepwise
