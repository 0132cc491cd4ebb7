// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "stepwise/reward_model.hpp"

namespace stepwise {

enum class Strategy { sc, orm, prm, sc_orm, sc_prm };

std::string strategy_name(Strategy s);

// Candidates with no extractable answer group under this sentinel; such a
// group can never win a tie against an answered group.
inline const std::string kNoAnswerKey = "__NO_ANSWER__";

struct RankedCandidate {
  Solution solution;
  std::vector<double> step_scores;  // PRM strategies only
  double aggregate_score = 0.0;     // min(step_scores) under PRM
  std::string answer_key;           // canonical answer or kNoAnswerKey
};

struct VerificationResult {
  RankedCandidate chosen;
  std::size_t chosen_index = 0;  // into the input candidate list
  Strategy strategy = Strategy::sc;
  std::map<std::string, double> per_answer_group_scores;
};

// A solution's PRM score is the minimum over its step scores.
// Throws EmptySolution on an empty list.
double aggregate_prm(std::span<const double> step_scores);

// Scores each candidate per the strategy. `model` may be null for pure
// self-consistency; otherwise its mode must match the strategy.
std::vector<RankedCandidate> rank_candidates(
    const Problem& problem, std::span<const Solution> candidates,
    const RewardModel* model, Strategy strategy);

// Selection over pre-scored candidates; exposed so oracle tests can feed
// fixture scores directly.
//   SC     -> largest answer group
//   ORM/PRM-> argmax aggregate score
//   SC+RM  -> argmax over answer groups of the summed member scores
// Ties break to answered groups first, then the lexicographically smallest
// answer key, then the lowest candidate index.
VerificationResult select_from_ranked(std::vector<RankedCandidate> ranked,
                                      Strategy strategy);

// Throws EmptyCandidates on an empty list.
VerificationResult select_best_of_n(const Problem& problem,
                                    std::span<const Solution> candidates,
                                    const RewardModel* model,
                                    Strategy strategy);

// ======================== Best-of-N evaluation ========================

struct BestOfNPoint {
  int n = 0;
  double mean_accuracy = 0.0;
  std::vector<double> trial_accuracy;
};

// For each n and each seeded trial, subsamples n candidates per problem,
// selects best-of-n, and tests canonical equality with the gold answer.
// Throws InsufficientCandidates when a pool is smaller than n.
std::vector<BestOfNPoint> evaluate_best_of_n(
    std::span<const Problem> problems,
    const std::vector<std::vector<Solution>>& candidates_per_problem,
    const RewardModel* model, Strategy strategy, std::span<const int> n_grid,
    int trials, std::uint64_t seed);

}  // namespace stepwise
