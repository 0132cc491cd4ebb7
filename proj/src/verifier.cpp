// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#include "stepwise/verifier.hpp"

#include <algorithm>
#include <limits>

namespace stepwise {

namespace {

// answered groups sort before the no-answer sentinel, then lexicographic
bool key_less(const std::string& a, const std::string& b) {
  const bool a_no = a == kNoAnswerKey;
  const bool b_no = b == kNoAnswerKey;
  if (a_no != b_no) return b_no;
  return a < b;
}

bool uses_model(Strategy s) { return s != Strategy::sc; }
bool uses_prm(Strategy s) {
  return s == Strategy::prm || s == Strategy::sc_prm;
}
bool grouped(Strategy s) {
  return s == Strategy::sc || s == Strategy::sc_orm || s == Strategy::sc_prm;
}

}  // namespace

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::sc: return "sc";
    case Strategy::orm: return "orm";
    case Strategy::prm: return "prm";
    case Strategy::sc_orm: return "sc+orm";
    case Strategy::sc_prm: return "sc+prm";
  }
  return "?";
}

double aggregate_prm(std::span<const double> step_scores) {
  if (step_scores.empty())
    throw EmptySolution("aggregate_prm: no step scores");
  return *std::min_element(step_scores.begin(), step_scores.end());
}

std::vector<RankedCandidate> rank_candidates(
    const Problem& problem, std::span<const Solution> candidates,
    const RewardModel* model, Strategy strategy) {
  if (uses_model(strategy)) {
    if (!model) throw Error("strategy " + strategy_name(strategy) +
                            " requires a reward model");
    const bool want_prm = uses_prm(strategy);
    if (want_prm != (model->mode == RewardMode::prm))
      throw Error("model mode incompatible with strategy " +
                  strategy_name(strategy));
  }

  std::vector<RankedCandidate> ranked;
  ranked.reserve(candidates.size());
  for (const Solution& candidate : candidates) {
    RankedCandidate rc;
    rc.solution = candidate;
    rc.answer_key = candidate.answer
                        ? canonicalize_answer(*candidate.answer).canonical
                        : kNoAnswerKey;
    if (uses_model(strategy)) {
      if (uses_prm(strategy)) {
        rc.step_scores.reserve(candidate.steps.size());
        for (int i = 1; i <= static_cast<int>(candidate.steps.size()); ++i)
          rc.step_scores.push_back(score_step(*model, problem, candidate, i));
        rc.aggregate_score = aggregate_prm(rc.step_scores);
      } else {
        rc.aggregate_score = score_solution(*model, problem, candidate);
      }
    }
    ranked.push_back(std::move(rc));
  }
  return ranked;
}

VerificationResult select_from_ranked(std::vector<RankedCandidate> ranked,
                                      Strategy strategy) {
  if (ranked.empty()) throw EmptyCandidates("no candidates to select from");

  VerificationResult result;
  result.strategy = strategy;

  if (grouped(strategy)) {
    // group score: candidate count for SC, summed RM scores otherwise
    std::map<std::string, double> group_scores;
    for (const RankedCandidate& rc : ranked)
      group_scores[rc.answer_key] +=
          strategy == Strategy::sc ? 1.0 : rc.aggregate_score;

    const std::string* best_key = nullptr;
    for (const auto& [key, score] : group_scores) {
      if (!best_key || score > group_scores.at(*best_key) ||
          (score == group_scores.at(*best_key) && key_less(key, *best_key)))
        best_key = &key;
    }

    // winning member: highest aggregate within the group, lowest index on
    // ties (under SC all aggregates are equal, so this is the first member)
    std::size_t chosen = ranked.size();
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      if (ranked[i].answer_key != *best_key) continue;
      if (chosen == ranked.size() ||
          ranked[i].aggregate_score > ranked[chosen].aggregate_score)
        chosen = i;
    }
    result.chosen_index = chosen;
    result.chosen = std::move(ranked[chosen]);
    result.per_answer_group_scores = std::move(group_scores);
    return result;
  }

  // ORM / PRM: argmax aggregate score
  std::size_t chosen = 0;
  for (std::size_t i = 1; i < ranked.size(); ++i) {
    const RankedCandidate& a = ranked[i];
    const RankedCandidate& b = ranked[chosen];
    if (a.aggregate_score > b.aggregate_score ||
        (a.aggregate_score == b.aggregate_score &&
         key_less(a.answer_key, b.answer_key)))
      chosen = i;
  }
  std::map<std::string, double> group_scores;
  for (const RankedCandidate& rc : ranked) {
    auto [it, inserted] = group_scores.emplace(rc.answer_key,
                                               rc.aggregate_score);
    if (!inserted) it->second = std::max(it->second, rc.aggregate_score);
  }
  result.chosen_index = chosen;
  result.chosen = std::move(ranked[chosen]);
  result.per_answer_group_scores = std::move(group_scores);
  return result;
}

VerificationResult select_best_of_n(const Problem& problem,
                                    std::span<const Solution> candidates,
                                    const RewardModel* model,
                                    Strategy strategy) {
  if (candidates.empty()) throw EmptyCandidates("no candidates for problem " +
                                                problem.id);
  return select_from_ranked(
      rank_candidates(problem, candidates, model, strategy), strategy);
}

std::vector<BestOfNPoint> evaluate_best_of_n(
    std::span<const Problem> problems,
    const std::vector<std::vector<Solution>>& candidates_per_problem,
    const RewardModel* model, Strategy strategy, std::span<const int> n_grid,
    int trials, std::uint64_t seed) {
  if (problems.size() != candidates_per_problem.size())
    throw Error("evaluate_best_of_n: problems/candidates size mismatch");

  // score each pool once; subsampling reuses the ranked entries
  std::vector<std::vector<RankedCandidate>> ranked_pools;
  ranked_pools.reserve(problems.size());
  for (std::size_t p = 0; p < problems.size(); ++p)
    ranked_pools.push_back(rank_candidates(
        problems[p], candidates_per_problem[p], model, strategy));

  std::vector<BestOfNPoint> curve;
  for (int n : n_grid) {
    BestOfNPoint point;
    point.n = n;
    for (int t = 0; t < trials; ++t) {
      std::size_t correct = 0;
      for (std::size_t p = 0; p < problems.size(); ++p) {
        const auto& pool = ranked_pools[p];
        if (static_cast<int>(pool.size()) < n)
          throw InsufficientCandidates(
              "problem " + problems[p].id + " has " +
              std::to_string(pool.size()) + " candidates, need " +
              std::to_string(n));

        SplitMix64 rng(derive_seed(
            hash_mix(seed, static_cast<std::uint64_t>(t)), problems[p].id,
            static_cast<std::uint64_t>(n)));
        std::vector<std::size_t> idx(pool.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        for (int k = 0; k < n; ++k) {
          std::size_t j = static_cast<std::size_t>(rng.uniform_int(
              k, static_cast<std::int64_t>(idx.size()) - 1));
          std::swap(idx[static_cast<std::size_t>(k)], idx[j]);
        }
        std::vector<RankedCandidate> subset;
        subset.reserve(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k)
          subset.push_back(pool[idx[static_cast<std::size_t>(k)]]);

        VerificationResult result =
            select_from_ranked(std::move(subset), strategy);
        const std::string gold =
            canonicalize_answer(problems[p].gold_answer).canonical;
        if (result.chosen.answer_key == gold) ++correct;
      }
      point.trial_accuracy.push_back(static_cast<double>(correct) /
                                     static_cast<double>(problems.size()));
    }
    double sum = 0.0;
    for (double a : point.trial_accuracy) sum += a;
    point.mean_accuracy = sum / static_cast<double>(trials);
    curve.push_back(std::move(point));
  }
  return curve;
}

}  // namespace stepwise
