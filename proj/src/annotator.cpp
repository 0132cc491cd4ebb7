// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#include "stepwise/annotator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <thread>
#include <unordered_map>

namespace stepwise {

int annotate_outcome(const Problem& problem, const Solution& solution) {
  if (!solution.answer) return 0;
  return answers_match(*solution.answer, problem.gold_answer) ? 1 : 0;
}

AnnotatedSolution annotate_steps(const Problem& problem,
                                 const Solution& solution,
                                 Completer& completer, int n_rollouts,
                                 std::uint64_t seed, int max_steps,
                                 double temperature, int step_concurrency,
                                 int retry_backoff_ms) {
  if (n_rollouts < 1) throw Error("annotate_steps: N must be >= 1");

  const std::string gold =
      canonicalize_answer(problem.gold_answer).canonical;

  std::vector<CompletionRequest> requests;
  requests.reserve(solution.steps.size());
  for (int i = 1; i <= static_cast<int>(solution.steps.size()); ++i) {
    CompletionRequest request = make_request(
        problem, solution, i, n_rollouts,
        derive_seed(seed, solution.solution_id, static_cast<std::uint64_t>(i)));
    request.max_steps = max_steps;
    request.temperature = temperature;
    requests.push_back(std::move(request));
  }

  BatchOptions batch_options;
  batch_options.max_in_flight = std::max(1, step_concurrency);
  batch_options.backoff_initial_ms = retry_backoff_ms;
  std::vector<CompletionOutcome> outcomes =
      complete_batch(completer, requests, batch_options);

  AnnotatedSolution out;
  out.solution = solution;
  out.outcome_label = annotate_outcome(problem, solution);
  out.step_annotations.reserve(solution.steps.size());
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i].ok())
      throw CompleterUnavailable("step " + std::to_string(i + 1) + ": " +
                                 outcomes[i].error);
    int correct = 0;
    for (const Rollout& rollout : outcomes[i].rollouts)
      if (rollout.answer && *rollout.answer == gold) ++correct;

    StepAnnotation ann;
    ann.step_index = static_cast<int>(i) + 1;
    ann.num_rollouts = static_cast<int>(outcomes[i].rollouts.size());
    ann.num_correct = correct;
    ann.soft_label = static_cast<double>(correct) / ann.num_rollouts;
    ann.hard_label = correct >= 1 ? 1 : 0;
    out.step_annotations.push_back(ann);
  }
  return out;
}

AnnotateDatasetResult annotate_dataset(const std::vector<Problem>& problems,
                                       const std::vector<Solution>& solutions,
                                       Completer& completer,
                                       const AnnotateOptions& options) {
  std::unordered_map<std::string, const Problem*> by_id;
  for (const Problem& p : problems) by_id.emplace(p.id, &p);

  // duplicate removal by exact rendered text, per problem
  std::vector<const Solution*> work;
  work.reserve(solutions.size());
  {
    std::set<std::pair<std::string, std::string>> seen;
    for (const Solution& s : solutions) {
      if (options.dedupe &&
          !seen.emplace(s.problem_id, render_solution(s)).second)
        continue;
      work.push_back(&s);
    }
  }

  struct Slot {
    bool failed = false;
    AnnotatedSolution annotated;
    std::string error;
  };
  std::vector<Slot> slots(work.size());
  std::atomic<std::size_t> next{0};

  auto run_one = [&](std::size_t i) {
    const Solution& s = *work[i];
    try {
      auto it = by_id.find(s.problem_id);
      if (it == by_id.end())
        throw Error("unknown problem_id: " + s.problem_id);
      slots[i].annotated = annotate_steps(
          *it->second, s, completer, options.n_rollouts, options.seed,
          options.max_steps, options.temperature, options.step_concurrency,
          options.retry_backoff_ms);
    } catch (const std::exception& e) {
      slots[i].failed = true;
      slots[i].error = e.what();
    }
  };

  if (options.workers <= 1) {
    for (std::size_t i = 0; i < work.size(); ++i) run_one(i);
  } else {
    auto loop = [&] {
      while (true) {
        std::size_t i = next.fetch_add(1);
        if (i >= work.size()) return;
        run_one(i);
      }
    };
    std::vector<std::thread> threads;
    std::size_t n = std::min<std::size_t>(
        static_cast<std::size_t>(options.workers), work.size());
    for (std::size_t t = 0; t < n; ++t) threads.emplace_back(loop);
    for (std::thread& t : threads) t.join();
  }

  AnnotateDatasetResult result;
  for (std::size_t i = 0; i < work.size(); ++i) {
    if (slots[i].failed)
      result.quarantined.push_back({*work[i], slots[i].error});
    else
      result.annotated.push_back(std::move(slots[i].annotated));
  }
  return result;
}

QualityReport evaluate_annotation_quality(
    const std::vector<AnnotatedSolution>& annotated,
    const ReferenceMap& reference, LabelSource label_source) {
  constexpr double kEps = 1e-6;
  QualityReport report;
  double ce_sum = 0.0;
  std::size_t hits = 0;

  for (const AnnotatedSolution& a : annotated) {
    for (const StepAnnotation& step : a.step_annotations) {
      auto it = reference.find({a.solution.solution_id, step.step_index});
      if (it == reference.end())
        throw MissingReference("no reference for solution " +
                               a.solution.solution_id + " step " +
                               std::to_string(step.step_index));
      const StepReference& ref = it->second;
      if (step.hard_label == ref.label) ++hits;

      double q = label_source == LabelSource::hard
                     ? static_cast<double>(step.hard_label)
                     : step.soft_label;
      q = std::clamp(q, kEps, 1.0 - kEps);
      double y = ref.potential;
      ce_sum += -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
      ++report.num_steps;
    }
  }
  if (report.num_steps == 0) return report;
  report.accuracy = static_cast<double>(hits) / report.num_steps;
  report.cross_entropy = ce_sum / static_cast<double>(report.num_steps);
  return report;
}

}  // namespace stepwise
