// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stepwise/completer.hpp"
#include "stepwise/synth.hpp"

namespace stepwise {

// Per-step label estimated from completion rollouts.
//   hard_label = 1 iff any rollout reached the gold answer
//   soft_label = num_correct / num_rollouts, exactly
struct StepAnnotation {
  int step_index = 0;
  int hard_label = 0;
  double soft_label = 0.0;
  int num_rollouts = 0;
  int num_correct = 0;
};

struct AnnotatedSolution {
  Solution solution;
  std::vector<StepAnnotation> step_annotations;  // one per step
  int outcome_label = 0;  // answer matches gold
};

// 1 iff the solution's answer canonically equals the gold answer; an absent
// answer is never a match.
int annotate_outcome(const Problem& problem, const Solution& solution);

// Runs N completions from every step prefix and applies hard/soft
// estimation. Per-step seeds derive from (seed, solution_id, step index),
// so annotation is reproducible and independent of processing order or
// concurrency. Step requests go through complete_batch (retries with
// backoff, at most step_concurrency in flight); any step that still fails
// raises CompleterUnavailable for the whole solution.
AnnotatedSolution annotate_steps(const Problem& problem,
                                 const Solution& solution,
                                 Completer& completer, int n_rollouts,
                                 std::uint64_t seed, int max_steps = 32,
                                 double temperature = 0.7,
                                 int step_concurrency = 1,
                                 int retry_backoff_ms = 100);

struct AnnotateOptions {
  int n_rollouts = 8;  // N
  std::uint64_t seed = 0;
  double temperature = 0.7;
  int max_steps = 32;
  int workers = 1;           // solutions annotated in parallel
  int step_concurrency = 1;  // in-flight completion requests per solution
  int retry_backoff_ms = 100;
  bool dedupe = true;  // drop exact duplicates per problem before annotating
};

struct QuarantinedSolution {
  Solution solution;
  std::string error;
};

struct AnnotateDatasetResult {
  std::vector<AnnotatedSolution> annotated;       // input order
  std::vector<QuarantinedSolution> quarantined;   // failed, never dropped
};

AnnotateDatasetResult annotate_dataset(const std::vector<Problem>& problems,
                                       const std::vector<Solution>& solutions,
                                       Completer& completer,
                                       const AnnotateOptions& options);

// ======================== Annotation quality ========================

enum class LabelSource { hard, soft };

struct QualityReport {
  double accuracy = 0.0;       // hard label vs reference binary label
  double cross_entropy = 0.0;  // vs reference potential, clamped at 1e-6
  std::size_t num_steps = 0;
};

// (solution_id, step_index) -> ground truth
using ReferenceMap = std::map<std::pair<std::string, int>, StepReference>;

// Throws MissingReference if any annotated step lacks a reference entry.
QualityReport evaluate_annotation_quality(
    const std::vector<AnnotatedSolution>& annotated,
    const ReferenceMap& reference, LabelSource label_source);

}  // namespace stepwise
