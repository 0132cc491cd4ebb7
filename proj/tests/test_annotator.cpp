// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "stepwise/annotator.hpp"

using namespace stepwise;

namespace {

std::pair<Problem, Solution> make_task(int depth, std::uint64_t seed) {
  ChainSpec spec;
  spec.depth = depth;
  spec.ops = "+-";
  spec.seed = seed;
  return generate_problem(spec);
}

// returns the same scripted answers for every step
class ScriptedCompleter : public Completer {
 public:
  explicit ScriptedCompleter(std::vector<std::string> answers)
      : answers_(std::move(answers)) {}

  std::vector<Rollout> complete(const CompletionRequest& request) override {
    if (request.num_rollouts != static_cast<int>(answers_.size()))
      throw Error("scripted completer: unexpected rollout count");
    std::vector<Rollout> rollouts;
    for (const std::string& a : answers_) {
      Rollout r;
      r.answer = canonicalize_answer(a).canonical;
      rollouts.push_back(std::move(r));
    }
    return rollouts;
  }
  std::string identity() const override { return "scripted"; }

 private:
  std::vector<std::string> answers_;
};

class FailingCompleter : public Completer {
 public:
  explicit FailingCompleter(std::string needle) : needle_(std::move(needle)) {}
  std::vector<Rollout> complete(const CompletionRequest& request) override {
    if (request.prefix.find(needle_) != std::string::npos)
      throw CompleterUnavailable("scripted outage");
    return inner_.complete(request);
  }
  std::string identity() const override { return "failing"; }

 private:
  std::string needle_;
  SyntheticCompleter inner_{0.0};
};

}  // namespace

TEST_CASE("outcome labels") {
  Problem p{"p", "q", "5"};
  Solution with = parse_solution("Step 1: The answer is: 5", p.id);
  Solution without = parse_solution("Step 1: no marker", p.id);
  CHECK(annotate_outcome(p, with) == 1);
  CHECK(annotate_outcome(p, without) == 0);

  Problem frac{"p", "q", "1/2"};
  Solution reduced = parse_solution("Step 1: The answer is: 2/4", frac.id);
  CHECK(annotate_outcome(frac, reduced) == 1);
}

TEST_CASE("hard and soft estimation from scripted rollouts") {
  Problem p{"p", "q", "5"};
  Solution s = parse_solution("Step 1: The answer is: 5", p.id, "s1");

  ScriptedCompleter seven_of_eight(
      {"5", "5", "7", "5", "5", "5", "5", "5"});
  AnnotatedSolution a = annotate_steps(p, s, seven_of_eight, 8, 0);
  REQUIRE(a.step_annotations.size() == 1);
  CHECK(a.step_annotations[0].num_correct == 7);
  CHECK(a.step_annotations[0].soft_label == doctest::Approx(0.875));
  CHECK(a.step_annotations[0].hard_label == 1);
  CHECK(a.outcome_label == 1);

  ScriptedCompleter none({"1", "2", "3", "4", "6", "7", "8", "9"});
  AnnotatedSolution b = annotate_steps(p, s, none, 8, 0);
  CHECK(b.step_annotations[0].num_correct == 0);
  CHECK(b.step_annotations[0].soft_label == 0.0);
  CHECK(b.step_annotations[0].hard_label == 0);
}

TEST_CASE("noiseless completer reproduces the reachability oracle exactly") {
  SyntheticCompleter completer(0.0);
  SplitMix64 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    auto [p, gold] = make_task(4, rng.next());
    Solution s = sample_noisy_solution(p, NoisyPolicy{0.4, rng.next()}, "s");
    AnnotatedSolution a = annotate_steps(p, s, completer, 4, 0);
    auto refs = oracle_references(p, s, NoisyPolicy{0.0, 0});
    for (std::size_t i = 0; i < refs.size(); ++i)
      CHECK(a.step_annotations[i].hard_label == refs[i].label);
  }
}

TEST_CASE("soft labels live on the 1/N grid and nest monotonically") {
  auto [p, gold] = make_task(4, 9);
  Solution s = sample_noisy_solution(p, NoisyPolicy{0.3, 4}, "s");
  SyntheticCompleter completer(0.5);
  AnnotatedSolution small = annotate_steps(p, s, completer, 4, 123);
  AnnotatedSolution large = annotate_steps(p, s, completer, 8, 123);
  for (std::size_t i = 0; i < small.step_annotations.size(); ++i) {
    const StepAnnotation& a4 = small.step_annotations[i];
    const StepAnnotation& a8 = large.step_annotations[i];
    CHECK(a4.soft_label * 4 == doctest::Approx(a4.num_correct));
    CHECK(a8.soft_label * 8 == doctest::Approx(a8.num_correct));
    // same seed: the first 4 of 8 rollouts are the 4-rollout set
    CHECK(a8.num_correct >= a4.num_correct);
    CHECK(a8.hard_label >= a4.hard_label);
  }
}

TEST_CASE("annotation is independent of processing order") {
  SyntheticCompleter completer(0.4);
  auto [p, gold] = make_task(3, 17);
  std::vector<Problem> problems = {p};
  std::vector<Solution> forward;
  for (int k = 0; k < 6; ++k)
    forward.push_back(sample_noisy_solution(
        p, NoisyPolicy{0.4, static_cast<std::uint64_t>(k)},
        "s" + std::to_string(k)));
  std::vector<Solution> backward(forward.rbegin(), forward.rend());

  AnnotateOptions options;
  options.n_rollouts = 8;
  options.seed = 5;
  options.dedupe = false;
  auto a = annotate_dataset(problems, forward, completer, options);
  auto b = annotate_dataset(problems, backward, completer, options);
  REQUIRE(a.annotated.size() == b.annotated.size());
  for (const AnnotatedSolution& ann : a.annotated) {
    auto match = std::find_if(b.annotated.begin(), b.annotated.end(),
                              [&](const AnnotatedSolution& other) {
                                return other.solution.solution_id ==
                                       ann.solution.solution_id;
                              });
    REQUIRE(match != b.annotated.end());
    for (std::size_t i = 0; i < ann.step_annotations.size(); ++i) {
      CHECK(match->step_annotations[i].num_correct ==
            ann.step_annotations[i].num_correct);
    }
  }
}

TEST_CASE("step-level concurrency does not change annotations") {
  auto [p, gold] = make_task(4, 33);
  Solution s = sample_noisy_solution(p, NoisyPolicy{0.4, 6}, "s");
  SyntheticCompleter completer(0.5);
  AnnotatedSolution serial = annotate_steps(p, s, completer, 8, 42, 32, 0.7,
                                            /*step_concurrency=*/1);
  AnnotatedSolution parallel = annotate_steps(p, s, completer, 8, 42, 32, 0.7,
                                              /*step_concurrency=*/4);
  REQUIRE(serial.step_annotations.size() == parallel.step_annotations.size());
  for (std::size_t i = 0; i < serial.step_annotations.size(); ++i) {
    CHECK(serial.step_annotations[i].num_correct ==
          parallel.step_annotations[i].num_correct);
    CHECK(serial.step_annotations[i].hard_label ==
          parallel.step_annotations[i].hard_label);
  }
}

TEST_CASE("failed solutions go to quarantine, not silently dropped") {
  auto [p, gold] = make_task(3, 21);
  std::vector<Problem> problems = {p};
  Solution bad = gold;
  bad.solution_id = "bad";
  bad.steps[0].text = "QUARANTINE-ME " + bad.steps[0].text;
  std::vector<Solution> solutions = {gold, bad};

  FailingCompleter completer("QUARANTINE-ME");
  AnnotateOptions options;
  options.n_rollouts = 2;
  options.retry_backoff_ms = 1;
  auto result = annotate_dataset(problems, solutions, completer, options);
  REQUIRE(result.annotated.size() == 1);
  REQUIRE(result.quarantined.size() == 1);
  CHECK(result.quarantined[0].solution.solution_id == "bad");
  CHECK(result.quarantined[0].error.find("outage") != std::string::npos);
}

TEST_CASE("exact duplicates are removed before annotation") {
  auto [p, gold] = make_task(3, 25);
  std::vector<Problem> problems = {p};
  Solution dup = gold;
  dup.solution_id = "dup";  // different id, same text
  std::vector<Solution> solutions = {gold, dup};
  SyntheticCompleter completer(0.0);
  AnnotateOptions options;
  options.n_rollouts = 2;
  auto result = annotate_dataset(problems, solutions, completer, options);
  CHECK(result.annotated.size() == 1);
}

TEST_CASE("quality report accuracy and cross entropy") {
  Problem p{"p", "q", "5"};
  Solution s = parse_solution("Step 1: a\nStep 2: The answer is: 5", p.id,
                              "s1");
  AnnotatedSolution a;
  a.solution = s;
  a.outcome_label = 1;
  a.step_annotations = {{1, 1, 0.5, 8, 4}, {2, 1, 1.0, 8, 8}};

  ReferenceMap reference;
  reference[{"s1", 1}] = StepReference{1, 0.5};
  reference[{"s1", 2}] = StepReference{1, 1.0};

  QualityReport report =
      evaluate_annotation_quality({a}, reference, LabelSource::soft);
  CHECK(report.accuracy == 1.0);
  // soft labels equal the reference distribution: CE is its entropy
  double expected = (-(0.5 * std::log(0.5) + 0.5 * std::log(0.5)) +
                     -(std::log(1.0 - 1e-6))) /
                    2.0;
  CHECK(report.cross_entropy == doctest::Approx(expected).epsilon(1e-9));

  QualityReport hard =
      evaluate_annotation_quality({a}, reference, LabelSource::hard);
  CHECK(hard.accuracy == 1.0);

  ReferenceMap missing;
  missing[{"s1", 1}] = StepReference{1, 0.5};
  CHECK_THROWS_AS(
      evaluate_annotation_quality({a}, missing, LabelSource::hard),
      MissingReference);
}
