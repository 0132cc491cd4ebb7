// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stepwise/core.hpp"
#include "stepwise/synth.hpp"

namespace stepwise {

// A request to finalize N reasoning continuations from a step prefix.
struct CompletionRequest {
  Problem problem;
  std::string prefix;       // output of step_prefix
  int prefix_steps = 0;     // number of steps the prefix contains
  int num_rollouts = 8;     // N
  double temperature = 0.7;
  int max_steps = 32;
  std::uint64_t seed = 0;
};

inline CompletionRequest make_request(const Problem& problem,
                                      const Solution& solution, int i,
                                      int num_rollouts, std::uint64_t seed) {
  CompletionRequest req;
  req.problem = problem;
  req.prefix = step_prefix(solution, i);
  req.prefix_steps = i;
  req.num_rollouts = num_rollouts;
  req.seed = seed;
  return req;
}

// One finalized continuation: the steps after the prefix plus the decoded
// answer, absent if no answer marker was emitted within max_steps.
struct Rollout {
  std::vector<Step> continuation_steps;
  std::optional<std::string> answer;  // canonical form

  bool operator==(const Rollout&) const = default;
};

class Completer {
 public:
  virtual ~Completer() = default;

  // Returns exactly N rollouts. Throws CompleterUnavailable on transport
  // failure and MalformedCompletion if the backend yields fewer than N
  // generations. An unparseable single continuation is not a hard error:
  // the rollout is kept with answer absent.
  virtual std::vector<Rollout> complete(const CompletionRequest& request) = 0;

  // Stable identity string, part of replay-cache keys and reports.
  virtual std::string identity() const = 0;
};

// Continuation of the arithmetic chain encoded in the problem, replayed with
// per-step corruption. Deterministic given the request seed; the empirical
// fraction of rollouts reaching the gold answer converges to
// oracle_step_potential.
class SyntheticCompleter : public Completer {
 public:
  explicit SyntheticCompleter(double error_rate) : error_rate_(error_rate) {}

  std::vector<Rollout> complete(const CompletionRequest& request) override;
  std::string identity() const override;

  double error_rate() const { return error_rate_; }

 private:
  double error_rate_;
};

// Parses one generated continuation into steps and an answer. Lines with
// `Step n:` markers start fresh steps; leading unmarked text becomes the
// first continuation step; steps are cut at the first answer marker and
// capped at max_steps.
Rollout parse_continuation(std::string_view text, int prefix_steps,
                           int max_steps);

// ======================== Batched completion ========================

struct CompletionOutcome {
  std::vector<Rollout> rollouts;
  int attempts = 0;
  std::string error;  // empty on success

  bool ok() const { return error.empty(); }
};

struct BatchOptions {
  int max_in_flight = 8;
  int max_attempts = 3;
  int backoff_initial_ms = 100;
  double backoff_factor = 2.0;
};

// Runs requests through `completer` with at most max_in_flight outstanding
// at once. Results are positionally aligned with the input; a request that
// still fails after max_attempts reports its error in its own slot without
// affecting the others.
std::vector<CompletionOutcome> complete_batch(
    Completer& completer, const std::vector<CompletionRequest>& requests,
    const BatchOptions& options = {});

}  // namespace stepwise
