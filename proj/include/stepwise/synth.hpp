// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stepwise/core.hpp"

namespace stepwise {

// Parameters of a synthetic arithmetic-chain problem: `depth` chained
// operations over integer operands. Every question encodes its chain in
// plain text, so the chain (and hence exact ground truth) is recoverable
// from the Problem alone.
struct ChainSpec {
  int depth = 4;
  std::int64_t value_lo = 1;
  std::int64_t value_hi = 9;
  std::string ops = "+-";  // subset of "+-*"
  std::uint64_t seed = 0;

  void validate() const;
};

// A fallible generator/completer: each step is corrupted independently with
// probability per_step_error_rate by a positive offset from {+1,+2,+3}.
// Offsets never cancel (multiplication operands are kept >= 1), so a
// corrupted running value stays strictly above the true one forever. That
// makes the exact step potential closed-form.
struct NoisyPolicy {
  double per_step_error_rate = 0.0;
  std::uint64_t seed = 0;
};

struct Chain {
  struct Link {
    char op;  // '+', '-', '*'
    std::int64_t operand;
  };
  std::int64_t start = 0;
  std::vector<Link> links;

  int depth() const { return static_cast<int>(links.size()); }
  std::int64_t apply(int k, std::int64_t value) const;  // k is 0-based
  // true running values t_1..t_depth
  std::vector<std::int64_t> values() const;
  std::int64_t final_value() const;
};

// Deterministic in spec.seed.
Chain make_chain(const ChainSpec& spec);

// Renders the chain as a word problem plus the unique correct step-by-step
// solution in `Step n:` format, terminated by an answer marker.
std::pair<Problem, Solution> generate_problem(const ChainSpec& spec);

// `count` problems with per-index derived seeds.
std::vector<std::pair<Problem, Solution>> generate_dataset(
    const ChainSpec& base, int count);

// Recovers the chain encoded in a synthetic question. nullopt if the text
// is not in the generator's format.
std::optional<Chain> parse_chain(std::string_view question);

// The integer a step claims to have computed: the value after the last '='.
std::optional<std::int64_t> claimed_result(std::string_view step_text);

struct PrefixState {
  std::int64_t value = 0;
  bool corrupted = false;
};

// Running value after the first `i` steps of a solution. Only the last
// claimed value matters: a continuation computes from it, and by the
// non-cancelling construction it reaches the gold answer iff it equals the
// true value. An unparseable last step counts as corrupted.
PrefixState prefix_state(const Chain& chain, std::span<const Step> steps,
                         int i);

// Replays the chain, corrupting each step independently per `policy`.
// Corrupted state propagates; the final answer is whatever the last step
// claims.
Solution sample_noisy_solution(const Problem& problem,
                               const NoisyPolicy& policy,
                               std::string_view solution_id = "");

// Exact probability that a completion from step i under `policy` reaches
// the gold answer: 0 on a corrupted prefix, else (1 - e)^(depth - i).
// Throws IndexOutOfRange unless 1 <= i <= steps.size().
double oracle_step_potential(const Problem& problem, const Solution& solution,
                             int i, const NoisyPolicy& policy);

// Ground-truth label for one step, used to grade annotations.
struct StepReference {
  int label = 0;        // reachability indicator: potential > 0
  double potential = 0; // exact value
};

std::vector<StepReference> oracle_references(const Problem& problem,
                                             const Solution& solution,
                                             const NoisyPolicy& policy);

}  // namespace stepwise
