// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#include "stepwise/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace stepwise {

namespace {

constexpr std::int64_t kOffsets[] = {1, 2, 3};

std::optional<std::int64_t> parse_int_at(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && is_space(s[i])) ++i;
  std::size_t begin = i;
  if (i < s.size() && s[i] == '-') ++i;
  std::size_t digits = i;
  while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
  if (i == digits) return std::nullopt;
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data() + begin, s.data() + i, value);
  if (ec != std::errc()) return std::nullopt;
  return value;
}

std::string op_phrase(char op, std::int64_t operand) {
  switch (op) {
    case '+': return "Then add " + std::to_string(operand) + ".";
    case '-': return "Then subtract " + std::to_string(operand) + ".";
    default: return "Then multiply by " + std::to_string(operand) + ".";
  }
}

}  // namespace

void ChainSpec::validate() const {
  if (depth < 1) throw Error("ChainSpec: depth must be >= 1");
  if (value_lo > value_hi) throw Error("ChainSpec: empty value range");
  if (ops.empty()) throw Error("ChainSpec: ops must be non-empty");
  for (char op : ops)
    if (op != '+' && op != '-' && op != '*')
      throw Error(std::string("ChainSpec: unsupported op '") + op + "'");
}

std::int64_t Chain::apply(int k, std::int64_t value) const {
  const Link& link = links[static_cast<std::size_t>(k)];
  switch (link.op) {
    case '+': return value + link.operand;
    case '-': return value - link.operand;
    default: return value * link.operand;
  }
}

std::vector<std::int64_t> Chain::values() const {
  std::vector<std::int64_t> out;
  out.reserve(links.size());
  std::int64_t value = start;
  for (int k = 0; k < depth(); ++k) {
    value = apply(k, value);
    out.push_back(value);
  }
  return out;
}

std::int64_t Chain::final_value() const {
  return links.empty() ? start : values().back();
}

Chain make_chain(const ChainSpec& spec) {
  spec.validate();
  SplitMix64 rng(spec.seed);
  Chain chain;
  chain.start = rng.uniform_int(spec.value_lo, spec.value_hi);
  chain.links.reserve(static_cast<std::size_t>(spec.depth));
  for (int k = 0; k < spec.depth; ++k) {
    char op = spec.ops[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(spec.ops.size()) - 1))];
    std::int64_t operand;
    if (op == '*') {
      // operands >= 1 keep corruption offsets non-cancelling
      std::int64_t lo = std::max<std::int64_t>(1, spec.value_lo);
      std::int64_t hi = std::max<std::int64_t>(1, spec.value_hi);
      operand = rng.uniform_int(lo, hi);
    } else {
      operand = rng.uniform_int(spec.value_lo, spec.value_hi);
    }
    chain.links.push_back({op, operand});
  }
  return chain;
}

std::pair<Problem, Solution> generate_problem(const ChainSpec& spec) {
  Chain chain = make_chain(spec);
  std::vector<std::int64_t> values = chain.values();

  Problem problem;
  problem.id = "synth-" + std::to_string(spec.seed);
  problem.question = "Start with " + std::to_string(chain.start) + ".";
  for (const Chain::Link& link : chain.links)
    problem.question += " " + op_phrase(link.op, link.operand);
  problem.question += " What is the final value?";
  problem.gold_answer = std::to_string(values.back());

  std::string text;
  std::int64_t state = chain.start;
  for (int k = 0; k < chain.depth(); ++k) {
    const Chain::Link& link = chain.links[static_cast<std::size_t>(k)];
    text += "Step " + std::to_string(k + 1) + ": " + std::to_string(state) +
            " " + link.op + " " + std::to_string(link.operand) + " = " +
            std::to_string(values[static_cast<std::size_t>(k)]) + ".";
    state = values[static_cast<std::size_t>(k)];
    if (k + 1 == chain.depth())
      text += "\n" + answer_marker_line(std::to_string(state));
    text += "\n";
  }

  Solution solution =
      parse_solution(text, problem.id, problem.id + "-gold");
  return {std::move(problem), std::move(solution)};
}

std::vector<std::pair<Problem, Solution>> generate_dataset(
    const ChainSpec& base, int count) {
  std::vector<std::pair<Problem, Solution>> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    ChainSpec spec = base;
    spec.seed = derive_seed(base.seed, "problem", static_cast<std::uint64_t>(i));
    out.push_back(generate_problem(spec));
  }
  return out;
}

std::optional<Chain> parse_chain(std::string_view question) {
  static constexpr std::string_view kStart = "start with ";
  std::string q = lower(question);
  std::size_t pos = q.find(kStart);
  if (pos == std::string::npos) return std::nullopt;
  pos += kStart.size();

  Chain chain;
  auto start = parse_int_at(std::string_view(q).substr(pos));
  if (!start) return std::nullopt;
  chain.start = *start;

  while (true) {
    std::size_t next = q.find("then ", pos);
    if (next == std::string::npos) break;
    pos = next + 5;
    std::string_view rest = std::string_view(q).substr(pos);
    char op;
    std::size_t skip;
    if (rest.starts_with("add ")) {
      op = '+';
      skip = 4;
    } else if (rest.starts_with("subtract ")) {
      op = '-';
      skip = 9;
    } else if (rest.starts_with("multiply by ")) {
      op = '*';
      skip = 12;
    } else {
      return std::nullopt;
    }
    auto operand = parse_int_at(rest.substr(skip));
    if (!operand) return std::nullopt;
    chain.links.push_back({op, *operand});
  }
  if (chain.links.empty()) return std::nullopt;
  return chain;
}

std::optional<std::int64_t> claimed_result(std::string_view step_text) {
  std::size_t eq = step_text.rfind('=');
  if (eq == std::string_view::npos) return std::nullopt;
  return parse_int_at(step_text.substr(eq + 1));
}

PrefixState prefix_state(const Chain& chain, std::span<const Step> steps,
                         int i) {
  std::vector<std::int64_t> values = chain.values();
  if (i == 0) return {chain.start, false};
  std::int64_t truth = i <= chain.depth()
                           ? values[static_cast<std::size_t>(i - 1)]
                           : values.back();
  auto claim = claimed_result(steps[static_cast<std::size_t>(i - 1)].text);
  if (!claim) return {truth + 1, true};
  return {*claim, *claim != truth};
}

Solution sample_noisy_solution(const Problem& problem,
                               const NoisyPolicy& policy,
                               std::string_view solution_id) {
  auto chain = parse_chain(problem.question);
  if (!chain)
    throw Error("sample_noisy_solution: question is not a synthetic chain: " +
                problem.id);

  SplitMix64 rng(policy.seed);
  std::string text;
  std::int64_t state = chain->start;
  for (int k = 0; k < chain->depth(); ++k) {
    const Chain::Link& link = chain->links[static_cast<std::size_t>(k)];
    std::int64_t exact = chain->apply(k, state);
    std::int64_t result = exact;
    if (rng.bernoulli(policy.per_step_error_rate))
      result += kOffsets[rng.uniform_int(0, 2)];
    text += "Step " + std::to_string(k + 1) + ": " + std::to_string(state) +
            " " + link.op + " " + std::to_string(link.operand) + " = " +
            std::to_string(result) + ".";
    state = result;
    if (k + 1 == chain->depth())
      text += "\n" + answer_marker_line(std::to_string(state));
    text += "\n";
  }
  return parse_solution(text, problem.id, solution_id);
}

double oracle_step_potential(const Problem& problem, const Solution& solution,
                             int i, const NoisyPolicy& policy) {
  if (i < 1 || static_cast<std::size_t>(i) > solution.steps.size())
    throw IndexOutOfRange("oracle_step_potential: i=" + std::to_string(i));
  auto chain = parse_chain(problem.question);
  if (!chain)
    throw Error("oracle_step_potential: question is not a synthetic chain: " +
                problem.id);
  PrefixState state = prefix_state(*chain, solution.steps, i);
  if (state.corrupted) return 0.0;
  int remaining = std::max(0, chain->depth() - i);
  return std::pow(1.0 - policy.per_step_error_rate, remaining);
}

std::vector<StepReference> oracle_references(const Problem& problem,
                                             const Solution& solution,
                                             const NoisyPolicy& policy) {
  std::vector<StepReference> out;
  out.reserve(solution.steps.size());
  for (int i = 1; i <= static_cast<int>(solution.steps.size()); ++i) {
    double p = oracle_step_potential(problem, solution, i, policy);
    out.push_back({p > 0.0 ? 1 : 0, p});
  }
  return out;
}

}  // namespace stepwise
