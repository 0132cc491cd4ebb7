// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>

#include "doctest.h"
#include "stepwise/synth.hpp"

using namespace stepwise;

namespace {

ChainSpec spec_of(int depth, std::uint64_t seed, const char* ops = "+-") {
  ChainSpec spec;
  spec.depth = depth;
  spec.value_lo = 1;
  spec.value_hi = 9;
  spec.ops = ops;
  spec.seed = seed;
  return spec;
}

// test-local rollout: continue the chain from the prefix state with
// independent per-step corruption, count gold hits
double mc_potential(const Problem& problem, const Solution& solution, int i,
                    double error_rate, int rollouts, std::uint64_t seed) {
  Chain chain = *parse_chain(problem.question);
  PrefixState state = prefix_state(chain, solution.steps, i);
  std::int64_t gold = chain.final_value();
  SplitMix64 rng(seed);
  int hits = 0;
  for (int r = 0; r < rollouts; ++r) {
    std::int64_t value = state.value;
    for (int k = i; k < chain.depth(); ++k) {
      value = chain.apply(k, value);
      if (rng.uniform() < error_rate)
        value += 1 + static_cast<std::int64_t>(rng.next() % 3);
    }
    if (value == gold) ++hits;
  }
  return static_cast<double>(hits) / rollouts;
}

}  // namespace

TEST_CASE("generate_problem is deterministic and oracle-consistent") {
  auto [p1, s1] = generate_problem(spec_of(2, 7, "+"));
  auto [p2, s2] = generate_problem(spec_of(2, 7, "+"));
  CHECK(p1.id == p2.id);
  CHECK(p1.question == p2.question);
  CHECK(s1 == s2);

  // independent interpreter over the question text
  Chain chain = *parse_chain(p1.question);
  std::int64_t value = chain.start;
  for (const auto& link : chain.links) {
    REQUIRE(link.op == '+');
    value += link.operand;
  }
  CHECK(std::to_string(value) == p1.gold_answer);
  CHECK(s1.answer == p1.gold_answer);
  CHECK(s1.steps.size() == 2);
}

TEST_CASE("depth 1 gives a single-step solution") {
  auto [p, s] = generate_problem(spec_of(1, 3));
  CHECK(s.steps.size() == 1);
  REQUIRE(s.answer.has_value());
  CHECK(*s.answer == canonicalize_answer(p.gold_answer).canonical);
}

TEST_CASE("generated solutions reparse with answer present") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto [p, s] = generate_problem(spec_of(4, seed, "+-*"));
    Solution reparsed =
        parse_solution(render_solution(s), p.id, s.solution_id);
    CHECK(reparsed == s);
    REQUIRE(s.answer.has_value());
    CHECK(*s.answer == canonicalize_answer(p.gold_answer).canonical);
  }
}

TEST_CASE("zero noise reproduces the gold solution") {
  auto [p, gold] = generate_problem(spec_of(4, 11));
  Solution s = sample_noisy_solution(p, NoisyPolicy{0.0, 99}, "x");
  CHECK(render_solution(s) == render_solution(gold));
}

TEST_CASE("error rate 1 corrupts every step") {
  auto [p, gold] = generate_problem(spec_of(3, 13));
  Chain chain = *parse_chain(p.question);
  std::vector<std::int64_t> truth = chain.values();
  Solution s = sample_noisy_solution(p, NoisyPolicy{1.0, 5}, "x");
  REQUIRE(s.steps.size() == 3);
  for (int i = 1; i <= 3; ++i) {
    auto claim = claimed_result(s.steps[static_cast<std::size_t>(i - 1)].text);
    REQUIRE(claim.has_value());
    CHECK(*claim != truth[static_cast<std::size_t>(i - 1)]);
  }
}

TEST_CASE("fraction of fully correct samples matches the closed form") {
  // depth 4, error 0.3: P(correct final) = 0.7^4
  auto [p, gold] = generate_problem(spec_of(4, 17));
  const std::string gold_canonical =
      canonicalize_answer(p.gold_answer).canonical;
  int correct = 0;
  const int samples = 10000;
  for (int k = 0; k < samples; ++k) {
    Solution s = sample_noisy_solution(
        p, NoisyPolicy{0.3, static_cast<std::uint64_t>(k)}, "x");
    if (s.answer && *s.answer == gold_canonical) ++correct;
  }
  double fraction = static_cast<double>(correct) / samples;
  CHECK(fraction == doctest::Approx(std::pow(0.7, 4)).epsilon(0.09));
  CHECK(std::abs(fraction - std::pow(0.7, 4)) < 0.02);
}

TEST_CASE("oracle potential closed form") {
  auto [p, gold] = generate_problem(spec_of(4, 21));

  SUBCASE("correct prefix") {
    CHECK(oracle_step_potential(p, gold, 4, NoisyPolicy{0.5, 0}) == 1.0);
    CHECK(oracle_step_potential(p, gold, 2, NoisyPolicy{0.5, 0}) ==
          doctest::Approx(0.25).epsilon(1e-12));
    CHECK(oracle_step_potential(p, gold, 1, NoisyPolicy{0.0, 0}) == 1.0);
  }

  SUBCASE("corrupted prefix is zero everywhere after the error") {
    Solution bad = sample_noisy_solution(p, NoisyPolicy{1.0, 3}, "x");
    for (int i = 1; i <= 4; ++i)
      CHECK(oracle_step_potential(p, bad, i, NoisyPolicy{0.1, 0}) == 0.0);
  }

  SUBCASE("bounds") {
    CHECK_THROWS_AS(oracle_step_potential(p, gold, 0, NoisyPolicy{0.5, 0}),
                    IndexOutOfRange);
    CHECK_THROWS_AS(oracle_step_potential(p, gold, 5, NoisyPolicy{0.5, 0}),
                    IndexOutOfRange);
  }
}

TEST_CASE("once corrupted, potential stays zero for all later prefixes") {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    auto [p, gold] = generate_problem(spec_of(5, rng.next(), "+-*"));
    Solution s = sample_noisy_solution(p, NoisyPolicy{0.5, rng.next()}, "x");
    bool corrupted = false;
    for (int i = 1; i <= 5; ++i) {
      double potential = oracle_step_potential(p, s, i, NoisyPolicy{0.3, 0});
      if (corrupted) CHECK(potential == 0.0);
      if (potential == 0.0) corrupted = true;
    }
  }
}

TEST_CASE("Monte-Carlo rollouts converge to the oracle potential") {
  auto [p, gold] = generate_problem(spec_of(4, 37));
  Solution noisy = sample_noisy_solution(p, NoisyPolicy{0.4, 8}, "x");
  for (int i = 1; i <= 4; ++i) {
    double oracle = oracle_step_potential(p, noisy, i, NoisyPolicy{0.5, 0});
    double estimate = mc_potential(p, noisy, i, 0.5, 100000,
                                   static_cast<std::uint64_t>(1000 + i));
    CHECK(std::abs(estimate - oracle) < 0.01);
  }
}

TEST_CASE("dataset generation yields unique ids") {
  auto dataset = generate_dataset(spec_of(3, 5), 200);
  std::set<std::string> ids;
  for (const auto& [p, s] : dataset) ids.insert(p.id);
  CHECK(ids.size() == dataset.size());
}
