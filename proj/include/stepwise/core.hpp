// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stepwise/common.hpp"

namespace stepwise {

// A question with a known final answer.
struct Problem {
  std::string id;
  std::string question;
  std::string gold_answer;
};

// One reasoning step of a solution. Indices are 1-based and contiguous
// within a Solution.
struct Step {
  int index = 0;
  std::string text;

  bool operator==(const Step&) const = default;
};

// An ordered list of steps plus the answer extracted from the final step,
// if any. Immutable after construction; safe to share across threads.
struct Solution {
  std::string problem_id;
  std::string solution_id;
  std::vector<Step> steps;
  std::optional<std::string> answer;  // canonical form

  bool operator==(const Solution&) const = default;
};

// An answer string plus its canonical form. Canonicalization is idempotent.
struct Answer {
  std::string raw;
  std::string canonical;
};

// Normalizes an answer string for exact-match comparison: trims, strips
// surrounding '$', digit-group commas and trailing periods, normalizes
// integers (007 -> 7, -0 -> 0), reduces fractions p/q to lowest terms with
// positive denominator, lowercases everything else. Total function.
Answer canonicalize_answer(std::string_view raw);

inline bool answers_match(std::string_view a, std::string_view b) {
  return canonicalize_answer(a).canonical == canonicalize_answer(b).canonical;
}

// Splits raw text on lines starting with `Step <n>:` (case-insensitive).
// Lines without a marker are appended to the current step; the final answer
// is taken from a terminal `The answer is: <x>` marker when present. Step
// indices are renumbered contiguously from 1.
//
// Throws MalformedSolution if no step marker exists at all.
Solution parse_solution(std::string_view raw_text, std::string_view problem_id,
                        std::string_view solution_id = "");

// Inverse of parse_solution for solutions whose step texts contain no
// `Step n:` substrings.
std::string render_solution(const Solution& solution);

// Concatenation of steps 1..i joined with single newlines.
// Throws IndexOutOfRange unless 1 <= i <= steps.size().
std::string step_prefix(const Solution& solution, int i);

// Raw value of the last `The answer is: <x>` marker in `text`, untouched
// except for the line cut. Returns nullopt when no marker is present.
std::optional<std::string> answer_marker_value(std::string_view text);

// Extracts the value of a terminal `The answer is: <x>` marker from step
// text, canonicalized. Returns nullopt when no marker is present.
std::optional<std::string> extract_answer_marker(std::string_view text);

inline std::string answer_marker_line(std::string_view answer) {
  return "The answer is: " + std::string(answer);
}

}  // namespace stepwise
