// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#include "stepwise/core.hpp"

#include <charconv>
#include <cstdlib>
#include <numeric>

namespace stepwise {

namespace {

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return true;
}

// "007" -> "7", "000" -> "0"; input is digits only
std::string strip_leading_zeros(std::string_view digits) {
  std::size_t i = 0;
  while (i + 1 < digits.size() && digits[i] == '0') ++i;
  return std::string(digits.substr(i));
}

std::optional<std::int64_t> parse_i64(std::string_view s) {
  std::int64_t value = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return value;
}

// Matches `step <n>:` at the start of a line (leading whitespace allowed).
// Returns the text after the colon, or nullopt.
std::optional<std::string_view> match_step_marker(std::string_view line) {
  std::string_view s = line;
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  if (!starts_with_ci(s, "step")) return std::nullopt;
  s.remove_prefix(4);
  if (s.empty() || !is_space(s.front())) return std::nullopt;
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  std::size_t d = 0;
  while (d < s.size() && s[d] >= '0' && s[d] <= '9') ++d;
  if (d == 0) return std::nullopt;
  s.remove_prefix(d);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  if (s.empty() || s.front() != ':') return std::nullopt;
  s.remove_prefix(1);
  if (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

}  // namespace

Answer canonicalize_answer(std::string_view raw) {
  Answer out;
  out.raw = std::string(raw);

  std::string s(trim(raw));

  while (!s.empty() && s.back() == '.') s.pop_back();
  while (!s.empty() && s.front() == '$') s.erase(s.begin());
  while (!s.empty() && s.back() == '$') s.pop_back();
  s = std::string(trim(s));
  while (!s.empty() && s.back() == '.') s.pop_back();

  // drop digit-group commas: 1,000 -> 1000
  std::string nocomma;
  nocomma.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == ',' && i > 0 && i + 1 < s.size() && s[i - 1] >= '0' &&
        s[i - 1] <= '9' && s[i + 1] >= '0' && s[i + 1] <= '9')
      continue;
    nocomma.push_back(s[i]);
  }
  s = std::move(nocomma);

  // integer?
  {
    std::string_view v = s;
    bool neg = false;
    if (!v.empty() && (v.front() == '+' || v.front() == '-')) {
      neg = v.front() == '-';
      v.remove_prefix(1);
    }
    if (all_digits(v)) {
      std::string digits = strip_leading_zeros(v);
      out.canonical = (neg && digits != "0") ? "-" + digits : digits;
      return out;
    }
  }

  // fraction p/q?
  if (std::size_t slash = s.find('/'); slash != std::string::npos) {
    auto p = parse_i64(trim(std::string_view(s).substr(0, slash)));
    auto q = parse_i64(trim(std::string_view(s).substr(slash + 1)));
    if (p && q && *q != 0) {
      std::int64_t num = *p;
      std::int64_t den = *q;
      if (den < 0) {
        num = -num;
        den = -den;
      }
      if (num == 0) {
        out.canonical = "0";
        return out;
      }
      std::int64_t g = std::gcd(num < 0 ? -num : num, den);
      num /= g;
      den /= g;
      out.canonical = den == 1 ? std::to_string(num)
                               : std::to_string(num) + "/" + std::to_string(den);
      return out;
    }
  }

  out.canonical = lower(s);
  return out;
}

std::optional<std::string> answer_marker_value(std::string_view text) {
  static constexpr std::string_view kMarker = "the answer is:";
  // last occurrence wins; a marker may sit mid-line after a computation
  std::size_t found = std::string_view::npos;
  for (std::size_t i = 0; i + kMarker.size() <= text.size(); ++i) {
    if (starts_with_ci(text.substr(i), kMarker)) found = i;
  }
  if (found == std::string_view::npos) return std::nullopt;
  std::string_view rest = text.substr(found + kMarker.size());
  if (std::size_t nl = rest.find('\n'); nl != std::string_view::npos)
    rest = rest.substr(0, nl);
  return std::string(rest);
}

std::optional<std::string> extract_answer_marker(std::string_view text) {
  auto raw = answer_marker_value(text);
  if (!raw) return std::nullopt;
  return canonicalize_answer(*raw).canonical;
}

Solution parse_solution(std::string_view raw_text, std::string_view problem_id,
                        std::string_view solution_id) {
  Solution out;
  out.problem_id = std::string(problem_id);
  out.solution_id = std::string(solution_id);

  std::vector<std::string> texts;
  for (std::string_view line : split_lines(raw_text)) {
    if (auto rest = match_step_marker(line)) {
      texts.emplace_back(*rest);
    } else if (!texts.empty()) {
      texts.back().push_back('\n');
      texts.back().append(line);
    }
    // text before the first marker is dropped
  }
  if (texts.empty())
    throw MalformedSolution("no `Step n:` marker found in solution text");

  out.steps.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    std::string t = texts[i];
    while (!t.empty() && is_space(t.back())) t.pop_back();
    out.steps.push_back(Step{static_cast<int>(i) + 1, std::move(t)});
  }
  out.answer = extract_answer_marker(out.steps.back().text);
  return out;
}

std::string render_solution(const Solution& solution) {
  std::string out;
  for (const Step& step : solution.steps) {
    if (!out.empty()) out.push_back('\n');
    out += "Step " + std::to_string(step.index) + ": " + step.text;
  }
  return out;
}

std::string step_prefix(const Solution& solution, int i) {
  if (i < 1 || static_cast<std::size_t>(i) > solution.steps.size())
    throw IndexOutOfRange("step_prefix: i=" + std::to_string(i) +
                          " out of range 1.." +
                          std::to_string(solution.steps.size()));
  std::string out;
  for (int k = 0; k < i; ++k) {
    if (k > 0) out.push_back('\n');
    out += solution.steps[static_cast<std::size_t>(k)].text;
  }
  return out;
}

}  // namespace stepwise
