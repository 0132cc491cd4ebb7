// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#include "stepwise/completer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

namespace stepwise {

namespace {

constexpr std::int64_t kOffsets[] = {1, 2, 3};

}  // namespace

std::vector<Rollout> SyntheticCompleter::complete(
    const CompletionRequest& request) {
  if (request.num_rollouts < 1)
    throw Error("complete: num_rollouts must be >= 1");
  auto chain = parse_chain(request.problem.question);
  if (!chain)
    throw CompleterUnavailable(
        "synthetic completer: question is not a synthetic chain: " +
        request.problem.id);

  const int depth = chain->depth();
  const int start_step = request.prefix_steps;

  // running value the prefix ends in; unparseable prefixes count as
  // corrupted and can never reach the gold answer
  std::int64_t state;
  if (start_step == 0) {
    state = chain->start;
  } else if (auto claim = claimed_result(request.prefix)) {
    state = *claim;
  } else {
    std::vector<std::int64_t> values = chain->values();
    state = values[static_cast<std::size_t>(
                std::min(start_step, depth) - 1)] +
            1;
  }

  std::vector<Rollout> rollouts;
  rollouts.reserve(static_cast<std::size_t>(request.num_rollouts));
  for (int j = 0; j < request.num_rollouts; ++j) {
    SplitMix64 rng(hash_mix(request.seed, static_cast<std::uint64_t>(j)));
    Rollout rollout;
    std::int64_t value = state;
    int emitted = 0;
    for (int k = start_step; k < depth && emitted < request.max_steps; ++k) {
      std::int64_t exact = chain->apply(k, value);
      std::int64_t result = exact;
      if (rng.bernoulli(error_rate_))
        result += kOffsets[rng.uniform_int(0, 2)];
      const Chain::Link& link = chain->links[static_cast<std::size_t>(k)];
      std::string text = std::to_string(value) + " " + link.op + " " +
                         std::to_string(link.operand) + " = " +
                         std::to_string(result) + ".";
      value = result;
      ++emitted;
      if (k + 1 == depth)
        text += "\n" + answer_marker_line(std::to_string(value));
      rollout.continuation_steps.push_back(Step{k + 1, std::move(text)});
    }
    const bool finished = start_step + emitted >= depth;
    if (finished) {
      if (rollout.continuation_steps.empty()) {
        // prefix already covers the whole chain: the decoded answer is
        // whatever the prefix concluded
        auto marker = extract_answer_marker(request.prefix);
        rollout.answer = marker ? *marker
                                : canonicalize_answer(std::to_string(value))
                                      .canonical;
      } else {
        rollout.answer = canonicalize_answer(std::to_string(value)).canonical;
      }
    }
    rollouts.push_back(std::move(rollout));
  }
  return rollouts;
}

std::string SyntheticCompleter::identity() const {
  return "synthetic(error_rate=" + std::to_string(error_rate_) + ")";
}

Rollout parse_continuation(std::string_view text, int prefix_steps,
                           int max_steps) {
  std::vector<std::string> chunks;
  for (std::string_view line : split_lines(text)) {
    bool is_marker = false;
    {
      std::string_view s = line;
      while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
      if (starts_with_ci(s, "step")) {
        std::string_view rest = s.substr(4);
        if (!rest.empty() && is_space(rest.front())) {
          while (!rest.empty() && is_space(rest.front())) rest.remove_prefix(1);
          std::size_t d = 0;
          while (d < rest.size() && rest[d] >= '0' && rest[d] <= '9') ++d;
          if (d > 0) {
            rest.remove_prefix(d);
            while (!rest.empty() &&
                   (rest.front() == ' ' || rest.front() == '\t'))
              rest.remove_prefix(1);
            if (!rest.empty() && rest.front() == ':') {
              is_marker = true;
              rest.remove_prefix(1);
              if (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
              chunks.emplace_back(rest);
            }
          }
        }
      }
      if (!is_marker) {
        if (std::string_view body = trim(line); !body.empty()) {
          if (chunks.empty()) {
            chunks.emplace_back(line);
          } else {
            chunks.back().push_back('\n');
            chunks.back().append(line);
          }
        }
      }
    }
  }

  Rollout rollout;
  for (std::string& chunk : chunks) {
    if (static_cast<int>(rollout.continuation_steps.size()) >= max_steps)
      break;
    while (!chunk.empty() && is_space(chunk.back())) chunk.pop_back();
    int index = prefix_steps +
                static_cast<int>(rollout.continuation_steps.size()) + 1;
    auto marker = extract_answer_marker(chunk);
    rollout.continuation_steps.push_back(Step{index, std::move(chunk)});
    if (marker) {
      rollout.answer = *marker;
      break;
    }
  }
  return rollout;
}

std::vector<CompletionOutcome> complete_batch(
    Completer& completer, const std::vector<CompletionRequest>& requests,
    const BatchOptions& options) {
  if (options.max_in_flight < 1)
    throw Error("complete_batch: max_in_flight must be >= 1");

  std::vector<CompletionOutcome> outcomes(requests.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= requests.size()) return;
      CompletionOutcome& out = outcomes[i];
      for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
        out.attempts = attempt;
        try {
          out.rollouts = completer.complete(requests[i]);
          out.error.clear();
          break;
        } catch (const CompleterUnavailable& e) {
          out.error = std::string("CompleterUnavailable: ") + e.what();
        } catch (const MalformedCompletion& e) {
          out.error = std::string("MalformedCompletion: ") + e.what();
        } catch (const std::exception& e) {
          out.error = e.what();
          break;  // not retryable
        }
        if (attempt < options.max_attempts) {
          double delay = options.backoff_initial_ms *
                         std::pow(options.backoff_factor, attempt - 1);
          std::this_thread::sleep_for(
              std::chrono::milliseconds(static_cast<long>(delay)));
        }
      }
    }
  };

  std::size_t n_workers = std::min<std::size_t>(
      static_cast<std::size_t>(options.max_in_flight), requests.size());
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(n_workers);
    for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }
  return outcomes;
}

}  // namespace stepwise
