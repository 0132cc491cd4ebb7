// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "stepwise/completer.hpp"

namespace stepwise {

enum class CacheMode { off, record, replay };

struct HttpCompleterConfig {
  std::string endpoint;  // e.g. "http://127.0.0.1:8080"
  std::string path = "/v1/completions";
  std::string model = "completer";
  std::string api_key_env = "STEPWISE_API_KEY";
  int timeout_seconds = 60;
  int tokens_per_step = 32;        // max_tokens = max_steps * tokens_per_step
  std::vector<std::string> stop;   // optional stop sequences
  CacheMode cache_mode = CacheMode::off;
  std::string cache_dir;           // required for record/replay
};

// Client for an OpenAI-compatible /v1/completions endpoint. The prompt is
// the question followed by the step prefix; `n` carries the rollout count.
// Raw response bodies can be recorded to a per-request-keyed cache and
// replayed later without a live server.
class HttpCompleter : public Completer {
 public:
  explicit HttpCompleter(HttpCompleterConfig config);

  std::vector<Rollout> complete(const CompletionRequest& request) override;
  std::string identity() const override;

  // exposed for conformance tests
  std::string payload_json(const CompletionRequest& request) const;
  std::string cache_key(const CompletionRequest& request) const;

 private:
  std::string fetch_body(const CompletionRequest& request) const;
  std::vector<Rollout> parse_body(const std::string& body,
                                  const CompletionRequest& request) const;

  HttpCompleterConfig config_;
  std::string api_key_;
};

}  // namespace stepwise
