// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#include "stepwise/http_completer.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace stepwise {

namespace fs = std::filesystem;
using nlohmann::json;

HttpCompleter::HttpCompleter(HttpCompleterConfig config)
    : config_(std::move(config)) {
  if (config_.cache_mode != CacheMode::off && config_.cache_dir.empty())
    throw Error("HttpCompleter: cache_dir required for record/replay mode");
  if (const char* key = std::getenv(config_.api_key_env.c_str()))
    api_key_ = key;
}

std::string HttpCompleter::payload_json(
    const CompletionRequest& request) const {
  json payload{
      {"model", config_.model},
      {"prompt", request.problem.question + "\n" + request.prefix},
      {"n", request.num_rollouts},
      {"temperature", request.temperature},
      {"max_tokens", request.max_steps * config_.tokens_per_step},
      {"seed", request.seed},
  };
  if (!config_.stop.empty()) payload["stop"] = config_.stop;
  return payload.dump();
}

std::string HttpCompleter::cache_key(const CompletionRequest& request) const {
  std::uint64_t h = fnv1a64(config_.endpoint);
  h = fnv1a64(config_.path, h);
  h = fnv1a64(payload_json(request), h);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::string HttpCompleter::fetch_body(const CompletionRequest& request) const {
  const fs::path cache_file =
      config_.cache_mode == CacheMode::off
          ? fs::path{}
          : fs::path(config_.cache_dir) / (cache_key(request) + ".json");

  if (config_.cache_mode == CacheMode::replay) {
    std::ifstream in(cache_file);
    if (!in)
      throw CompleterUnavailable("replay cache miss: " + cache_file.string());
    json entry = json::parse(in, nullptr, false);
    if (entry.is_discarded() || !entry.contains("response_body"))
      throw CompleterUnavailable("corrupt cache entry: " +
                                 cache_file.string());
    return entry["response_body"].get<std::string>();
  }

  httplib::Client client(config_.endpoint);
  client.set_connection_timeout(config_.timeout_seconds, 0);
  client.set_read_timeout(config_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!api_key_.empty())
    headers.emplace("Authorization", "Bearer " + api_key_);

  auto res = client.Post(config_.path, headers, payload_json(request),
                         "application/json");
  if (!res)
    throw CompleterUnavailable("transport error: " +
                               httplib::to_string(res.error()));
  if (res->status != 200)
    throw CompleterUnavailable("http status " + std::to_string(res->status) +
                               ": " + res->body);

  if (config_.cache_mode == CacheMode::record) {
    fs::create_directories(config_.cache_dir);
    json entry{{"request", json::parse(payload_json(request))},
               {"response_body", res->body}};
    // unique temp + atomic rename keeps concurrent writers safe
    fs::path tmp = cache_file;
    tmp += ".tmp" + std::to_string(SplitMix64(
                        static_cast<std::uint64_t>(
                            std::chrono::steady_clock::now()
                                .time_since_epoch()
                                .count()) ^
                        std::hash<std::thread::id>{}(
                            std::this_thread::get_id()))
                        .next());
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << entry.dump(2) << "\n";
    }
    fs::rename(tmp, cache_file);
  }
  return res->body;
}

std::vector<Rollout> HttpCompleter::parse_body(
    const std::string& body, const CompletionRequest& request) const {
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.contains("choices") ||
      !doc["choices"].is_array())
    throw MalformedCompletion("response is not a completions object");

  const json& choices = doc["choices"];
  if (static_cast<int>(choices.size()) < request.num_rollouts)
    throw MalformedCompletion(
        "backend returned " + std::to_string(choices.size()) +
        " generations, expected " + std::to_string(request.num_rollouts));

  // request order: by the `index` field when the server provides it
  std::vector<const json*> ordered;
  ordered.reserve(choices.size());
  for (const json& c : choices) ordered.push_back(&c);
  bool all_indexed = true;
  for (const json* c : ordered)
    if (!c->contains("index") || !(*c)["index"].is_number_integer())
      all_indexed = false;
  if (all_indexed)
    std::sort(ordered.begin(), ordered.end(),
              [](const json* a, const json* b) {
                return (*a)["index"].get<int>() < (*b)["index"].get<int>();
              });

  std::vector<Rollout> rollouts;
  rollouts.reserve(static_cast<std::size_t>(request.num_rollouts));
  for (int j = 0; j < request.num_rollouts; ++j) {
    const json& choice = *ordered[static_cast<std::size_t>(j)];
    std::string text =
        choice.contains("text") && choice["text"].is_string()
            ? choice["text"].get<std::string>()
            : std::string{};
    rollouts.push_back(
        parse_continuation(text, request.prefix_steps, request.max_steps));
  }
  return rollouts;
}

std::vector<Rollout> HttpCompleter::complete(
    const CompletionRequest& request) {
  if (request.num_rollouts < 1)
    throw Error("complete: num_rollouts must be >= 1");
  return parse_body(fetch_body(request), request);
}

std::string HttpCompleter::identity() const {
  return "http(" + config_.endpoint + config_.path + ",model=" +
         config_.model + ")";
}

}  // namespace stepwise
