// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#include "stepwise/io.hpp"

#include <cstdio>
#include <fstream>

namespace stepwise {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void schema_error(std::size_t line, const std::string& msg) {
  throw SchemaViolation("line " + std::to_string(line) + ": " + msg);
}

const json& require_key(const json& record, const char* key,
                        std::size_t line) {
  auto it = record.find(key);
  if (it == record.end())
    schema_error(line, std::string("missing required key \"") + key + "\"");
  return *it;
}

std::string require_string(const json& record, const char* key,
                           std::size_t line) {
  const json& v = require_key(record, key, line);
  if (!v.is_string())
    schema_error(line, std::string("key \"") + key + "\" must be a string");
  return v.get<std::string>();
}

}  // namespace

JsonlFile read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());

  JsonlFile file;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json record = json::parse(line, nullptr, false);
    if (record.is_discarded())
      schema_error(line_no, "not valid JSON");
    if (line_no == 1 && record.is_object() &&
        record.value("kind", "") == "header") {
      file.header = std::move(record);
      continue;
    }
    file.records.push_back(std::move(record));
  }
  return file;
}

void write_jsonl(const fs::path& path, const std::optional<json>& header,
                 const std::vector<json>& records) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string());
    if (header) out << header->dump() << "\n";
    for (const json& record : records) out << record.dump() << "\n";
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

json make_header(std::string_view stage, std::uint64_t hash) {
  return json{{"kind", "header"},
              {"v", 1},
              {"stage", std::string(stage)},
              {"config_hash", hash_hex(hash)}};
}

std::uint64_t config_hash(const json& config) {
  return fnv1a64(config.dump());
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

void check_header(const JsonlFile& file, const fs::path& path,
                  std::uint64_t expected) {
  if (!file.header)
    throw ConfigMismatch(path.string() + ": missing artifact header");
  std::string got = file.header->value("config_hash", "");
  if (got != hash_hex(expected))
    throw ConfigMismatch(path.string() + ": produced by config " + got +
                         ", current config is " + hash_hex(expected) +
                         "; refusing to reuse");
}

// ======================== Typed records ========================

json problem_to_json(const Problem& problem) {
  return json{{"id", problem.id},
              {"question", problem.question},
              {"gold_answer", problem.gold_answer}};
}

Problem problem_from_json(const json& record, std::size_t line) {
  Problem p;
  p.id = require_string(record, "id", line);
  p.question = require_string(record, "question", line);
  p.gold_answer = require_string(record, "gold_answer", line);
  if (canonicalize_answer(p.gold_answer).canonical.empty())
    schema_error(line, "gold_answer canonicalizes to empty");
  return p;
}

json solution_to_json(const Solution& solution) {
  json steps = json::array();
  for (const Step& step : solution.steps) steps.push_back(step.text);
  return json{{"problem_id", solution.problem_id},
              {"solution_id", solution.solution_id},
              {"steps", std::move(steps)},
              {"answer", solution.answer ? json(*solution.answer)
                                         : json(nullptr)}};
}

Solution solution_from_json(const json& record, std::size_t line) {
  Solution s;
  s.problem_id = require_string(record, "problem_id", line);
  s.solution_id = require_string(record, "solution_id", line);
  const json& steps = require_key(record, "steps", line);
  if (!steps.is_array() || steps.empty())
    schema_error(line, "steps must be a non-empty array");
  int index = 1;
  for (const json& step : steps) {
    if (!step.is_string()) schema_error(line, "steps entries must be strings");
    s.steps.push_back(Step{index++, step.get<std::string>()});
  }
  const json& answer = require_key(record, "answer", line);
  if (answer.is_string())
    s.answer = answer.get<std::string>();
  else if (!answer.is_null())
    schema_error(line, "answer must be string or null");
  return s;
}

json annotated_to_json(const AnnotatedSolution& annotated) {
  json steps = json::array();
  for (const StepAnnotation& ann : annotated.step_annotations)
    steps.push_back(json{{"i", ann.step_index},
                         {"hard", ann.hard_label},
                         {"soft", ann.soft_label},
                         {"n", ann.num_rollouts},
                         {"n_correct", ann.num_correct}});
  return json{{"problem_id", annotated.solution.problem_id},
              {"solution_id", annotated.solution.solution_id},
              {"outcome_label", annotated.outcome_label},
              {"steps", std::move(steps)}};
}

AnnotatedSolution annotated_from_json(
    const json& record, std::size_t line,
    const std::map<std::string, const Solution*>& solutions_by_id) {
  AnnotatedSolution a;
  std::string solution_id = require_string(record, "solution_id", line);
  auto it = solutions_by_id.find(solution_id);
  if (it == solutions_by_id.end())
    schema_error(line, "references unknown solution_id \"" + solution_id +
                           "\"");
  a.solution = *it->second;
  const json& outcome = require_key(record, "outcome_label", line);
  if (!outcome.is_number_integer())
    schema_error(line, "outcome_label must be 0 or 1");
  a.outcome_label = outcome.get<int>();
  const json& steps = require_key(record, "steps", line);
  if (!steps.is_array()) schema_error(line, "steps must be array");
  for (const json& step : steps) {
    StepAnnotation ann;
    ann.step_index = require_key(step, "i", line).get<int>();
    ann.hard_label = require_key(step, "hard", line).get<int>();
    ann.soft_label = require_key(step, "soft", line).get<double>();
    ann.num_rollouts = require_key(step, "n", line).get<int>();
    ann.num_correct = require_key(step, "n_correct", line).get<int>();
    a.step_annotations.push_back(ann);
  }
  if (a.step_annotations.size() != a.solution.steps.size())
    schema_error(line, "annotation count differs from step count");
  return a;
}

json reference_to_json(const ReferenceRecord& record) {
  json steps = json::array();
  for (const auto& [index, ref] : record.steps)
    steps.push_back(json{{"i", index},
                         {"label", ref.label},
                         {"potential", ref.potential}});
  return json{{"problem_id", record.problem_id},
              {"solution_id", record.solution_id},
              {"steps", std::move(steps)}};
}

ReferenceRecord reference_from_json(const json& record, std::size_t line) {
  ReferenceRecord r;
  r.problem_id = require_string(record, "problem_id", line);
  r.solution_id = require_string(record, "solution_id", line);
  const json& steps = require_key(record, "steps", line);
  if (!steps.is_array()) schema_error(line, "steps must be array");
  for (const json& step : steps) {
    StepReference ref;
    int index = require_key(step, "i", line).get<int>();
    ref.label = require_key(step, "label", line).get<int>();
    ref.potential = require_key(step, "potential", line).get<double>();
    r.steps.emplace_back(index, ref);
  }
  return r;
}

// ======================== File-level helpers ========================

namespace {

template <typename T, typename FromJson>
std::vector<T> read_records(const fs::path& path, FromJson&& from_json) {
  JsonlFile file = read_jsonl(path);
  std::vector<T> out;
  out.reserve(file.records.size());
  // header, when present, occupies line 1
  std::size_t line = file.header ? 2 : 1;
  for (const json& record : file.records)
    out.push_back(from_json(record, line++));
  return out;
}

}  // namespace

std::vector<Problem> read_problems(const fs::path& path) {
  return read_records<Problem>(path, problem_from_json);
}

std::vector<Solution> read_solutions(const fs::path& path) {
  return read_records<Solution>(path, solution_from_json);
}

std::vector<AnnotatedSolution> read_annotated(
    const fs::path& path, const std::vector<Solution>& solutions) {
  std::map<std::string, const Solution*> by_id;
  for (const Solution& s : solutions) by_id.emplace(s.solution_id, &s);
  return read_records<AnnotatedSolution>(
      path, [&](const json& record, std::size_t line) {
        return annotated_from_json(record, line, by_id);
      });
}

ReferenceMap read_reference_map(const fs::path& path) {
  ReferenceMap map;
  for (const ReferenceRecord& record :
       read_records<ReferenceRecord>(path, reference_from_json))
    for (const auto& [index, ref] : record.steps)
      map[{record.solution_id, index}] = ref;
  return map;
}

void write_problems(const fs::path& path, const std::vector<Problem>& problems,
                    std::optional<json> header) {
  std::vector<json> records;
  records.reserve(problems.size());
  for (const Problem& p : problems) records.push_back(problem_to_json(p));
  write_jsonl(path, header, records);
}

void write_solutions(const fs::path& path,
                     const std::vector<Solution>& solutions,
                     std::optional<json> header) {
  std::vector<json> records;
  records.reserve(solutions.size());
  for (const Solution& s : solutions) records.push_back(solution_to_json(s));
  write_jsonl(path, header, records);
}

void write_annotated(const fs::path& path,
                     const std::vector<AnnotatedSolution>& annotated,
                     std::optional<json> header) {
  std::vector<json> records;
  records.reserve(annotated.size());
  for (const AnnotatedSolution& a : annotated)
    records.push_back(annotated_to_json(a));
  write_jsonl(path, header, records);
}

void write_references(const fs::path& path,
                      const std::vector<ReferenceRecord>& records,
                      std::optional<json> header) {
  std::vector<json> out;
  out.reserve(records.size());
  for (const ReferenceRecord& r : records) out.push_back(reference_to_json(r));
  write_jsonl(path, header, out);
}

void write_json_file(const fs::path& path, const json& value) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string());
    out << value.dump(2) << "\n";
    if (!out) throw Error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  json value = json::parse(in, nullptr, false);
  if (value.is_discarded()) throw SchemaViolation(path.string() +
                                                  ": not valid JSON");
  return value;
}

}  // namespace stepwise
