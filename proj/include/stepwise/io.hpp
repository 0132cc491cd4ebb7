// Copyright 2026 the stepwise authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "stepwise/annotator.hpp"
#include "stepwise/core.hpp"
#include "stepwise/synth.hpp"

namespace stepwise {

// ======================== Generic JSONL ========================

// Line-delimited JSON, UTF-8, no BOM. An optional leading header object
// (`{"kind":"header",...}`) carries the schema version and the hash of the
// config that produced the file.
struct JsonlFile {
  std::optional<nlohmann::json> header;
  std::vector<nlohmann::json> records;
};

// Throws SchemaViolation naming the 1-based line of the first bad record.
// Empty files yield an empty stream.
JsonlFile read_jsonl(const std::filesystem::path& path);

// Atomic: writes to a temp file in the same directory, then renames.
// Object keys are emitted in canonical (sorted) order.
void write_jsonl(const std::filesystem::path& path,
                 const std::optional<nlohmann::json>& header,
                 const std::vector<nlohmann::json>& records);

nlohmann::json make_header(std::string_view stage, std::uint64_t config_hash);

// Hash of a JSON value in canonical form; embedded in artifacts so a resume
// against a different config refuses instead of silently reusing files.
std::uint64_t config_hash(const nlohmann::json& config);

std::string hash_hex(std::uint64_t h);

// Reads the header (if any) and throws ConfigMismatch unless its
// config_hash matches `expected`.
void check_header(const JsonlFile& file, const std::filesystem::path& path,
                  std::uint64_t expected);

// ======================== Typed records ========================

nlohmann::json problem_to_json(const Problem& problem);
Problem problem_from_json(const nlohmann::json& record, std::size_t line);

nlohmann::json solution_to_json(const Solution& solution);
Solution solution_from_json(const nlohmann::json& record, std::size_t line);

// annotated records carry labels only; step texts live in the solutions
// file and are joined back by solution_id on read
nlohmann::json annotated_to_json(const AnnotatedSolution& annotated);
AnnotatedSolution annotated_from_json(
    const nlohmann::json& record, std::size_t line,
    const std::map<std::string, const Solution*>& solutions_by_id);

// reference labels: {"problem_id","solution_id","steps":[{"i","label","potential"}]}
struct ReferenceRecord {
  std::string problem_id;
  std::string solution_id;
  std::vector<std::pair<int, StepReference>> steps;
};
nlohmann::json reference_to_json(const ReferenceRecord& record);
ReferenceRecord reference_from_json(const nlohmann::json& record,
                                    std::size_t line);

std::vector<Problem> read_problems(const std::filesystem::path& path);
std::vector<Solution> read_solutions(const std::filesystem::path& path);
std::vector<AnnotatedSolution> read_annotated(
    const std::filesystem::path& path, const std::vector<Solution>& solutions);
ReferenceMap read_reference_map(const std::filesystem::path& path);

void write_problems(const std::filesystem::path& path,
                    const std::vector<Problem>& problems,
                    std::optional<nlohmann::json> header = std::nullopt);
void write_solutions(const std::filesystem::path& path,
                     const std::vector<Solution>& solutions,
                     std::optional<nlohmann::json> header = std::nullopt);
void write_annotated(const std::filesystem::path& path,
                     const std::vector<AnnotatedSolution>& annotated,
                     std::optional<nlohmann::json> header = std::nullopt);
void write_references(const std::filesystem::path& path,
                      const std::vector<ReferenceRecord>& records,
                      std::optional<nlohmann::json> header = std::nullopt);

// Atomic whole-file JSON write (reports, configs).
void write_json_file(const std::filesystem::path& path,
                     const nlohmann::json& value);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace stepwise
