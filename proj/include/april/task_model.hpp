// SPDX-License-Identifier: Apache-2.0
//
// Synthesis tasks and their inputs: the oracle suite, the method signature,
// the component library and the I/O examples handed to the synthesizer.
#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace april {

enum class InvocationKind { kInstanceMethod, kClassMethod, kStaticMethod, kModuleFunction };

std::string_view to_string(InvocationKind kind);
InvocationKind invocation_kind_from_string(std::string_view text);

struct Parameter {
  std::string name;
  std::string annotation;

  bool operator==(const Parameter&) const = default;
};

struct MethodSignature {
  std::string name;
  std::vector<Parameter> parameters;
  std::string return_annotation;
  InvocationKind kind = InvocationKind::kModuleFunction;
  // Verbatim source text of the signature. Prompt rendering uses this as-is.
  std::string source;

  /// The verbatim source when present, otherwise a `def` line assembled from
  /// the structured fields.
  std::string display() const;

  bool operator==(const MethodSignature&) const = default;
};

struct TestCase {
  std::string id;
  std::string source_code;
  std::optional<std::string> description;

  bool operator==(const TestCase&) const = default;
};

struct GenerationMeta {
  int iterations_used = 0;
  std::string generator;
  bool converged = true;

  bool operator==(const GenerationMeta&) const = default;
};

struct TestSuite {
  std::string task_id;
  std::vector<TestCase> cases;
  std::optional<GenerationMeta> generation_meta;

  bool contains(std::string_view case_id) const;
  bool operator==(const TestSuite&) const = default;
};

struct SynthesisTask {
  std::string id;
  MethodSignature signature;
  std::string module_path;
  std::string library_name;
  std::vector<TestCase> examples;
  std::string validation_suite_ref;

  bool operator==(const SynthesisTask&) const = default;
};

/// A task together with its resolved validation suite.
struct TaskBundle {
  SynthesisTask task;
  TestSuite validation;
};

bool is_identifier(std::string_view text);

// Invariant checks; throw ValidationError.
void validate(const MethodSignature& signature);
void validate(const TestSuite& suite);
void validate(const SynthesisTask& task);
/// The validation suite must be disjoint from, or a superset of, the examples
/// (compared by test source).
void validate_suite_relation(const SynthesisTask& task, const TestSuite& suite);

SynthesisTask parse_task_file(std::string_view content);
nlohmann::json task_to_json(const SynthesisTask& task);
std::string serialize_task(const SynthesisTask& task);

TestSuite parse_suite_file(std::string_view content);
nlohmann::json suite_to_json(const TestSuite& suite);
std::string serialize_suite(const TestSuite& suite);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

/// Loads a task file and resolves its validation suite relative to the task
/// file's directory.
TaskBundle load_task_bundle(const std::filesystem::path& task_file);
/// Every `*.json` task file directly inside `dir`, sorted by file name.
std::vector<TaskBundle> load_task_dir(const std::filesystem::path& dir);

struct TrainEvalSplit {
  std::vector<SynthesisTask> train;
  std::vector<SynthesisTask> eval;
};

/// Exact partition preserving input order within each side.
TrainEvalSplit split_train_eval(const std::vector<SynthesisTask>& tasks,
                                const std::set<std::string>& train_ids);

/// One id per non-empty line; `#` starts a comment.
std::set<std::string> parse_id_list(std::string_view content);

}  // namespace april
