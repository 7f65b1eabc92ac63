// SPDX-License-Identifier: Apache-2.0
#include "april/task_model.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "april/errors.hpp"

namespace april {

using nlohmann::json;

std::string_view to_string(InvocationKind kind) {
  switch (kind) {
    case InvocationKind::kInstanceMethod: return "instance_method";
    case InvocationKind::kClassMethod: return "class_method";
    case InvocationKind::kStaticMethod: return "static_method";
    case InvocationKind::kModuleFunction: return "module_function";
  }
  return "module_function";
}

InvocationKind invocation_kind_from_string(std::string_view text) {
  if (text == "instance_method") return InvocationKind::kInstanceMethod;
  if (text == "class_method") return InvocationKind::kClassMethod;
  if (text == "static_method") return InvocationKind::kStaticMethod;
  if (text == "module_function") return InvocationKind::kModuleFunction;
  throw ValidationError("unknown invocation kind '" + std::string(text) + "'");
}

std::string MethodSignature::display() const {
  if (!source.empty()) return source;
  std::string out = "def " + name + "(";
  bool first = true;
  if (kind == InvocationKind::kInstanceMethod) {
    out += "self";
    first = false;
  } else if (kind == InvocationKind::kClassMethod) {
    out += "cls";
    first = false;
  }
  for (const auto& p : parameters) {
    if (!first) out += ", ";
    first = false;
    out += p.name;
    if (!p.annotation.empty()) out += ": " + p.annotation;
  }
  out += ")";
  if (!return_annotation.empty()) out += " -> " + return_annotation;
  return out;
}

bool TestSuite::contains(std::string_view case_id) const {
  return std::any_of(cases.begin(), cases.end(),
                     [&](const TestCase& c) { return c.id == case_id; });
}

bool is_identifier(std::string_view text) {
  if (text.empty()) return false;
  auto head = static_cast<unsigned char>(text.front());
  if (!(std::isalpha(head) || head == '_')) return false;
  return std::all_of(text.begin() + 1, text.end(), [](char c) {
    auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || u == '_';
  });
}

void validate(const MethodSignature& signature) {
  if (!is_identifier(signature.name)) {
    throw ValidationError("signature name '" + signature.name + "' is not a valid identifier");
  }
  std::unordered_set<std::string> seen;
  for (const auto& p : signature.parameters) {
    if (!is_identifier(p.name)) {
      throw ValidationError("parameter name '" + p.name + "' is not a valid identifier");
    }
    if (!seen.insert(p.name).second) {
      throw ValidationError("duplicate parameter name '" + p.name + "'");
    }
  }
}

void validate(const TestSuite& suite) {
  std::unordered_set<std::string> seen;
  for (const auto& c : suite.cases) {
    if (c.source_code.empty()) throw ValidationError("test case '" + c.id + "' has empty source");
    if (!seen.insert(c.id).second) {
      throw ValidationError("duplicate test case id '" + c.id + "' in suite for " + suite.task_id);
    }
  }
}

void validate(const SynthesisTask& task) {
  if (task.id.empty()) throw ValidationError("task id is empty");
  validate(task.signature);
  if (task.examples.empty()) throw ValidationError("task '" + task.id + "' has no examples");
  std::unordered_set<std::string> seen;
  for (const auto& c : task.examples) {
    if (c.source_code.empty()) throw ValidationError("example '" + c.id + "' has empty source");
    if (!seen.insert(c.id).second) throw ValidationError("duplicate example id '" + c.id + "'");
  }
}

void validate_suite_relation(const SynthesisTask& task, const TestSuite& suite) {
  std::unordered_set<std::string> suite_sources;
  for (const auto& c : suite.cases) suite_sources.insert(c.source_code);
  std::size_t shared = 0;
  for (const auto& e : task.examples) shared += suite_sources.count(e.source_code);
  if (shared != 0 && shared != task.examples.size()) {
    throw ValidationError("validation suite of '" + task.id +
                          "' partially overlaps the examples; it must be disjoint or a superset");
  }
}

namespace {

const json& require(const json& obj, const char* key, const char* where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw SchemaError(std::string("missing field '") + key + "' in " + where);
  }
  return obj.at(key);
}

std::string require_string(const json& obj, const char* key, const char* where) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) throw SchemaError(std::string("field '") + key + "' in " + where + " must be a string");
  return v.get<std::string>();
}

json parse_json(std::string_view content, const char* what) {
  try {
    return json::parse(content);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string(what) + " is not well-formed JSON: " + e.what());
  }
}

TestCase test_case_from_json(const json& j, const char* where) {
  TestCase c;
  c.id = require_string(j, "id", where);
  c.source_code = require_string(j, "source", where);
  if (j.contains("description") && !j.at("description").is_null()) {
    c.description = j.at("description").get<std::string>();
  }
  return c;
}

json test_case_to_json(const TestCase& c) {
  json j = {{"id", c.id}, {"source", c.source_code}};
  if (c.description) j["description"] = *c.description;
  return j;
}

}  // namespace

SynthesisTask parse_task_file(std::string_view content) {
  json j = parse_json(content, "task file");
  if (!j.is_object()) throw SchemaError("task file must hold a JSON object");

  SynthesisTask task;
  task.id = require_string(j, "id", "task");
  const json& sig = require(j, "signature", "task");
  task.signature.name = require_string(sig, "name", "signature");
  const json& params = require(sig, "params", "signature");
  if (!params.is_array()) throw SchemaError("signature.params must be an array");
  for (const auto& p : params) {
    task.signature.parameters.push_back(
        {require_string(p, "name", "signature.params"), p.value("annotation", std::string{})});
  }
  task.signature.return_annotation = require_string(sig, "returns", "signature");
  task.signature.kind = invocation_kind_from_string(require_string(sig, "kind", "signature"));
  task.signature.source = sig.value("source", std::string{});
  task.module_path = require_string(j, "module_path", "task");
  task.library_name = require_string(j, "library_name", "task");
  const json& examples = require(j, "examples", "task");
  if (!examples.is_array()) throw SchemaError("examples must be an array");
  for (const auto& e : examples) task.examples.push_back(test_case_from_json(e, "examples"));
  task.validation_suite_ref = require_string(j, "validation_suite", "task");

  validate(task);
  return task;
}

json task_to_json(const SynthesisTask& task) {
  json params = json::array();
  for (const auto& p : task.signature.parameters) {
    params.push_back({{"name", p.name}, {"annotation", p.annotation}});
  }
  json sig = {{"name", task.signature.name},
              {"params", params},
              {"returns", task.signature.return_annotation},
              {"kind", std::string(to_string(task.signature.kind))}};
  if (!task.signature.source.empty()) sig["source"] = task.signature.source;
  json examples = json::array();
  for (const auto& e : task.examples) examples.push_back(test_case_to_json(e));
  return {{"id", task.id},
          {"signature", sig},
          {"module_path", task.module_path},
          {"library_name", task.library_name},
          {"examples", examples},
          {"validation_suite", task.validation_suite_ref}};
}

std::string serialize_task(const SynthesisTask& task) { return task_to_json(task).dump(2) + "\n"; }

TestSuite parse_suite_file(std::string_view content) {
  json j = parse_json(content, "suite file");
  TestSuite suite;
  suite.task_id = require_string(j, "task_id", "suite");
  const json& cases = require(j, "cases", "suite");
  if (!cases.is_array()) throw SchemaError("suite cases must be an array");
  for (const auto& c : cases) suite.cases.push_back(test_case_from_json(c, "suite cases"));
  if (j.contains("generation_meta") && !j.at("generation_meta").is_null()) {
    const json& m = j.at("generation_meta");
    suite.generation_meta = GenerationMeta{m.value("iterations_used", 0), m.value("generator", std::string{}),
                                           m.value("converged", true)};
  }
  validate(suite);
  return suite;
}

json suite_to_json(const TestSuite& suite) {
  json cases = json::array();
  for (const auto& c : suite.cases) cases.push_back(test_case_to_json(c));
  json j = {{"task_id", suite.task_id}, {"cases", cases}};
  if (suite.generation_meta) {
    j["generation_meta"] = {{"iterations_used", suite.generation_meta->iterations_used},
                            {"generator", suite.generation_meta->generator},
                            {"converged", suite.generation_meta->converged}};
  }
  return j;
}

std::string serialize_suite(const TestSuite& suite) { return suite_to_json(suite).dump(2) + "\n"; }

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EnvironmentError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw EnvironmentError("cannot write " + path.string());
  out << content;
}

TaskBundle load_task_bundle(const std::filesystem::path& task_file) {
  TaskBundle bundle;
  bundle.task = parse_task_file(read_text_file(task_file));
  std::filesystem::path suite_path = bundle.task.validation_suite_ref;
  if (suite_path.is_relative()) suite_path = task_file.parent_path() / suite_path;
  if (!std::filesystem::exists(suite_path)) {
    throw ValidationError("validation suite '" + bundle.task.validation_suite_ref + "' of task '" +
                          bundle.task.id + "' does not resolve");
  }
  bundle.validation = parse_suite_file(read_text_file(suite_path));
  validate_suite_relation(bundle.task, bundle.validation);
  return bundle;
}

std::vector<TaskBundle> load_task_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw EnvironmentError("task directory " + dir.string() + " not found");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<TaskBundle> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_task_bundle(f));
  return out;
}

TrainEvalSplit split_train_eval(const std::vector<SynthesisTask>& tasks,
                                const std::set<std::string>& train_ids) {
  std::set<std::string> known;
  for (const auto& t : tasks) known.insert(t.id);
  for (const auto& id : train_ids) {
    if (!known.count(id)) throw UnknownTaskId("'" + id + "' is not a loaded task");
  }
  TrainEvalSplit split;
  for (const auto& t : tasks) {
    (train_ids.count(t.id) ? split.train : split.eval).push_back(t);
  }
  return split;
}

std::set<std::string> parse_id_list(std::string_view content) {
  std::set<std::string> ids;
  std::istringstream in{std::string(content)};
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    auto e = line.find_last_not_of(" \t\r");
    ids.insert(line.substr(b, e - b + 1));
  }
  return ids;
}

}  // namespace april
