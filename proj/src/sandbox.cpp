// SPDX-License-Identifier: Apache-2.0
#include "april/sandbox.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <set>
#include <sstream>

#include "april/errors.hpp"
#include "april/subprocess.hpp"

namespace april {

using nlohmann::json;

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::kPass: return "pass";
    case Verdict::kFail: return "fail";
    case Verdict::kError: return "error";
    case Verdict::kSkipped: return "skipped";
  }
  return "skipped";
}

Verdict verdict_from_string(std::string_view text) {
  if (text == "pass") return Verdict::kPass;
  if (text == "fail") return Verdict::kFail;
  if (text == "error") return Verdict::kError;
  if (text == "skipped") return Verdict::kSkipped;
  throw ShimProtocolError("unknown verdict '" + std::string(text) + "'");
}

std::string_view to_string(Classification c) {
  switch (c) {
    case Classification::kBuildError: return "BuildError";
    case Classification::kRuntimeError: return "RuntimeError";
    case Classification::kSomeTestsFail: return "SomeTestsFail";
    case Classification::kAllPass: return "AllPass";
  }
  return "BuildError";
}

Classification classification_from_string(std::string_view text) {
  for (auto c : {Classification::kBuildError, Classification::kRuntimeError, Classification::kSomeTestsFail,
                 Classification::kAllPass}) {
    if (to_string(c) == text) return c;
  }
  throw SchemaError("unknown classification '" + std::string(text) + "'");
}

void validate(const SandboxJob& job) {
  if (job.candidate_source.empty()) throw ValidationError("sandbox job for '" + job.task_id + "' has no candidate");
  if (job.timeout.count() < 0) throw ValidationError("sandbox timeout must not be negative");
}

std::size_t SandboxResult::passed() const {
  return static_cast<std::size_t>(
      std::count_if(per_test.begin(), per_test.end(), [](const TestVerdict& v) { return v.verdict == Verdict::kPass; }));
}

Classification classify(bool build_ok, const std::vector<TestVerdict>& per_test) {
  if (!build_ok) return Classification::kBuildError;
  bool any_error = false, any_other = false;
  for (const auto& v : per_test) {
    if (v.verdict == Verdict::kError) any_error = true;
    else if (v.verdict != Verdict::kPass) any_other = true;
  }
  if (any_error) return Classification::kRuntimeError;
  if (any_other) return Classification::kSomeTestsFail;
  return Classification::kAllPass;
}

int penalty_of(const SandboxResult& result) { return result.classification == Classification::kAllPass ? 0 : 1; }
int reward_of(const SandboxResult& result) { return 1 - penalty_of(result); }

std::string tail(std::string_view text, std::size_t cap) {
  if (text.size() <= cap) return std::string(text);
  return std::string(text.substr(text.size() - cap));
}

std::string failure_summary(const SandboxResult& result, std::size_t max_failures) {
  std::ostringstream out;
  out << "classification: " << to_string(result.classification) << "\n";
  if (!result.message.empty()) out << "note: " << result.message << "\n";
  std::size_t shown = 0;
  for (const auto& v : result.per_test) {
    if (v.verdict == Verdict::kPass) continue;
    if (shown++ == max_failures) break;
    out << v.case_id << " " << to_string(v.verdict) << ": " << v.message << "\n";
  }
  if (!result.stderr_tail.empty()) out << "stderr:\n" << result.stderr_tail << "\n";
  return out.str();
}

json to_wire_request(const SandboxJob& job) {
  json tests = json::array();
  for (const auto& c : job.suite.cases) tests.push_back({{"id", c.id}, {"source", c.source_code}});
  return {{"candidate_source", job.candidate_source},
          {"module_path", job.module_path},
          {"library_name", job.library_name},
          {"tests", tests}};
}

SandboxResult parse_wire_response(const json& response, const TestSuite& suite) {
  if (!response.is_object() || !response.contains("build_ok") || !response.at("build_ok").is_boolean() ||
      !response.contains("tests") || !response.at("tests").is_array()) {
    throw ShimProtocolError("response lacks build_ok/tests");
  }
  SandboxResult r;
  r.build_ok = response.at("build_ok").get<bool>();
  r.stdout_tail = tail(response.value("stdout_tail", std::string{}));
  r.stderr_tail = tail(response.value("stderr_tail", std::string{}));

  std::set<std::string> seen;
  if (r.build_ok) {
    for (const auto& t : response.at("tests")) {
      if (!t.is_object() || !t.contains("id") || !t.contains("verdict")) {
        throw ShimProtocolError("test entry lacks id/verdict");
      }
      TestVerdict v;
      v.case_id = t.at("id").get<std::string>();
      if (!suite.contains(v.case_id)) throw ShimProtocolError("shim reported unknown test '" + v.case_id + "'");
      if (!seen.insert(v.case_id).second) throw ShimProtocolError("shim reported test '" + v.case_id + "' twice");
      v.verdict = verdict_from_string(t.at("verdict").get<std::string>());
      v.message = t.value("message", std::string{});
      v.duration_ms = t.value("duration_ms", 0.0);
      r.per_test.push_back(std::move(v));
    }
    for (const auto& c : suite.cases) {
      if (!seen.count(c.id)) r.per_test.push_back({c.id, Verdict::kSkipped, "not reported by shim", 0.0});
    }
  }
  r.classification = classify(r.build_ok, r.per_test);
  return r;
}

json result_to_json(const SandboxResult& result) {
  json tests = json::array();
  for (const auto& v : result.per_test) {
    tests.push_back({{"id", v.case_id},
                     {"verdict", std::string(to_string(v.verdict))},
                     {"message", v.message},
                     {"duration_ms", v.duration_ms}});
  }
  return {{"build_ok", result.build_ok},
          {"tests", tests},
          {"stdout_tail", result.stdout_tail},
          {"stderr_tail", result.stderr_tail},
          {"classification", std::string(to_string(result.classification))},
          {"wall_time_ms", result.wall_time_ms},
          {"message", result.message}};
}

SandboxResult result_from_json(const json& j) {
  SandboxResult r;
  r.build_ok = j.at("build_ok").get<bool>();
  for (const auto& t : j.at("tests")) {
    r.per_test.push_back({t.at("id").get<std::string>(), verdict_from_string(t.at("verdict").get<std::string>()),
                          t.value("message", std::string{}), t.value("duration_ms", 0.0)});
  }
  r.stdout_tail = j.value("stdout_tail", std::string{});
  r.stderr_tail = j.value("stderr_tail", std::string{});
  r.classification = classification_from_string(j.at("classification").get<std::string>());
  r.wall_time_ms = j.value("wall_time_ms", 0.0);
  r.message = j.value("message", std::string{});
  return r;
}

std::optional<std::filesystem::path> resolve_executable(const std::string& command) {
  if (command.empty()) return std::nullopt;
  auto executable = [](const std::filesystem::path& p) {
    return std::filesystem::is_regular_file(p) && ::access(p.c_str(), X_OK) == 0;
  };
  if (command.find('/') != std::string::npos) {
    if (executable(command)) return std::filesystem::path(command);
    return std::nullopt;
  }
  const char* path = std::getenv("PATH");
  std::istringstream dirs(path ? path : "");
  std::string dir;
  while (std::getline(dirs, dir, ':')) {
    if (dir.empty()) continue;
    std::filesystem::path candidate = std::filesystem::path(dir) / command;
    if (executable(candidate)) return candidate;
  }
  return std::nullopt;
}

namespace {

std::filesystem::path make_temp_dir(const std::filesystem::path& root) {
  std::filesystem::path base = root.empty() ? std::filesystem::temp_directory_path() : root;
  std::filesystem::create_directories(base);
  std::string templ = (base / "april-ws-XXXXXX").string();
  if (!::mkdtemp(templ.data())) throw EnvironmentError("cannot create workspace under " + base.string());
  return templ;
}

}  // namespace

ShimSandbox::ShimSandbox(ShimConfig config)
    : config_(std::move(config)), slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, config_.workers))) {
  if (config_.command.empty()) throw EnvironmentError("no shim command configured");
  if (!resolve_executable(config_.command.front())) {
    throw EnvironmentError("shim '" + config_.command.front() + "' is not an executable file");
  }
  if (!config_.library_snapshot.empty() && !std::filesystem::is_directory(config_.library_snapshot)) {
    throw EnvironmentError("library snapshot " + config_.library_snapshot.string() + " is not a directory");
  }
}

std::vector<std::filesystem::path> ShimSandbox::kept_workspaces() const {
  std::lock_guard lock(mu_);
  return kept_;
}

std::filesystem::path ShimSandbox::prepare_workspace(const SandboxJob& job) const {
  std::filesystem::path root = job.workspace_root.empty() ? config_.workspace_root : job.workspace_root;
  std::filesystem::path ws = make_temp_dir(root);
  if (!config_.library_snapshot.empty()) {
    std::filesystem::copy(config_.library_snapshot, ws,
                          std::filesystem::copy_options::recursive | std::filesystem::copy_options::copy_symlinks);
  }
  if (!job.module_path.empty()) {
    std::string rel = job.module_path;
    std::replace(rel.begin(), rel.end(), '.', '/');
    std::filesystem::path module_file = ws / (rel + ".py");
    std::filesystem::create_directories(module_file.parent_path());
    std::string existing;
    if (std::filesystem::exists(module_file)) existing = read_text_file(module_file) + "\n\n";
    write_text_file(module_file, existing + job.candidate_source + "\n");
  }
  return ws;
}

SandboxResult ShimSandbox::run_candidate(const SandboxJob& job) {
  validate(job);
  slots_.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{slots_};

  auto started = std::chrono::steady_clock::now();
  std::filesystem::path ws = prepare_workspace(job);
  auto cleanup = [&] {
    if (config_.keep_workspaces) {
      std::lock_guard lock(mu_);
      kept_.push_back(ws);
    } else {
      std::error_code ec;
      std::filesystem::remove_all(ws, ec);
    }
  };

  std::map<std::string, std::string> env = job.env_overrides;
  env["APRIL_WORKSPACE"] = ws.string();
  const char* py = std::getenv("PYTHONPATH");
  env["PYTHONPATH"] = ws.string() + (py && *py ? ":" + std::string(py) : std::string{});

  std::chrono::milliseconds timeout = job.timeout.count() > 0 ? job.timeout : config_.timeout;
  ProcessOutcome proc;
  try {
    proc = run_process(config_.command, ws, env, to_wire_request(job).dump(), timeout);
  } catch (...) {
    cleanup();
    throw;
  }
  cleanup();
  double wall = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();

  if (proc.timed_out) {
    SandboxResult r;
    r.build_ok = false;
    r.classification = Classification::kRuntimeError;
    r.message = "timeout";
    r.stdout_tail = tail(proc.out);
    r.stderr_tail = tail(proc.err);
    r.wall_time_ms = wall;
    return r;
  }

  json response;
  try {
    response = json::parse(proc.out);
  } catch (const json::parse_error&) {
    throw ShimProtocolError("shim exited with code " + std::to_string(proc.exit_code) +
                            " and unparseable stdout: " + tail(proc.out, 200) + tail(proc.err, 400));
  }
  SandboxResult r = parse_wire_response(response, job.suite);
  if (r.stderr_tail.empty()) r.stderr_tail = tail(proc.err);
  r.wall_time_ms = wall;
  return r;
}

InProcessSandbox::InProcessSandbox(Evaluator evaluator) : evaluator_(std::move(evaluator)) {}

SandboxResult InProcessSandbox::run_candidate(const SandboxJob& job) {
  validate(job);
  auto started = std::chrono::steady_clock::now();
  SandboxResult r = parse_wire_response(evaluator_(to_wire_request(job)), job.suite);
  r.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return r;
}

}  // namespace april
