// SPDX-License-Identifier: Apache-2.0
//
// Isolated execution of a candidate implementation against a test suite.
// The orchestrator talks to an execution shim over a one-shot JSON protocol:
//
//   stdin:  {candidate_source, module_path, library_name, tests:[{id, source}]}
//   stdout: {build_ok, tests:[{id, verdict, message, duration_ms}], stdout_tail, stderr_tail}
#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "april/task_model.hpp"

namespace april {

enum class Verdict { kPass, kFail, kError, kSkipped };
enum class Classification { kBuildError, kRuntimeError, kSomeTestsFail, kAllPass };

std::string_view to_string(Verdict verdict);
Verdict verdict_from_string(std::string_view text);
std::string_view to_string(Classification c);
Classification classification_from_string(std::string_view text);

inline constexpr std::size_t kTailCap = 8 * 1024;

struct SandboxJob {
  std::string task_id;
  std::string candidate_source;
  TestSuite suite;
  std::string module_path;
  std::string library_name;
  std::filesystem::path workspace_root;  // empty: system temp directory
  std::chrono::milliseconds timeout{0};  // 0: the sandbox's configured timeout
  std::map<std::string, std::string> env_overrides;
};

void validate(const SandboxJob& job);

struct TestVerdict {
  std::string case_id;
  Verdict verdict = Verdict::kSkipped;
  std::string message;
  double duration_ms = 0.0;

  bool operator==(const TestVerdict&) const = default;
};

struct SandboxResult {
  bool build_ok = false;
  std::vector<TestVerdict> per_test;
  std::string stdout_tail;
  std::string stderr_tail;
  Classification classification = Classification::kBuildError;
  double wall_time_ms = 0.0;
  std::string message;  // orchestrator note, e.g. "timeout"

  std::size_t passed() const;
};

/// AllPass iff build_ok and every verdict passes; any error verdict makes the
/// run a RuntimeError; remaining failures are SomeTestsFail.
Classification classify(bool build_ok, const std::vector<TestVerdict>& per_test);

/// 0 iff the result is AllPass.
int penalty_of(const SandboxResult& result);
/// 1 iff the result is AllPass.
int reward_of(const SandboxResult& result);

std::string tail(std::string_view text, std::size_t cap = kTailCap);

/// Summary fed back to LLMs: classification, up to `max_failures` failing
/// test messages and the stderr tail.
std::string failure_summary(const SandboxResult& result, std::size_t max_failures = 3);

nlohmann::json to_wire_request(const SandboxJob& job);
/// Validates a shim response against the job's suite and builds the result.
/// Suite cases the shim did not report are recorded as skipped.
SandboxResult parse_wire_response(const nlohmann::json& response, const TestSuite& suite);
nlohmann::json result_to_json(const SandboxResult& result);
SandboxResult result_from_json(const nlohmann::json& j);

class Sandbox {
 public:
  virtual ~Sandbox() = default;
  virtual SandboxResult run_candidate(const SandboxJob& job) = 0;
};

struct ShimConfig {
  std::vector<std::string> command;  // argv of the shim
  std::size_t workers = 4;
  std::chrono::milliseconds timeout{60'000};
  std::filesystem::path workspace_root;   // empty: system temp directory
  std::filesystem::path library_snapshot;  // copied into each workspace when set
  bool keep_workspaces = false;
};

/// Runs the shim as a subprocess in a private temporary workspace. The
/// process group is killed when the job times out.
class ShimSandbox final : public Sandbox {
 public:
  /// Throws EnvironmentError when the shim executable cannot be found.
  explicit ShimSandbox(ShimConfig config);

  SandboxResult run_candidate(const SandboxJob& job) override;
  const ShimConfig& config() const { return config_; }
  /// Workspaces retained under keep_workspaces, in creation order.
  std::vector<std::filesystem::path> kept_workspaces() const;

 private:
  std::filesystem::path prepare_workspace(const SandboxJob& job) const;

  ShimConfig config_;
  std::counting_semaphore<> slots_;
  mutable std::mutex mu_;
  std::vector<std::filesystem::path> kept_;
};

/// Evaluates wire requests in-process. Shares the protocol validation path
/// with ShimSandbox; used for desk-scale runs where spawning is wasteful.
class InProcessSandbox final : public Sandbox {
 public:
  using Evaluator = std::function<nlohmann::json(const nlohmann::json& request)>;

  explicit InProcessSandbox(Evaluator evaluator);
  SandboxResult run_candidate(const SandboxJob& job) override;

 private:
  Evaluator evaluator_;
};

/// Resolves a command name against PATH (or returns it when it has a slash
/// and exists). Empty when not found.
std::optional<std::filesystem::path> resolve_executable(const std::string& command);

}  // namespace april
