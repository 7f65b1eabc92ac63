// SPDX-License-Identifier: Apache-2.0
//
// Application configuration: one JSON document, overridden by APRIL_*
// environment variables, overridden in turn by command-line flags.
//
//   {
//     "backends":   {"default"|"synthesis"|"critique"|"edit"|"oracle_agent"|"quality_evaluator":
//                      {"mock": "script.json"} or {"url": ..., "model": ..., ...}},
//     "generation": {"temperature", "top_p", "max_input_tokens", "max_output_tokens", "seed"},
//     "sandbox":    {"kind": "shim"|"stub", "command": [...], "workers", "timeout_s",
//                    "library_snapshot", "workspace_root"},
//     "apo":        {"beam_width", "max_depth", "proposals_per_candidate"},
//     "grpo":       {... see GRPOConfig ...},
//     "oracle":     {"max_iterations", "quality_threshold"},
//     "policy":     {"kind": "toy"|"external", "command": [...], "vocabulary": [...], "length"},
//     "paths":      {"tasks", "runs"}
//   }
//
// Relative paths resolve against the config file's directory.
#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "april/apo_engine.hpp"
#include "april/llm_backend.hpp"
#include "april/oracle_gen.hpp"
#include "april/policy.hpp"
#include "april/rlvr_trainer.hpp"
#include "april/sandbox.hpp"

namespace april {

enum class BackendRole { kSynthesis, kCritique, kEdit, kOracleAgent, kQualityEvaluator };

std::string_view to_string(BackendRole role);

struct BackendSpec {
  std::optional<std::filesystem::path> mock_script;
  std::optional<HttpBackendConfig> http;

  bool configured() const { return mock_script || http; }
};

struct SandboxSpec {
  std::string kind = "shim";  // "shim" or the in-process "stub" language
  std::vector<std::string> command = {"python3", "-m", "april_exec_shim"};
  bool command_explicit = false;
  std::size_t workers = 4;
  std::chrono::milliseconds timeout{60'000};
  std::filesystem::path library_snapshot;
  std::filesystem::path workspace_root;
  bool keep_workspaces = false;
};

struct PolicySpec {
  std::string kind = "toy";
  std::vector<std::string> command;
  std::vector<std::string> vocabulary = {"a", "b", "c", "d"};
  std::size_t length = 3;
};

struct AppConfig {
  std::map<std::string, BackendSpec> backends;  // keyed by role name or "default"
  GenerationParams generation;
  SandboxSpec sandbox;
  BeamConfig apo;
  GRPOConfig grpo;
  OracleGenConfig oracle;
  PolicySpec policy;
  std::filesystem::path tasks_dir;
  std::filesystem::path runs_dir = "runs";
  std::uint64_t seed = 0;

  /// Snapshot for run records, with secrets removed.
  nlohmann::json redacted() const;
};

/// Parses a config document. Unknown keys throw ConfigError; referenced
/// files that do not exist throw ConfigError; an explicitly configured shim
/// that cannot be found throws EnvironmentError.
AppConfig parse_app_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
AppConfig load_app_config(const std::optional<std::filesystem::path>& file);

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();
/// APRIL_LLM_URL, APRIL_LLM_KEY, APRIL_LLM_MODEL, APRIL_RUNS_DIR,
/// APRIL_TASKS_DIR, APRIL_SHIM, APRIL_WORKERS, APRIL_SEED, APRIL_TIMEOUT_S.
void apply_env_overrides(AppConfig& config, const EnvLookup& env);

/// Backend instances for a config. Roles with identical specs share one
/// instance, so a single mock script can serve every role in order.
class BackendSet {
 public:
  explicit BackendSet(const AppConfig& config);
  /// Throws ConfigError when neither the role nor "default" is configured.
  ChatBackend& get(BackendRole role);
  /// Replaces the backend serving one role (the --backend flag).
  void override_role(BackendRole role, BackendSpec spec);

 private:
  ChatBackend& instance(const BackendSpec& spec);

  std::map<std::string, BackendSpec> specs_;
  std::map<std::string, std::unique_ptr<ChatBackend>> instances_;
};

/// A backend config file: a mock script (array, or object with "entries") or
/// an HTTP spec object with "url".
BackendSpec load_backend_file(const std::filesystem::path& file);

std::unique_ptr<Sandbox> make_sandbox(const SandboxSpec& spec);
std::unique_ptr<Policy> make_policy(const PolicySpec& spec, const std::vector<std::string>& contexts,
                                    double temperature);

}  // namespace april
