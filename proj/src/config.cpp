// SPDX-License-Identifier: Apache-2.0
#include "april/config.hpp"

#include <cstdlib>
#include <set>
#include <sstream>

#include "april/errors.hpp"
#include "april/stub_runner.hpp"

namespace april {

using nlohmann::json;

std::string_view to_string(BackendRole role) {
  switch (role) {
    case BackendRole::kSynthesis: return "synthesis";
    case BackendRole::kCritique: return "critique";
    case BackendRole::kEdit: return "edit";
    case BackendRole::kOracleAgent: return "oracle_agent";
    case BackendRole::kQualityEvaluator: return "quality_evaluator";
  }
  return "synthesis";
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::filesystem::path existing(const std::filesystem::path& base, const std::string& p, const std::string& what) {
  std::filesystem::path path = resolve(base, p);
  if (!std::filesystem::exists(path)) throw ConfigError(what + " '" + path.string() + "' does not exist");
  return path;
}

std::vector<std::string> command_of(const json& j) {
  if (j.is_string()) {
    std::istringstream in(j.get<std::string>());
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
  }
  return j.get<std::vector<std::string>>();
}

BackendSpec parse_backend(const json& j, const std::filesystem::path& base, const std::string& where) {
  reject_unknown(j, {"mock", "url", "model", "api_key", "max_retries", "initial_delay_ms", "backoff_factor",
                     "timeout_s", "max_in_flight"},
                 where);
  BackendSpec spec;
  if (j.contains("mock") == j.contains("url")) throw ConfigError(where + " needs exactly one of 'mock' or 'url'");
  if (j.contains("mock")) {
    spec.mock_script = existing(base, j.at("mock").get<std::string>(), "mock script");
    return spec;
  }
  HttpBackendConfig h;
  h.url = j.at("url").get<std::string>();
  h.model = j.value("model", std::string{});
  h.api_key = j.value("api_key", std::string{});
  h.retry.max_retries = j.value("max_retries", h.retry.max_retries);
  h.retry.initial_delay = std::chrono::milliseconds(j.value("initial_delay_ms", 1000));
  h.retry.backoff_factor = j.value("backoff_factor", h.retry.backoff_factor);
  h.timeout = std::chrono::seconds(j.value("timeout_s", 120));
  h.max_in_flight = j.value("max_in_flight", h.max_in_flight);
  spec.http = h;
  return spec;
}

}  // namespace

AppConfig parse_app_config(const json& j, const std::filesystem::path& base) {
  reject_unknown(j, {"backends", "generation", "sandbox", "apo", "grpo", "oracle", "policy", "paths", "seed"},
                 "config");
  AppConfig c;
  try {
    if (j.contains("backends")) {
      static const std::set<std::string> kRoles = {"default", "synthesis", "critique", "edit", "oracle_agent",
                                                   "quality_evaluator"};
      reject_unknown(j.at("backends"), kRoles, "backends");
      for (const auto& [role, spec] : j.at("backends").items()) {
        c.backends[role] = parse_backend(spec, base, "backends." + role);
      }
    }
    if (j.contains("generation")) {
      const json& g = j.at("generation");
      reject_unknown(g, {"temperature", "top_p", "max_input_tokens", "max_output_tokens", "seed"}, "generation");
      c.generation.temperature = g.value("temperature", c.generation.temperature);
      c.generation.top_p = g.value("top_p", c.generation.top_p);
      c.generation.max_input_tokens = g.value("max_input_tokens", c.generation.max_input_tokens);
      c.generation.max_output_tokens = g.value("max_output_tokens", c.generation.max_output_tokens);
      if (g.contains("seed")) c.generation.seed = g.at("seed").get<std::uint64_t>();
      validate(c.generation);
    }
    if (j.contains("sandbox")) {
      const json& s = j.at("sandbox");
      reject_unknown(s, {"kind", "command", "workers", "timeout_s", "library_snapshot", "workspace_root"}, "sandbox");
      c.sandbox.kind = s.value("kind", c.sandbox.kind);
      if (c.sandbox.kind != "shim" && c.sandbox.kind != "stub") throw ConfigError("sandbox.kind must be shim or stub");
      if (s.contains("command")) {
        c.sandbox.command = command_of(s.at("command"));
        c.sandbox.command_explicit = true;
        if (c.sandbox.command.empty()) throw ConfigError("sandbox.command is empty");
        std::string exe = c.sandbox.command.front();
        if (exe.find('/') != std::string::npos) c.sandbox.command.front() = resolve(base, exe).string();
      }
      c.sandbox.workers = s.value("workers", c.sandbox.workers);
      c.sandbox.timeout = std::chrono::milliseconds(static_cast<long long>(s.value("timeout_s", 60.0) * 1000));
      if (s.contains("library_snapshot")) {
        c.sandbox.library_snapshot = existing(base, s.at("library_snapshot").get<std::string>(), "library snapshot");
      }
      if (s.contains("workspace_root")) {
        c.sandbox.workspace_root = resolve(base, s.at("workspace_root").get<std::string>());
      }
    }
    if (j.contains("apo")) {
      const json& a = j.at("apo");
      reject_unknown(a, {"beam_width", "max_depth", "proposals_per_candidate"}, "apo");
      c.apo.beam_width = a.value("beam_width", c.apo.beam_width);
      c.apo.max_depth = a.value("max_depth", c.apo.max_depth);
      c.apo.proposals_per_candidate = a.value("proposals_per_candidate", c.apo.proposals_per_candidate);
      validate(c.apo);
    }
    if (j.contains("grpo")) c.grpo = grpo_config_from_json(j.at("grpo"));
    if (j.contains("oracle")) {
      const json& o = j.at("oracle");
      reject_unknown(o, {"max_iterations", "quality_threshold"}, "oracle");
      c.oracle.max_iterations = o.value("max_iterations", c.oracle.max_iterations);
      c.oracle.quality_threshold = o.value("quality_threshold", c.oracle.quality_threshold);
    }
    if (j.contains("policy")) {
      const json& p = j.at("policy");
      reject_unknown(p, {"kind", "command", "vocabulary", "length"}, "policy");
      c.policy.kind = p.value("kind", c.policy.kind);
      if (c.policy.kind != "toy" && c.policy.kind != "external") throw ConfigError("policy.kind must be toy or external");
      if (p.contains("command")) c.policy.command = command_of(p.at("command"));
      c.policy.vocabulary = p.value("vocabulary", c.policy.vocabulary);
      c.policy.length = p.value("length", c.policy.length);
    }
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      reject_unknown(p, {"tasks", "runs"}, "paths");
      if (p.contains("tasks")) c.tasks_dir = existing(base, p.at("tasks").get<std::string>(), "tasks directory");
      if (p.contains("runs")) c.runs_dir = resolve(base, p.at("runs").get<std::string>());
    }
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  if (c.sandbox.kind == "shim" && c.sandbox.command_explicit && !resolve_executable(c.sandbox.command.front())) {
    throw EnvironmentError("shim '" + c.sandbox.command.front() + "' is not an executable file");
  }
  return c;
}

AppConfig load_app_config(const std::optional<std::filesystem::path>& file) {
  if (!file) return AppConfig{};
  if (!std::filesystem::exists(*file)) throw ConfigError("config file '" + file->string() + "' does not exist");
  json j;
  try {
    j = json::parse(read_text_file(*file));
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + file->string() + ": " + e.what());
  }
  return parse_app_config(j, file->parent_path());
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v) return std::nullopt;
    return std::string(v);
  };
}

void apply_env_overrides(AppConfig& c, const EnvLookup& env) {
  auto number = [](const std::string& name, const std::string& v) {
    try {
      std::size_t used = 0;
      unsigned long long n = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return n;
    } catch (const std::exception&) {
      throw ConfigError(name + " must be a non-negative integer, got '" + v + "'");
    }
  };
  if (auto url = env("APRIL_LLM_URL")) {
    bool any = false;
    for (auto& [role, spec] : c.backends) {
      if (spec.http) {
        spec.http->url = *url;
        any = true;
      }
    }
    if (!any && !c.backends.count("default")) {
      BackendSpec spec;
      spec.http = HttpBackendConfig{};
      spec.http->url = *url;
      c.backends["default"] = spec;
    }
  }
  for (auto& [role, spec] : c.backends) {
    if (!spec.http) continue;
    if (auto key = env("APRIL_LLM_KEY")) spec.http->api_key = *key;
    if (auto model = env("APRIL_LLM_MODEL")) spec.http->model = *model;
  }
  if (auto v = env("APRIL_RUNS_DIR")) c.runs_dir = *v;
  if (auto v = env("APRIL_TASKS_DIR")) c.tasks_dir = *v;
  if (auto v = env("APRIL_SHIM")) {
    c.sandbox.command = command_of(json(*v));
    c.sandbox.command_explicit = true;
    c.sandbox.kind = "shim";
    if (c.sandbox.command.empty() || !resolve_executable(c.sandbox.command.front())) {
      throw EnvironmentError("shim '" + *v + "' is not an executable file");
    }
  }
  if (auto v = env("APRIL_WORKERS")) c.sandbox.workers = number("APRIL_WORKERS", *v);
  if (auto v = env("APRIL_SEED")) c.seed = number("APRIL_SEED", *v);
  if (auto v = env("APRIL_TIMEOUT_S")) c.sandbox.timeout = std::chrono::seconds(number("APRIL_TIMEOUT_S", *v));
}

json AppConfig::redacted() const {
  json backends_json = json::object();
  for (const auto& [role, spec] : backends) {
    if (spec.mock_script) {
      backends_json[role] = {{"mock", spec.mock_script->string()}};
    } else if (spec.http) {
      backends_json[role] = {{"url", spec.http->url},
                             {"model", spec.http->model},
                             {"api_key", spec.http->api_key.empty() ? "" : "<redacted>"}};
    }
  }
  return {{"backends", backends_json},
          {"generation", {{"temperature", generation.temperature},
                          {"top_p", generation.top_p},
                          {"max_input_tokens", generation.max_input_tokens},
                          {"max_output_tokens", generation.max_output_tokens}}},
          {"sandbox", {{"kind", sandbox.kind},
                       {"command", sandbox.command},
                       {"workers", sandbox.workers},
                       {"timeout_ms", sandbox.timeout.count()}}},
          {"apo", {{"beam_width", apo.beam_width},
                   {"max_depth", apo.max_depth},
                   {"proposals_per_candidate", apo.proposals_per_candidate}}},
          {"grpo", grpo_config_to_json(grpo)},
          {"oracle", {{"max_iterations", oracle.max_iterations}, {"quality_threshold", oracle.quality_threshold}}},
          {"policy", {{"kind", policy.kind}, {"command", policy.command}}},
          {"seed", seed}};
}

// Backends -------------------------------------------------------------------

BackendSpec load_backend_file(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) throw ConfigError("backend file '" + file.string() + "' does not exist");
  json j;
  try {
    j = json::parse(read_text_file(file));
  } catch (const json::parse_error& e) {
    throw ConfigError("backend file " + file.string() + ": " + e.what());
  }
  if (j.is_array() || (j.is_object() && j.contains("entries"))) {
    BackendSpec spec;
    spec.mock_script = file;
    return spec;
  }
  return parse_backend(j, file.parent_path(), file.filename().string());
}

BackendSet::BackendSet(const AppConfig& config) : specs_(config.backends) {}

void BackendSet::override_role(BackendRole role, BackendSpec spec) { specs_[std::string(to_string(role))] = spec; }

ChatBackend& BackendSet::get(BackendRole role) {
  std::string name(to_string(role));
  auto it = specs_.find(name);
  if (it == specs_.end() || !it->second.configured()) it = specs_.find("default");
  if (it == specs_.end() || !it->second.configured()) {
    throw ConfigError("no backend configured for role '" + name + "' and no default backend");
  }
  return instance(it->second);
}

ChatBackend& BackendSet::instance(const BackendSpec& spec) {
  std::string key = spec.mock_script ? "mock:" + spec.mock_script->lexically_normal().string()
                                     : "http:" + spec.http->url + "|" + spec.http->model;
  auto it = instances_.find(key);
  if (it != instances_.end()) return *it->second;
  std::unique_ptr<ChatBackend> b;
  if (spec.mock_script) {
    b = MockBackend::load(*spec.mock_script);
  } else {
    b = std::make_unique<HttpBackend>(*spec.http);
  }
  ChatBackend& ref = *b;
  instances_[key] = std::move(b);
  return ref;
}

std::unique_ptr<Sandbox> make_sandbox(const SandboxSpec& spec) {
  if (spec.kind == "stub") {
    return std::make_unique<InProcessSandbox>([](const json& request) { return stub::evaluate(request); });
  }
  ShimConfig sc;
  sc.command = spec.command;
  sc.workers = spec.workers;
  sc.timeout = spec.timeout;
  sc.workspace_root = spec.workspace_root;
  sc.library_snapshot = spec.library_snapshot;
  sc.keep_workspaces = spec.keep_workspaces;
  return std::make_unique<ShimSandbox>(sc);
}

std::unique_ptr<Policy> make_policy(const PolicySpec& spec, const std::vector<std::string>& contexts,
                                    double temperature) {
  if (spec.kind == "external") {
    if (spec.command.empty()) throw ConfigError("policy.command is required for an external policy");
    return std::make_unique<ExternalPolicy>(spec.command);
  }
  return std::make_unique<ToySoftmaxPolicy>(spec.vocabulary, spec.length, contexts, temperature);
}

}  // namespace april
