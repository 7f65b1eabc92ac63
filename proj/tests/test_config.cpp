// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>

#include "april/config.hpp"
#include "april/errors.hpp"
#include "test_support.hpp"

using namespace april;
using april::testing::TempDir;
using nlohmann::json;

namespace {

EnvLookup env_of(std::map<std::string, std::string> vars) {
  return [vars](const std::string& k) -> std::optional<std::string> {
    auto it = vars.find(k);
    if (it == vars.end()) return std::nullopt;
    return it->second;
  };
}

void write(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST(Config, DefaultsAndSections) {
  AppConfig c = parse_app_config(json::object());
  EXPECT_EQ(c.sandbox.kind, "shim");
  EXPECT_FALSE(c.sandbox.command_explicit);
  EXPECT_EQ(c.grpo.K, 8u);

  c = parse_app_config({{"grpo", {{"K", 4}}}, {"apo", {{"beam_width", 2}}}, {"sandbox", {{"kind", "stub"}}}});
  EXPECT_EQ(c.grpo.K, 4u);
  EXPECT_EQ(c.apo.beam_width, 2u);
  EXPECT_EQ(c.sandbox.kind, "stub");
}

TEST(Config, UnknownKeysAreRejected) {
  EXPECT_THROW(parse_app_config({{"colour", "blue"}}), ConfigError);
  EXPECT_THROW(parse_app_config({{"sandbox", {{"kindd", "stub"}}}}), ConfigError);
  EXPECT_THROW(parse_app_config({{"sandbox", {{"kind", "docker"}}}}), ConfigError);
}

TEST(Config, RelativePathsResolveAgainstTheConfigFile) {
  TempDir dir;
  write(dir / "mock.json", "[]");
  std::filesystem::create_directory(dir / "t");
  AppConfig c = parse_app_config({{"backends", {{"default", {{"mock", "mock.json"}}}}}, {"paths", {{"tasks", "t"}}}},
                                 dir.path());
  EXPECT_EQ(c.backends.at("default").mock_script.value(), dir / "mock.json");
  EXPECT_EQ(c.tasks_dir, dir / "t");
  EXPECT_THROW(parse_app_config({{"backends", {{"default", {{"mock", "absent.json"}}}}}}, dir.path()), ConfigError);
  EXPECT_THROW(parse_app_config({{"backends", {{"default", json::object()}}}}), ConfigError);
}

TEST(Config, ExplicitMissingShimIsAnEnvironmentError) {
  EXPECT_THROW(parse_app_config({{"sandbox", {{"command", {"/nonexistent/shim"}}}}}), EnvironmentError);
  // The default command is only resolved when a sandbox is built.
  EXPECT_NO_THROW(parse_app_config(json::object()));
}

TEST(Config, EnvironmentOverridesTheFile) {
  AppConfig c = parse_app_config({{"sandbox", {{"kind", "stub"}, {"workers", 2}}}});
  apply_env_overrides(c, env_of({{"APRIL_WORKERS", "7"},
                                 {"APRIL_SEED", "42"},
                                 {"APRIL_RUNS_DIR", "/tmp/runs"},
                                 {"APRIL_LLM_URL", "http://localhost:9/v1"},
                                 {"APRIL_LLM_KEY", "k"},
                                 {"APRIL_TIMEOUT_S", "3"}}));
  EXPECT_EQ(c.sandbox.workers, 7u);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.runs_dir, "/tmp/runs");
  EXPECT_EQ(c.sandbox.timeout, std::chrono::seconds(3));
  ASSERT_TRUE(c.backends.at("default").http.has_value());
  EXPECT_EQ(c.backends.at("default").http->url, "http://localhost:9/v1");
  EXPECT_EQ(c.backends.at("default").http->api_key, "k");
  EXPECT_EQ(c.redacted().at("backends").at("default").at("api_key"), "<redacted>");

  EXPECT_THROW(apply_env_overrides(c, env_of({{"APRIL_WORKERS", "many"}})), ConfigError);
  EXPECT_THROW(apply_env_overrides(c, env_of({{"APRIL_SHIM", "/nonexistent/shim"}})), EnvironmentError);
  apply_env_overrides(c, env_of({{"APRIL_SHIM", april::testing::stub_shim_path()}}));
  EXPECT_EQ(c.sandbox.kind, "shim");
  EXPECT_TRUE(c.sandbox.command_explicit);
}

TEST(Config, LoadFromFile) {
  TempDir dir;
  write(dir / "c.json", R"({"grpo": {"epochs": 3}})");
  EXPECT_EQ(load_app_config(dir / "c.json").grpo.epochs, 3);
  write(dir / "bad.json", "{not json");
  EXPECT_THROW(load_app_config(dir / "bad.json"), ConfigError);
  EXPECT_THROW(load_app_config(dir / "none.json"), ConfigError);
  EXPECT_NO_THROW(load_app_config(std::nullopt));
}

TEST(BackendSet, RolesFallBackToDefaultAndShareInstances) {
  TempDir dir;
  write(dir / "mock.json", R"([{"match": {"purpose": "critique"}, "reply": "c"},
                               {"match": {"purpose": "synthesis"}, "reply": "s"}])");
  write(dir / "other.json", R"([{"match": {}, "reply": "o", "repeat": true}])");
  AppConfig c = parse_app_config({{"backends", {{"default", {{"mock", "mock.json"}}}}}}, dir.path());
  BackendSet set(c);
  ChatBackend& synth = set.get(BackendRole::kSynthesis);
  ChatBackend& critique = set.get(BackendRole::kCritique);
  EXPECT_EQ(&synth, &critique);  // one script serves every role
  EXPECT_EQ(critique.complete(ChatRequest::user("x", Purpose::kCritique)).content, "c");
  EXPECT_EQ(synth.complete(ChatRequest::user("x", Purpose::kSynthesis)).content, "s");

  set.override_role(BackendRole::kEdit, load_backend_file(dir / "other.json"));
  EXPECT_NE(&set.get(BackendRole::kEdit), &synth);
  EXPECT_EQ(set.get(BackendRole::kEdit).complete(ChatRequest::user("x", Purpose::kApoEdit)).content, "o");

  BackendSet empty(parse_app_config(json::object()));
  EXPECT_THROW(empty.get(BackendRole::kSynthesis), ConfigError);
}

TEST(BackendSet, BackendFilesAreMocksOrHttpSpecs) {
  TempDir dir;
  write(dir / "m.json", R"({"entries": []})");
  write(dir / "h.json", R"({"url": "http://127.0.0.1:9/v1/chat/completions", "model": "m"})");
  EXPECT_TRUE(load_backend_file(dir / "m.json").mock_script.has_value());
  BackendSpec h = load_backend_file(dir / "h.json");
  ASSERT_TRUE(h.http.has_value());
  EXPECT_EQ(h.http->model, "m");
  EXPECT_THROW(load_backend_file(dir / "missing.json"), ConfigError);
}

TEST(Config, FactoriesBuildTheConfiguredKinds) {
  SandboxSpec stub;
  stub.kind = "stub";
  EXPECT_NE(dynamic_cast<InProcessSandbox*>(make_sandbox(stub).get()), nullptr);
  SandboxSpec shim;
  shim.command = {april::testing::stub_shim_path()};
  EXPECT_NE(dynamic_cast<ShimSandbox*>(make_sandbox(shim).get()), nullptr);

  PolicySpec toy;
  auto p = make_policy(toy, {"x", "y"}, 0.7);
  EXPECT_EQ(p->parameters().size(), 2u * 3u * 4u);
  PolicySpec ext;
  ext.kind = "external";
  EXPECT_THROW(make_policy(ext, {"x"}, 0.7), ConfigError);
}
