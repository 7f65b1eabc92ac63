// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "april/bench_harness.hpp"
#include "april/cli.hpp"
#include "april/run_store.hpp"
#include "april/subprocess.hpp"
#include "april/task_model.hpp"
#include "test_support.hpp"

using namespace april;
using april::testing::fixture;
using april::testing::TempDir;
using nlohmann::json;

namespace {

struct CliResult {
  int code = -1;
  std::string out, err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "april");
  std::ostringstream out, err;
  CliResult r;
  r.code = dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<std::string> bench_args(const TempDir& runs, const std::filesystem::path& out) {
  return {"--config", fixture("bench/config.json").string(), "--runs-dir", runs.path().string(), "bench", "--out",
          out.string()};
}

std::size_t run_count(const TempDir& runs) {
  if (!std::filesystem::exists(runs.path())) return 0;
  return RunStore(runs.path(), false).list_runs().size();
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli({}).code, kExitUsage);
  EXPECT_EQ(run_cli({"fly"}).code, kExitUsage);
  CliResult missing = run_cli({"bench"});
  EXPECT_EQ(missing.code, kExitUsage);
  EXPECT_NE(missing.err.find("--out"), std::string::npos);
  EXPECT_EQ(run_cli({"train", "--out", "x", "--policy", "giant"}).code, kExitUsage);
}

TEST(Cli, HelpExitsZero) {
  CliResult r = run_cli({"--help"});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("gen-oracle"), std::string::npos);
}

TEST(Cli, DomainErrorsExitOne) {
  TempDir runs;
  CliResult r = run_cli({"--runs-dir", runs.path().string(), "report", (runs / "absent.json").string()});
  EXPECT_EQ(r.code, kExitDomainError);
  EXPECT_FALSE(r.err.empty());
  r = run_cli({"--config", (runs / "none.json").string(), "report"});
  EXPECT_EQ(r.code, kExitDomainError);
  EXPECT_NE(r.err.find("ConfigError"), std::string::npos);
}

TEST(Cli, BinaryExitCodes) {
  TempDir runs;
  ProcessOutcome ok = run_process({april::testing::cli_path(), "--help"}, {}, {}, "", std::chrono::seconds(20));
  EXPECT_EQ(ok.exit_code, 0);
  ProcessOutcome usage = run_process({april::testing::cli_path(), "nope"}, {}, {}, "", std::chrono::seconds(20));
  EXPECT_EQ(usage.exit_code, 2);
  ProcessOutcome domain = run_process({april::testing::cli_path(), "--runs-dir", runs.path().string(), "replay",
                                       "no-such-run"},
                                      {}, {}, "", std::chrono::seconds(20));
  EXPECT_EQ(domain.exit_code, 1);
  EXPECT_NE(domain.err.find("UnknownRun"), std::string::npos);
}

TEST(Cli, DryRunWritesNothing) {
  TempDir runs, out;
  std::vector<std::string> args = bench_args(runs, out / "report.json");
  args.insert(args.begin(), "--dry-run");
  CliResult r = run_cli(args);
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_FALSE(std::filesystem::exists(out / "report.json"));
  EXPECT_EQ(run_count(runs), 0u);
}

TEST(Cli, BenchOpensExactlyOneRunAndReplaysToTheSameReport) {
  TempDir runs, out;
  CliResult r = run_cli(bench_args(runs, out / "report.json"));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  ASSERT_EQ(run_count(runs), 1u);
  std::string run_id = RunStore(runs.path(), false).list_runs().front();
  EXPECT_NE(r.err.find("run: " + run_id), std::string::npos);

  json written = json::parse(read_text_file(out / "report.json"));
  EXPECT_EQ(written.at("total").at("passed").at("text"), "3(50.0%)");
  CliResult replayed = run_cli({"--runs-dir", runs.path().string(), "replay", run_id, "--report"});
  ASSERT_EQ(replayed.code, kExitOk) << replayed.err;
  json rebuilt = json::parse(replayed.out);
  EXPECT_EQ(rebuilt.at("rows"), written.at("rows"));
  EXPECT_EQ(rebuilt.at("outcomes"), written.at("outcomes"));
  // replay itself is a second invocation with its own run record
  EXPECT_EQ(run_count(runs), 2u);
}

TEST(Cli, FailedInvocationStillRecordsItsRun) {
  TempDir runs, out;
  std::vector<std::string> args = bench_args(runs, out / "r.json");
  args.insert(args.end(), {"--tasks", (out / "empty").string()});
  std::filesystem::create_directory(out / "empty");
  CliResult r = run_cli(args);
  EXPECT_EQ(r.code, kExitDomainError);
  ASSERT_EQ(run_count(runs), 1u);
  RunStore store(runs.path(), false);
  EXPECT_FALSE(store.replay(store.list_runs().front(), std::string(event_kind::kWarning)).empty());
}

TEST(Cli, ReportRendersAndCompares) {
  TempDir dir;
  auto save = [&](const std::string& name, std::int64_t passed) {
    json j = report_to_json(compute_report(outcomes_from_counts("numpy", 4, 4, passed)));
    std::ofstream(dir / name) << j.dump();
    return (dir / name).string();
  };
  std::string base = save("base.json", 1), treat = save("treat.json", 3);
  CliResult table = run_cli({"--runs-dir", (dir / "runs").string(), "report", treat});
  ASSERT_EQ(table.code, kExitOk) << table.err;
  EXPECT_NE(table.out.find("3(75.0%)"), std::string::npos);

  CliResult cmp = run_cli({"--runs-dir", (dir / "runs").string(), "report", "--compare", base, treat, "--json"});
  ASSERT_EQ(cmp.code, kExitOk) << cmp.err;
  json c = json::parse(cmp.out);
  EXPECT_EQ(c.at("total").at("delta_pp"), "+50.0");
  EXPECT_EQ(c.at("total").at("ratio"), "3.00");
}

TEST(Cli, GenOracleWritesTheAcceptedSuite) {
  TempDir runs, out;
  CliResult r = run_cli({"--config", fixture("oracle/config.json").string(), "--runs-dir", runs.path().string(),
                         "gen-oracle", "--task", fixture("oracle/task.json").string(), "--ref-impl",
                         fixture("oracle/reference.py").string(), "--out", (out / "suite.json").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  TestSuite suite = parse_suite_file(read_text_file(out / "suite.json"));
  ASSERT_TRUE(suite.generation_meta.has_value());
  EXPECT_EQ(suite.generation_meta->iterations_used, 2);
  EXPECT_TRUE(suite.generation_meta->converged);
}

TEST(Cli, TrainWritesReportAndCheckpoint) {
  TempDir runs, out;
  // A short run: small config via a file keeps the test quick.
  std::ofstream(out / "cfg.json") << R"({"grpo": {"epochs": 3}, "sandbox": {"kind": "stub"}})";
  CliResult r = run_cli({"--config", (out / "cfg.json").string(), "--runs-dir", runs.path().string(), "--seed", "3",
                         "train", "--out", (out / "train").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  json report = json::parse(read_text_file(out / "train" / "report.json"));
  json ck = json::parse(read_text_file(out / "train" / "checkpoint.json"));
  EXPECT_EQ(report.at("steps"), 3);
  EXPECT_EQ(ck.at("seed"), 3);
  EXPECT_EQ(ck.at("theta"), report.at("final_theta"));
}

TEST(Cli, ApoRecordsTheTrainingSplit) {
  TempDir runs, out;
  json mock = json::array({{{"match", {{"purpose", "synthesis"}}},
                            {"reply", wrap_in_tags("def flip_rows(x):\n    return x[::-1]")},
                            {"repeat", true}}});
  std::ofstream(out / "mock.json") << mock.dump();
  std::ofstream(out / "cfg.json") << R"({"backends": {"default": {"mock": "mock.json"}}, "sandbox": {"kind": "stub"}})";
  std::ofstream(out / "train.txt") << "np_flip\n";
  CliResult r = run_cli({"--config", (out / "cfg.json").string(), "--runs-dir", runs.path().string(), "apo",
                         "--tasks", fixture("bench/tasks").string(), "--train-ids", (out / "train.txt").string(),
                         "--out", (out / "best.prompt").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_NE(r.out.find("1 training task(s), 5 held out"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(out / "best.prompt.trace.jsonl"));
  RunStore store(runs.path(), false);
  auto outcome = store.replay(store.list_runs().front(), std::string(event_kind::kOutcome));
  ASSERT_EQ(outcome.size(), 1u);
  EXPECT_EQ(outcome[0].payload.at("train_task_ids"), json::array({"np_flip"}));
  EXPECT_EQ(outcome[0].payload.at("held_out_task_ids").size(), 5u);
}
