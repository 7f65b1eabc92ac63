// SPDX-License-Identifier: Apache-2.0
//
// Benchmark runs and the metrics reported over them: executability, test
// pass rate and baseline-versus-treatment comparison.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "april/llm_backend.hpp"
#include "april/policy.hpp"
#include "april/prompt_engine.hpp"
#include "april/run_store.hpp"
#include "april/sandbox.hpp"
#include "april/task_model.hpp"

namespace april {

/// Produces the raw reply for one task; the harness extracts the tagged
/// implementation from it.
class Synthesizer {
 public:
  virtual ~Synthesizer() = default;
  virtual std::string id() const = 0;
  virtual std::string synthesize(const PromptTemplate& prompt, const SynthesisTask& task, std::uint64_t seed) = 0;
};

class BackendSynthesizer final : public Synthesizer {
 public:
  BackendSynthesizer(ChatBackend& backend, GenerationParams params = {}) : backend_(backend), params_(params) {}
  std::string id() const override { return backend_.id(); }
  std::string synthesize(const PromptTemplate& prompt, const SynthesisTask& task, std::uint64_t seed) override;

 private:
  ChatBackend& backend_;
  GenerationParams params_;
};

/// Samples the policy with the task id as context and wraps the decoded text
/// in the output tag.
class PolicySynthesizer final : public Synthesizer {
 public:
  PolicySynthesizer(const Policy& policy, double top_p = 1.0) : policy_(policy), top_p_(top_p) {}
  std::string id() const override { return policy_.id(); }
  std::string synthesize(const PromptTemplate& prompt, const SynthesisTask& task, std::uint64_t seed) override;

 private:
  const Policy& policy_;
  double top_p_;
};

struct TaskOutcome {
  std::string task_id;
  std::string benchmark;  // the task's library name
  bool executable = false;
  bool all_tests_passed = false;
  std::optional<Classification> classification;  // unset when no candidate reached the sandbox
  int attempts = 1;
  bool passed_any_attempt = false;
  std::size_t tests_passed = 0;
  std::size_t tests_total = 0;
  double duration_ms = 0.0;
  std::string error;
};

/// Builds and runs without error: SomeTestsFail or AllPass.
bool is_executable(Classification c);

nlohmann::json outcome_to_json(const TaskOutcome& outcome, bool with_timing = false);
TaskOutcome outcome_from_json(const nlohmann::json& j);

struct BenchOptions {
  int attempts = 1;  // > 1 adds a best-of-N figure next to the single-shot one
  std::size_t workers = 1;
  std::uint64_t seed = 0;
};

/// Per-task failures become non-executable outcomes. Outcomes keep task
/// order. Throws EmptyBenchmark.
std::vector<TaskOutcome> run_benchmark(const std::vector<TaskBundle>& tasks, const PromptTemplate& prompt,
                                       Synthesizer& synthesizer, Sandbox& sandbox, const BenchOptions& options = {},
                                       const RunLogger& log = {});

struct CountCell {
  std::int64_t count = 0;
  std::int64_t total = 0;

  std::string percent() const;  // "93.8"
  std::string text() const;     // "76(93.8%)"
};

struct ReportRow {
  std::string benchmark;
  std::int64_t tasks = 0;
  CountCell executable;
  CountCell passed;
  std::optional<CountCell> passed_best_of_n;
};

struct BenchReport {
  std::vector<ReportRow> rows;  // benchmarks in order of first appearance
  ReportRow total;
  nlohmann::json fingerprint = nlohmann::json::object();
  std::vector<TaskOutcome> outcomes;
  int attempts = 1;
};

/// A pure function of the outcomes. Throws EmptyBenchmark.
BenchReport compute_report(const std::vector<TaskOutcome>& outcomes,
                           const nlohmann::json& fingerprint = nlohmann::json::object());

/// Report JSON without timings, so identical runs serialize identically.
nlohmann::json report_to_json(const BenchReport& report);
BenchReport report_from_json(const nlohmann::json& j);
std::string render_table(const BenchReport& report);

struct ComparisonRow {
  std::string benchmark;
  std::int64_t tasks = 0;
  CountCell baseline;
  CountCell treatment;
  std::string delta_pp;  // from exact counts, signed, one decimal
  std::string ratio;     // treatment / baseline pass rate, two decimals; "n/a" for a zero baseline
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  ComparisonRow total;
};

/// Throws MismatchedTaskSets unless both sides cover the same task ids.
Comparison compare_outcomes(const std::vector<TaskOutcome>& baseline, const std::vector<TaskOutcome>& treatment);
nlohmann::json comparison_to_json(const Comparison& comparison);
std::string render_comparison(const Comparison& comparison);

/// Outcomes from `outcome` events, in event order.
std::vector<TaskOutcome> outcomes_from_events(const std::vector<Event>& events);

/// Synthetic outcomes matching published counts: the first `executable`
/// tasks build, the first `passed` of them pass.
std::vector<TaskOutcome> outcomes_from_counts(const std::string& benchmark, std::int64_t tasks,
                                              std::int64_t executable, std::int64_t passed);

/// "+16.7" style signed one-decimal percentage-point difference.
std::string signed_pp_delta(std::int64_t treatment, std::int64_t baseline, std::int64_t total);

}  // namespace april
