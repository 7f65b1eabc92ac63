// SPDX-License-Identifier: Apache-2.0
//
// Validation-oracle generation: an agent LLM proposes a test suite, the suite
// is executed against the reference implementation, and an evaluator LLM
// grades its quality. Both feedback channels drive regeneration.
#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "april/errors.hpp"
#include "april/llm_backend.hpp"
#include "april/run_store.hpp"
#include "april/sandbox.hpp"
#include "april/task_model.hpp"

namespace april {

struct OracleGenInput {
  std::string task_id;
  std::string docstrings;
  std::string reference_impl;
  std::string module_path;
  std::string library_name;
};

void validate(const OracleGenInput& input);

struct OracleGenState {
  int iteration = 0;
  std::optional<std::string> feedback_t;  // test failures against the reference
  std::optional<std::string> feedback_c;  // evaluator critique
  std::optional<TestSuite> current_suite;
};

struct QualityVerdict {
  bool is_good = false;
  std::string critique;
  int comprehensiveness = 0;
  int coverage_breadth = 0;
};

struct OracleGenConfig {
  int max_iterations = 6;
  int quality_threshold = 4;  // both rubric scores must reach it
  GenerationParams params;
  std::string generator = "agent";
};

struct OracleBackends {
  ChatBackend& agent;
  ChatBackend& evaluator;
};

inline constexpr std::string_view kTestsTag = "output_tests";

std::string build_agent_prompt(const OracleGenInput& input, const OracleGenState& state);
/// Tests inside <output_tests>, one per <test name="..."> element.
/// Throws MissingTag or ParseError.
TestSuite parse_generated_tests(const std::string& task_id, std::string_view reply);
TestSuite gen_tests(const OracleGenInput& input, const OracleGenState& state, ChatBackend& agent,
                    const GenerationParams& params = {});

/// Accepts labelled lines (`comprehensiveness: 4/5`), a JSON object with the
/// two scores, or a bare pair of `n/5` scores. Throws EvaluatorParseError.
QualityVerdict parse_quality_reply(std::string_view reply, int threshold);
/// One retry on an unparseable reply, then EvaluatorParseError.
QualityVerdict evaluate_quality(const OracleGenInput& input, const TestSuite& suite, ChatBackend& evaluator,
                                const OracleGenConfig& config = {});

struct OracleIteration {
  int iteration = 0;
  std::size_t test_count = 0;
  Classification classification = Classification::kBuildError;
  bool tests_pass = false;
  std::optional<QualityVerdict> quality;
  std::string agent_prompt;
};

struct OracleGenResult {
  TestSuite suite;
  int iterations_used = 0;
  bool converged = false;
  OracleGenState state;
  std::vector<OracleIteration> history;
};

class NonConverged : public Error {
 public:
  NonConverged(OracleGenResult best, const std::string& what)
      : Error(ErrorCode::kNonConverged, "NonConverged: " + what), best_(std::move(best)) {}

  /// Best suite seen, tagged converged = false, with the final loop state.
  const OracleGenResult& best() const { return best_; }

 private:
  OracleGenResult best_;
};

/// Bounded loop: returns the first suite that passes on the reference and is
/// judged good; throws NonConverged after max_iterations.
OracleGenResult generate_validation_tests(const OracleGenInput& input, OracleBackends backends, Sandbox& sandbox,
                                          const OracleGenConfig& config = {}, const RunLogger& log = {});

struct OracleMetrics {
  std::int64_t total_tests = 0;
  double avg_tests = 0.0;
  std::int64_t total_iterations = 0;
  double avg_iterations = 0.0;
  std::string avg_tests_1dp;       // half-up, one decimal
  std::string avg_iterations_1dp;
};

OracleMetrics oracle_metrics(const std::vector<std::pair<TestSuite, int>>& runs);
/// Same arithmetic from counts alone.
OracleMetrics oracle_metrics_from_counts(std::int64_t runs, std::int64_t total_tests, std::int64_t total_iterations);

}  // namespace april
