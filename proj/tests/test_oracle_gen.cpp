// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "april/errors.hpp"
#include "april/oracle_gen.hpp"
#include "april/run_store.hpp"
#include "test_support.hpp"

using namespace april;
using april::testing::TempDir;

namespace {

OracleGenInput clip_input() {
  OracleGenInput in;
  in.task_id = "np_clip";
  in.docstrings = "Clamp every element into [lo, hi].";
  in.reference_impl = "def clip_values(a, lo, hi):\n    return np.clip(a, lo, hi)";
  in.module_path = "numpy.core.fromnumeric";
  in.library_name = "numpy";
  return in;
}

std::string tests_reply(const std::vector<std::pair<std::string, std::string>>& tests) {
  std::string out = "<output_tests>\n";
  for (const auto& [name, body] : tests) out += "<test name=\"" + name + "\">" + body + "</test>\n";
  return out + "</output_tests>";
}

const char* kGood = "comprehensiveness: 5/5\ncoverage_breadth: 4/5\ncritique: thorough";
const char* kWeak = "comprehensiveness: 2/5\ncoverage_breadth: 3/5\ncritique: only the happy path";

}  // namespace

TEST(OracleGen, ReferenceMustBeNonEmpty) {
  OracleGenInput in = clip_input();
  in.reference_impl = "  \n";
  EXPECT_THROW(validate(in), ValidationError);
}

TEST(OracleGen, AgentPromptAddsOnlyPresentFeedback) {
  OracleGenState state;
  std::string plain = build_agent_prompt(clip_input(), state);
  EXPECT_NE(plain.find("np.clip(a, lo, hi)"), std::string::npos);
  EXPECT_EQ(plain.find("previous suite"), std::string::npos);

  state.feedback_c = "add boundary values";
  std::string critiqued = build_agent_prompt(clip_input(), state);
  EXPECT_NE(critiqued.find("A reviewer judged the previous suite insufficient:\nadd boundary values"),
            std::string::npos);
  EXPECT_EQ(critiqued.find("failed against the reference"), std::string::npos);
}

TEST(OracleGen, ParsesGeneratedTests) {
  TestSuite s = parse_generated_tests(
      "t", tests_reply({{"test_a", "expect_contains a"}, {"bad name!", "expect_contains b"}, {"test_a", "x"}}));
  ASSERT_EQ(s.cases.size(), 3u);
  EXPECT_EQ(s.cases[0].id, "test_a");
  EXPECT_EQ(s.cases[1].id, "test_2");
  EXPECT_EQ(s.cases[2].id, "test_a_2");
  EXPECT_EQ(s.task_id, "t");
  EXPECT_THROW(parse_generated_tests("t", "<output_tests>prose only</output_tests>"), ParseError);
  EXPECT_THROW(parse_generated_tests("t", "no tags"), MissingTag);
}

TEST(OracleGen, QualityReplyFormats) {
  QualityVerdict labelled = parse_quality_reply(kGood, 4);
  EXPECT_TRUE(labelled.is_good);
  EXPECT_EQ(labelled.comprehensiveness, 5);
  EXPECT_EQ(labelled.coverage_breadth, 4);
  EXPECT_EQ(labelled.critique, "thorough");

  QualityVerdict json_reply =
      parse_quality_reply(R"({"comprehensiveness": 4, "coverage_breadth": 3, "critique": "no edge cases"})", 4);
  EXPECT_FALSE(json_reply.is_good);
  EXPECT_EQ(json_reply.critique, "no edge cases");

  QualityVerdict bare = parse_quality_reply("Scores: 4/5 and 4/5. Solid.", 4);
  EXPECT_TRUE(bare.is_good);

  EXPECT_THROW(parse_quality_reply("looks fine to me", 4), EvaluatorParseError);
  EXPECT_THROW(parse_quality_reply("comprehensiveness: 9/5\ncoverage_breadth: 2/5", 4), EvaluatorParseError);
}

TEST(OracleGen, ThresholdNeedsBothScores) {
  EXPECT_FALSE(parse_quality_reply("comprehensiveness: 5/5\ncoverage_breadth: 3/5", 4).is_good);
  EXPECT_TRUE(parse_quality_reply("comprehensiveness: 3/5\ncoverage_breadth: 3/5", 3).is_good);
}

TEST(OracleGen, EvaluatorGetsOneRetry) {
  TestSuite suite = april::testing::make_suite("np_clip", {{"t", "expect_contains np.clip("}});
  MockBackend recovers({{Purpose::kQualityEval, "", "unsure", false}, {Purpose::kQualityEval, "", kGood, false}});
  EXPECT_TRUE(evaluate_quality(clip_input(), suite, recovers).is_good);
  EXPECT_EQ(recovers.calls(), 2u);

  MockBackend never({{Purpose::kQualityEval, "", "unsure", true}});
  EXPECT_THROW(evaluate_quality(clip_input(), suite, never), EvaluatorParseError);
  EXPECT_EQ(never.calls(), 2u);
}

TEST(OracleGen, FirstIterationSuccessReturnsImmediately) {
  MockBackend agent({{Purpose::kOracleGen, "", tests_reply({{"test_clip", "expect_contains np.clip("}}), false}});
  MockBackend evaluator({{Purpose::kQualityEval, "", kGood, false}});
  auto sandbox = april::testing::stub_sandbox();
  OracleGenResult r = generate_validation_tests(clip_input(), {agent, evaluator}, *sandbox);
  EXPECT_EQ(r.iterations_used, 1);
  EXPECT_TRUE(r.converged);
  ASSERT_TRUE(r.suite.generation_meta.has_value());
  EXPECT_EQ(r.suite.generation_meta->iterations_used, 1);
  EXPECT_TRUE(r.suite.generation_meta->converged);
}

TEST(OracleGen, PassingButWeakSuiteIsRegeneratedWithCritiqueOnly) {
  MockBackend agent({{Purpose::kOracleGen, "", tests_reply({{"t1", "expect_contains np.clip("}}), false},
                     {Purpose::kOracleGen, "", tests_reply({{"t1", "expect_contains np.clip("},
                                                            {"t2", "expect_absent while"}}),
                      false}});
  MockBackend evaluator({{Purpose::kQualityEval, "", kWeak, false}, {Purpose::kQualityEval, "", kGood, false}});
  auto sandbox = april::testing::stub_sandbox();
  OracleGenResult r = generate_validation_tests(clip_input(), {agent, evaluator}, *sandbox);
  EXPECT_EQ(r.iterations_used, 2);
  const std::string& second = r.history.at(1).agent_prompt;
  EXPECT_NE(second.find("only the happy path"), std::string::npos);
  EXPECT_EQ(second.find("failed against the reference"), std::string::npos);
  EXPECT_EQ(r.suite.cases.size(), 2u);
}

TEST(OracleGen, UnparseableAgentReplyBecomesFeedback) {
  MockBackend agent({{Purpose::kOracleGen, "", "I will write tests later.", false},
                     {Purpose::kOracleGen, "", tests_reply({{"t1", "expect_contains np.clip("}}), false}});
  MockBackend evaluator({{Purpose::kQualityEval, "", kGood, true}});
  auto sandbox = april::testing::stub_sandbox();
  OracleGenResult r = generate_validation_tests(clip_input(), {agent, evaluator}, *sandbox);
  EXPECT_EQ(r.iterations_used, 2);
  EXPECT_NE(r.history.at(1).agent_prompt.find("could not be parsed"), std::string::npos);
}

TEST(OracleGen, NonConvergenceCarriesTheBestSuite) {
  // Iteration 1 passes but is weak; iteration 2 fails on the reference.
  MockBackend agent({{Purpose::kOracleGen, "", tests_reply({{"ok", "expect_contains np.clip("}}), false},
                     {Purpose::kOracleGen, "", tests_reply({{"bad", "expect_contains np.minimum("}}), false}});
  MockBackend evaluator({{Purpose::kQualityEval, "", kWeak, true}});
  auto sandbox = april::testing::stub_sandbox();
  OracleGenConfig cfg;
  cfg.max_iterations = 2;
  try {
    generate_validation_tests(clip_input(), {agent, evaluator}, *sandbox, cfg);
    FAIL() << "expected NonConverged";
  } catch (const NonConverged& e) {
    const OracleGenResult& best = e.best();
    EXPECT_FALSE(best.converged);
    EXPECT_EQ(best.iterations_used, 2);
    ASSERT_EQ(best.suite.cases.size(), 1u);
    EXPECT_EQ(best.suite.cases[0].id, "ok");
    EXPECT_FALSE(best.suite.generation_meta->converged);
    EXPECT_EQ(e.code(), ErrorCode::kNonConverged);
  }
  EXPECT_EQ(agent.calls(), 2u);
}

TEST(OracleGen, LoopNeverExceedsTheBound) {
  MockBackend agent({{Purpose::kOracleGen, "", tests_reply({{"bad", "expect_contains nothing-like-this"}}), true}});
  MockBackend evaluator({{Purpose::kQualityEval, "", kGood, true}});
  auto sandbox = april::testing::stub_sandbox();
  OracleGenConfig cfg;
  cfg.max_iterations = 4;
  EXPECT_THROW(generate_validation_tests(clip_input(), {agent, evaluator}, *sandbox, cfg), NonConverged);
  EXPECT_EQ(agent.calls(), 4u);
}

TEST(OracleGen, IterationsAreLogged) {
  TempDir dir;
  RunStore store(dir.path(), false);
  std::string id = store.open_run({});
  MockBackend agent({{Purpose::kOracleGen, "", tests_reply({{"t1", "expect_contains np.clip("}}), false}});
  MockBackend evaluator({{Purpose::kQualityEval, "", kGood, false}});
  auto sandbox = april::testing::stub_sandbox();
  generate_validation_tests(clip_input(), {agent, evaluator}, *sandbox, {}, RunLogger(&store, id));
  EXPECT_EQ(store.replay(id, std::string(event_kind::kOracleIteration)).size(), 1u);
  EXPECT_EQ(store.replay(id, std::string(event_kind::kSandboxResult)).size(), 1u);
}

TEST(OracleMetrics, PublishedAveragesRoundHalfUp) {
  OracleMetrics m = oracle_metrics_from_counts(81, 655, 175);
  EXPECT_EQ(m.avg_tests_1dp, "8.1");
  EXPECT_EQ(m.avg_iterations_1dp, "2.2");
  EXPECT_EQ(oracle_metrics_from_counts(36, 258, 86).avg_tests_1dp, "7.2");
  EXPECT_EQ(oracle_metrics_from_counts(33, 282, 70).avg_tests_1dp, "8.5");
  EXPECT_EQ(oracle_metrics_from_counts(12, 115, 19).avg_iterations_1dp, "1.6");
  EXPECT_EQ(oracle_metrics_from_counts(4, 10, 2).avg_tests_1dp, "2.5");
  EXPECT_EQ(oracle_metrics_from_counts(20, 1, 1).avg_tests_1dp, "0.1");  // 0.05 rounds up
  EXPECT_THROW(oracle_metrics_from_counts(0, 1, 1), ValidationError);
}

TEST(OracleMetrics, FromSuites) {
  auto s3 = april::testing::make_suite("a", {{"x", "1"}, {"y", "2"}, {"z", "3"}});
  auto s1 = april::testing::make_suite("b", {{"x", "1"}});
  OracleMetrics m = oracle_metrics({{s3, 1}, {s1, 2}});
  EXPECT_EQ(m.total_tests, 4);
  EXPECT_EQ(m.total_iterations, 3);
  EXPECT_DOUBLE_EQ(m.avg_tests, 2.0);
  EXPECT_EQ(m.avg_iterations_1dp, "1.5");
}
