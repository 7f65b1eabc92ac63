// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "april/errors.hpp"
#include "april/task_model.hpp"
#include "test_support.hpp"

using namespace april;
using april::testing::fixture;
using april::testing::make_task;
using april::testing::TempDir;

TEST(TaskModel, TaskFileRoundTrips) {
  SynthesisTask t = parse_task_file(read_text_file(fixture("oracle/task.json")));
  EXPECT_EQ(t.id, "np_clip");
  EXPECT_EQ(t.signature.parameters.size(), 3u);
  EXPECT_EQ(t.signature.display(), "def clip_values(a, lo, hi)");
  EXPECT_EQ(t.examples.at(0).description.value(), "Clamp every element into [lo, hi].");
  EXPECT_EQ(parse_task_file(serialize_task(t)), t);
}

TEST(TaskModel, DisplayBuildsDefLineWithoutSource) {
  SynthesisTask t = make_task("t1", "scale");
  t.signature.kind = InvocationKind::kInstanceMethod;
  std::string line = t.signature.display();
  EXPECT_NE(line.find("def scale(self"), std::string::npos);
  EXPECT_NE(line.find("x: ndarray"), std::string::npos);
  EXPECT_NE(line.find("-> ndarray"), std::string::npos);
}

TEST(TaskModel, SuiteRoundTripKeepsGenerationMeta) {
  TestSuite s = april::testing::make_suite("t1", {{"a", "expect_contains x"}, {"b", "expect_absent y"}});
  s.generation_meta = GenerationMeta{3, "agent", false};
  EXPECT_EQ(parse_suite_file(serialize_suite(s)), s);
}

TEST(TaskModel, ValidationRejectsDuplicateCaseIds) {
  TestSuite dup = april::testing::make_suite("t", {{"a", "x"}, {"a", "y"}});
  EXPECT_THROW(validate(dup), ValidationError);
}

TEST(TaskModel, ValidationRejectsBadSignatures) {
  SynthesisTask t = make_task("t1", "scale");
  t.signature.name = "not an identifier";
  EXPECT_THROW(validate(t), ValidationError);
}

TEST(TaskModel, SuiteMustBeDisjointFromOrSupersetOfExamples) {
  SynthesisTask t = make_task("t1", "scale");
  t.examples = {{"e1", "expect_contains A", std::nullopt}, {"e2", "expect_contains B", std::nullopt}};
  auto disjoint = april::testing::make_suite("t1", {{"v1", "expect_contains C"}});
  auto superset = april::testing::make_suite(
      "t1", {{"v1", "expect_contains A"}, {"v2", "expect_contains B"}, {"v3", "expect_contains C"}});
  auto partial = april::testing::make_suite("t1", {{"v1", "expect_contains A"}, {"v3", "expect_contains C"}});
  EXPECT_NO_THROW(validate_suite_relation(t, disjoint));
  EXPECT_NO_THROW(validate_suite_relation(t, superset));
  EXPECT_THROW(validate_suite_relation(t, partial), ValidationError);
}

TEST(TaskModel, MalformedTaskFileIsSchemaError) {
  EXPECT_THROW(parse_task_file("{\"id\": \"x\"}"), SchemaError);
  EXPECT_THROW(parse_task_file("not json"), SchemaError);
}

TEST(TaskModel, LoadTaskDirResolvesSuitesAndSortsByFile) {
  auto tasks = load_task_dir(fixture("bench/tasks"));
  ASSERT_EQ(tasks.size(), 6u);
  EXPECT_EQ(tasks.front().task.id, "np_clip");
  EXPECT_EQ(tasks.back().task.id, "sp_gmean");
  EXPECT_EQ(tasks[2].validation.cases.size(), 3u);  // np_norm
}

TEST(TaskModel, MissingTaskDirIsEnvironmentError) {
  EXPECT_THROW(load_task_dir(fixture("does-not-exist")), EnvironmentError);
}

TEST(TaskModel, SplitIsExactPartition) {
  std::vector<SynthesisTask> tasks = {make_task("a", "fa"), make_task("b", "fb"), make_task("c", "fc")};
  TrainEvalSplit s = split_train_eval(tasks, {"c", "a"});
  ASSERT_EQ(s.train.size(), 2u);
  EXPECT_EQ(s.train[0].id, "a");
  EXPECT_EQ(s.train[1].id, "c");
  ASSERT_EQ(s.eval.size(), 1u);
  EXPECT_EQ(s.eval[0].id, "b");
  EXPECT_THROW(split_train_eval(tasks, {"zz"}), UnknownTaskId);
}

TEST(TaskModel, IdListIgnoresCommentsAndBlanks) {
  auto ids = parse_id_list("# training ids\nnp_clip\n\n  sk_scale  # trailing\n");
  EXPECT_EQ(ids, (std::set<std::string>{"np_clip", "sk_scale"}));
}

TEST(TaskModel, WriteThenReadText) {
  TempDir dir;
  write_text_file(dir / "nested/file.txt", "hello\n");
  EXPECT_EQ(read_text_file(dir / "nested/file.txt"), "hello\n");
  EXPECT_THROW(read_text_file(dir / "missing.txt"), Error);
}
