// SPDX-License-Identifier: Apache-2.0
#include "april/toy_domain.hpp"

namespace april {

const std::vector<ToyTarget>& toy_targets() {
  static const std::vector<ToyTarget> kTargets = {
      {"toy_0", "bca"}, {"toy_1", "dab"}, {"toy_2", "acd"}, {"toy_3", "cdb"}, {"toy_4", "bbd"},
  };
  return kTargets;
}

const std::vector<std::string>& toy_vocabulary() {
  static const std::vector<std::string> kVocab = {"a", "b", "c", "d"};
  return kVocab;
}

std::vector<TaskBundle> toy_tasks() {
  std::vector<TaskBundle> out;
  for (const auto& t : toy_targets()) {
    TaskBundle b;
    b.task.id = t.task_id;
    b.task.signature.name = "emit_" + t.task_id;
    b.task.signature.return_annotation = "str";
    b.task.signature.source = "def emit_" + t.task_id + "() -> str:";
    b.task.module_path = "toy.strings";
    b.task.library_name = "toy";
    b.task.examples = {{"ex_prefix", "expect_contains " + t.target.substr(0, 1), "starts with the first symbol"}};
    b.task.validation_suite_ref = t.task_id + ".suite.json";
    b.validation.task_id = t.task_id;
    b.validation.cases = {
        {"test_exact", "expect_equals " + t.target, std::nullopt},
        {"test_prefix", "expect_contains " + t.target.substr(0, 2), std::nullopt},
    };
    out.push_back(std::move(b));
  }
  return out;
}

ToySoftmaxPolicy toy_policy(double temperature) {
  std::vector<std::string> contexts;
  for (const auto& t : toy_targets()) contexts.push_back(t.task_id);
  return ToySoftmaxPolicy(toy_vocabulary(), kToyLength, contexts, temperature);
}

}  // namespace april
