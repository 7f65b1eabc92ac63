// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale string-synthesis domain for the RLVR loop: each task asks for a
// fixed three-symbol string over {a, b, c, d}, checked by the stub test
// language.
#pragma once

#include <string>
#include <vector>

#include "april/policy.hpp"
#include "april/task_model.hpp"

namespace april {

struct ToyTarget {
  std::string task_id;
  std::string target;
};

const std::vector<ToyTarget>& toy_targets();
const std::vector<std::string>& toy_vocabulary();
inline constexpr std::size_t kToyLength = 3;

/// Five tasks whose validation suites accept only the target string.
std::vector<TaskBundle> toy_tasks();
/// Zero-initialised policy with one context per toy task.
ToySoftmaxPolicy toy_policy(double temperature = 0.7);

}  // namespace april
