// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace april {

struct ProcessOutcome {
  std::string out;
  std::string err;  // only the last 8 KiB or so are kept
  int exit_code = -1;
  bool timed_out = false;
};

/// Runs argv in its own process group with `input` on stdin. The whole group
/// is killed at the timeout. Throws EnvironmentError when the program cannot
/// be launched.
ProcessOutcome run_process(const std::vector<std::string>& argv, const std::filesystem::path& cwd,
                           const std::map<std::string, std::string>& extra_env, const std::string& input,
                           std::chrono::milliseconds timeout);

}  // namespace april
