// SPDX-License-Identifier: Apache-2.0
#include "april/stub_runner.hpp"

#include <sstream>
#include <string>
#include <vector>

#include "april/errors.hpp"
#include "april/llm_backend.hpp"

namespace april::stub {

using nlohmann::json;

bool brackets_balanced(std::string_view source) {
  std::vector<char> stack;
  for (char c : source) {
    if (c == '(' || c == '[' || c == '{') {
      stack.push_back(c);
    } else if (c == ')' || c == ']' || c == '}') {
      char want = c == ')' ? '(' : c == ']' ? '[' : '{';
      if (stack.empty() || stack.back() != want) return false;
      stack.pop_back();
    }
  }
  return stack.empty();
}

namespace {

struct Outcome {
  std::string verdict = "pass";
  std::string message;
};

Outcome run_test(const std::string& candidate, const std::string& source) {
  std::istringstream lines(source);
  std::string line;
  while (std::getline(lines, line)) {
    std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto space = t.find(' ');
    std::string directive = t.substr(0, space);
    std::string arg = space == std::string::npos ? std::string{} : trim(t.substr(space + 1));
    if (directive == "expect_contains") {
      if (candidate.find(arg) == std::string::npos) {
        return {"fail", "AssertionError: expected candidate to contain '" + arg + "'"};
      }
    } else if (directive == "expect_absent") {
      if (candidate.find(arg) != std::string::npos) {
        return {"fail", "AssertionError: candidate must not contain '" + arg + "'"};
      }
    } else if (directive == "expect_equals") {
      if (trim(candidate) != arg) {
        return {"fail", "AssertionError: expected '" + arg + "', got '" + trim(candidate) + "'"};
      }
    } else if (directive == "raise") {
      return {"error", "RuntimeError: " + arg};
    } else {
      return {"error", "NameError: unknown directive '" + directive + "'"};
    }
  }
  return {};
}

}  // namespace

json evaluate(const json& request) {
  if (!request.is_object() || !request.contains("candidate_source") || !request.contains("tests")) {
    throw ShimProtocolError("request lacks candidate_source/tests");
  }
  const json& tests = request.at("tests");
  if (!tests.is_array() || tests.empty()) throw ShimProtocolError("request carries no tests");
  if (request.value("module_path", std::string{}).empty()) throw ShimProtocolError("request has no module_path");

  std::string candidate = request.at("candidate_source").get<std::string>();
  if (!brackets_balanced(candidate)) {
    return {{"build_ok", false},
            {"tests", json::array()},
            {"stdout_tail", ""},
            {"stderr_tail", "SyntaxError: unbalanced brackets in candidate"}};
  }
  json out_tests = json::array();
  for (const auto& t : tests) {
    Outcome o = run_test(candidate, t.at("source").get<std::string>());
    out_tests.push_back({{"id", t.at("id")}, {"verdict", o.verdict}, {"message", o.message}, {"duration_ms", 0.0}});
  }
  return {{"build_ok", true}, {"tests", out_tests}, {"stdout_tail", ""}, {"stderr_tail", ""}};
}

}  // namespace april::stub
