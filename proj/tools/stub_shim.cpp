// SPDX-License-Identifier: Apache-2.0
//
// Stand-in execution shim: reads one wire request on stdin and writes one
// response on stdout using the stub test language. Candidates containing
// the markers below trigger misbehaviour for orchestrator tests.
//
//   __stub_hang__     never answers
//   __stub_garbage__  writes non-JSON and exits 3
//   __stub_stderr__   writes a long stderr stream before answering
#include <chrono>
#include <iostream>
#include <iterator>
#include <string>
#include <thread>

#include <json.hpp>

#include "april/errors.hpp"
#include "april/stub_runner.hpp"

int main() {
  std::string input((std::istreambuf_iterator<char>(std::cin)), std::istreambuf_iterator<char>());
  nlohmann::json request;
  try {
    request = nlohmann::json::parse(input);
  } catch (const nlohmann::json::parse_error& e) {
    std::cerr << "unreadable request: " << e.what() << "\n";
    return 2;
  }
  std::string candidate = request.value("candidate_source", std::string{});
  if (candidate.find("__stub_hang__") != std::string::npos) {
    std::this_thread::sleep_for(std::chrono::hours(1));
  }
  if (candidate.find("__stub_garbage__") != std::string::npos) {
    std::cout << "Traceback (most recent call last): <garbage>";
    return 3;
  }
  if (candidate.find("__stub_stderr__") != std::string::npos) {
    for (int i = 0; i < 4000; ++i) std::cerr << "warning line " << i << "\n";
  }
  try {
    std::cout << april::stub::evaluate(request).dump() << "\n";
  } catch (const april::Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  return 0;
}
