// SPDX-License-Identifier: Apache-2.0
//
// External-policy adapter for tests: answers one JSON request on stdin with
// the toy softmax policy over the built-in toy domain.
#include <iostream>
#include <iterator>
#include <string>

#include <json.hpp>

#include "april/errors.hpp"
#include "april/policy.hpp"
#include "april/toy_domain.hpp"

int main() {
  std::string input((std::istreambuf_iterator<char>(std::cin)), std::istreambuf_iterator<char>());
  nlohmann::json reply;
  try {
    reply = april::serve_toy_request(april::toy_policy(), nlohmann::json::parse(input));
  } catch (const std::exception& e) {
    reply = {{"error", e.what()}};
  }
  std::cout << reply.dump() << "\n";
  return 0;
}
