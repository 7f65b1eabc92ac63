// SPDX-License-Identifier: Apache-2.0
//
// A tiny deterministic test language for exercising the sandbox wire protocol
// without a Python toolchain. Each non-empty test line is one directive:
//
//   expect_contains <text>   candidate source contains <text>
//   expect_absent <text>     candidate source does not contain <text>
//   expect_equals <text>     trimmed candidate source equals <text>
//   raise <message>          the test errors with <message>
//   # ...                    comment
//
// A candidate with unbalanced (), [] or {} fails to build.
#pragma once

#include <string_view>

#include <json.hpp>

namespace april::stub {

bool brackets_balanced(std::string_view source);

/// Wire request in, wire response out. Throws ShimProtocolError on requests
/// that violate the shim contract (no tests, no module path).
nlohmann::json evaluate(const nlohmann::json& request);

}  // namespace april::stub
