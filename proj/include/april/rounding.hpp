// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

namespace april {

/// round_half_up(scale * num / den, one decimal) as an integer count of
/// tenths, computed exactly in integers. den must be positive.
inline std::int64_t tenths_half_up(std::int64_t num, std::int64_t den, std::int64_t scale = 1) {
  // floor((20 * scale * num + den) / (2 * den)) for non-negative values.
  return (20 * scale * num + den) / (2 * den);
}

inline std::string format_tenths(std::int64_t tenths) {
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

/// "93.8" for (76, 81).
inline std::string percent_1dp(std::int64_t count, std::int64_t total) {
  return format_tenths(tenths_half_up(count, total, 100));
}

/// "8.1" for (655, 81).
inline std::string mean_1dp(std::int64_t sum, std::int64_t n) { return format_tenths(tenths_half_up(sum, n)); }

}  // namespace april
