#pragma once

#include <charconv>
#include <cmath>
#include <string>

namespace pairnet {

/// Shortest decimal text that parses back to exactly `v`; "nan" for NaN.
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace pairnet
