#pragma once

#include <array>
#include <charconv>
#include <string>

namespace gridpart {

// Shortest decimal representation that round-trips; locale independent.
inline std::string format_double(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  (void)ec;
  return std::string(buf.data(), ptr);
}

}  // namespace gridpart
