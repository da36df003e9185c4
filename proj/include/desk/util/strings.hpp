#pragma once

#include <charconv>
#include <cstddef>
#include <string>
#include <string_view>
#include <system_error>

#include "desk/error.hpp"

namespace desk {

/// Shortest decimal text that parses back to exactly `v`.
template <typename T>
std::string format_exact(T v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw UsageError("format_exact: value does not fit");
  return std::string(buf, ptr);
}

/// Fixed-point text with `digits` decimals, for human-facing reports.
inline std::string format_fixed(double v, int digits = 4) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, digits);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && !text.empty();
}

/// Parses `text` as T or throws ConfigError naming `field`.
template <typename T>
T parse_field(std::string_view field, std::string_view text) {
  T v{};
  if (!parse_number(text, v)) {
    throw ConfigError("field '" + std::string(field) + "': cannot parse '" + std::string(text) + "' as a number");
  }
  return v;
}

inline bool parse_bool_field(std::string_view field, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("field '" + std::string(field) + "': expected true or false, got '" + std::string(text) + "'");
}

}  // namespace desk
