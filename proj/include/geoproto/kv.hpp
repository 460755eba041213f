#pragma once

// Structured key-value text shared by config files, raw-feature sidecars and
// the model header:
//
//   # comment
//   [section]
//   key = value        -> "section.key"
//   other.key = value  -> "other.key" (dotted keys bypass the section)

#include "geoproto/error.hpp"

#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace geoproto::kv {

struct Entry {
  std::string key;
  std::string value;
  int line = 0;
};

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<Entry> parse(std::string_view text, std::string_view origin) {
  std::vector<Entry> entries;
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']')
        fail(ErrorKind::InvalidConfig,
             std::string(origin) + ":" + std::to_string(line_no) + ": unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      fail(ErrorKind::InvalidConfig,
           std::string(origin) + ":" + std::to_string(line_no) + ": expected 'key = value'");
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty())
      fail(ErrorKind::InvalidConfig,
           std::string(origin) + ":" + std::to_string(line_no) + ": empty key");
    if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
    entries.push_back({std::move(key), std::move(value), line_no});
    if (end == text.size()) break;
  }
  return entries;
}

template <typename T>
std::optional<T> parse_integer(std::string_view s) {
  T value{};
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || first == last) return std::nullopt;
  return value;
}

inline std::optional<double> parse_double(std::string_view s) {
  double value = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  // from_chars reports out-of-range for subnormals; the parsed value is still usable.
  if ((ec != std::errc{} && ec != std::errc::result_out_of_range) || ptr != last ||
      first == last)
    return std::nullopt;
  return value;
}

inline std::optional<bool> parse_bool(std::string_view s) {
  if (s == "true" || s == "on" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "off" || s == "0" || s == "no") return false;
  return std::nullopt;
}

/// Shortest decimal text that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  ensure(ec == std::errc{}, "to_chars failed");
  return std::string(buf, ptr);
}

inline std::string format_bool(bool v) { return v ? "true" : "false"; }

}  // namespace geoproto::kv
