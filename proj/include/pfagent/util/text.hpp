#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pfagent::util {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string replace_all(std::string s, std::string_view from, std::string_view to);
bool contains_icase(std::string_view haystack, std::string_view needle);

/// Escape every ECMAScript regex metacharacter in `s`.
std::string regex_escape(std::string_view s);

/// Shortest decimal text that reads back to exactly `v`.
std::string format_number(double v);

/// Parse a complete decimal number (no trailing garbage).
std::optional<double> parse_number(std::string_view s);

/// Last `max_lines` lines of `s`.
std::string tail_lines(std::string_view s, std::size_t max_lines);

}  // namespace pfagent::util
