#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

namespace lei::text {

std::vector<std::string_view> split(std::string_view line, char sep = ',');

/// Shortest representation that parses back to the identical double.
std::string format_double(double v);

/// Strict parse; returns false on trailing garbage or empty input.
bool parse_double(std::string_view s, double& out);

std::string_view trim(std::string_view s);

}  // namespace lei::text
