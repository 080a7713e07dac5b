#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace owr {

/// Shortest decimal form that parses back to the identical binary64 value.
std::string format_double(double value);

/// Strict parse: the whole field must be consumed.
double parse_double(std::string_view text);
long parse_long(std::string_view text);

std::vector<std::string> split_csv_line(std::string_view line);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace owr
