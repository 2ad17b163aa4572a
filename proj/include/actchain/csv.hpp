#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace actchain {

// Comma-separated fields; double quotes group, backslash escapes.
// Throws boost::escaped_list_error on a malformed line.
std::vector<std::string> split_csv_line(const std::string& line);

// Field quoted only when it holds a comma, quote or backslash.
std::string csv_field(std::string_view value);

}  // namespace actchain
