#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace driftplan::csv {

// Shortest decimal (non-exponent) text that round-trips to the same double.
std::string format_number(double value);

// Strict parse of a full field; throws std::invalid_argument on trailing junk.
double parse_number(std::string_view text);
long long parse_integer(std::string_view text);

std::vector<std::string_view> split(std::string_view line, char sep = ',');
std::string_view trim(std::string_view text);

}  // namespace driftplan::csv
