#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mag {

// Shared helpers for the line-oriented text formats (dataset snapshots,
// environment files, checkpoints, metrics). Doubles are printed with
// round-trip precision so rereading reproduces values bit-exactly.

std::string format_double(double v);
double parse_double(std::string_view s);
long parse_long(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

std::string join_ints(const std::vector<int>& ids, char sep = ' ');
std::vector<int> parse_ints(std::string_view s, char sep = ' ');

}  // namespace mag
