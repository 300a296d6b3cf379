#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace egfr {

// Shortest decimal representation that round-trips the double.
std::string format_double(double v);

std::optional<double> parse_double(std::string_view s);

}  // namespace egfr
