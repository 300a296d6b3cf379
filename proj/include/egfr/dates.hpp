#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace egfr {

// Calendar dates are carried as days since the Unix epoch.
using Date = std::chrono::sys_days;

std::optional<Date> parse_iso_date(std::string_view s);

// "YYYY-MM-DD"
std::string format_iso_date(Date d);

// a - b in whole days
inline long day_diff(Date a, Date b) { return (a - b).count(); }

inline Date make_date(int y, unsigned m, unsigned d) {
  return std::chrono::sys_days{std::chrono::year{y} / std::chrono::month{m} /
                               std::chrono::day{d}};
}

}  // namespace egfr
