#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace carbonwatch {

using WallTime = std::chrono::system_clock::time_point;

/// Parses the ISO-8601 shapes the intensity providers emit:
/// `YYYY-MM-DDTHH:MM[:SS[.fff]][Z|±HH:MM]`. A missing offset means UTC.
std::optional<WallTime> parse_iso8601(std::string_view text);

/// `YYYY-MM-DDTHH:MM:SSZ`, UTC, second precision.
std::string format_iso8601(WallTime t);

/// `YYYY-MM-DDTHH:MMZ`, UTC, minute precision.
std::string format_iso8601_minutes(WallTime t);

/// `H:MM:SS`, rounded to the nearest second; hours are not wrapped at 24.
std::string format_duration(double seconds);

double seconds_between(WallTime from, WallTime to);
WallTime add_seconds(WallTime t, double seconds);

}  // namespace carbonwatch
