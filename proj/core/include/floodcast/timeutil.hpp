#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace floodcast::timeutil {

// Naive UTC timestamps as epoch seconds. Events live on an hourly grid,
// rain gauges on a 15-minute grid.
using Timestamp = std::int64_t;

inline constexpr std::int64_t k_hour_s = 3600;
inline constexpr std::int64_t k_quarter_s = 900;

// Accepts "YYYY-MM-DDTHH:MM:SS" and "YYYY-MM-DDTHH:MM" (also with a space
// separator). Throws Error(schema_mismatch) on malformed input.
Timestamp parse_iso(std::string_view text);

// "YYYY-MM-DDTHH:MM:SS"
std::string format_iso(Timestamp ts);

// Hour count of a [start, end] window inclusive of both endpoints.
int hours_inclusive(Timestamp start, Timestamp end);

}  // namespace floodcast::timeutil
