#include "floodcast/timeutil.hpp"

#include <array>
#include <charconv>
#include <cstdio>

#include "floodcast/error.hpp"

namespace floodcast::timeutil {

namespace {

// Howard Hinnant's civil-date algorithms; valid far beyond the ranges used here.
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (static_cast<unsigned>(m) + (m > 2 ? -3 : 9)) + 2) / 5 + static_cast<unsigned>(d) - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

int parse_int(std::string_view text, std::size_t pos, std::size_t len, std::string_view whole) {
  int value = 0;
  if (pos + len > text.size()) {
    raise(Errc::schema_mismatch, "malformed timestamp '" + std::string(whole) + "'");
  }
  const auto* first = text.data() + pos;
  const auto result = std::from_chars(first, first + len, value);
  if (result.ec != std::errc{} || result.ptr != first + len) {
    raise(Errc::schema_mismatch, "malformed timestamp '" + std::string(whole) + "'");
  }
  return value;
}

}  // namespace

Timestamp parse_iso(std::string_view text) {
  // YYYY-MM-DD[T ]HH:MM[:SS]
  if (text.size() != 16 && text.size() != 19) {
    raise(Errc::schema_mismatch, "malformed timestamp '" + std::string(text) + "'");
  }
  const int year = parse_int(text, 0, 4, text);
  const int month = parse_int(text, 5, 2, text);
  const int day = parse_int(text, 8, 2, text);
  const int hour = parse_int(text, 11, 2, text);
  const int minute = parse_int(text, 14, 2, text);
  const int second = text.size() == 19 ? parse_int(text, 17, 2, text) : 0;
  if (text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') || text[13] != ':' ||
      (text.size() == 19 && text[16] != ':')) {
    raise(Errc::schema_mismatch, "malformed timestamp '" + std::string(text) + "'");
  }
  if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 59) {
    raise(Errc::schema_mismatch, "out-of-range timestamp '" + std::string(text) + "'");
  }
  return days_from_civil(year, month, day) * 86400 + hour * 3600 + minute * 60 + second;
}

std::string format_iso(Timestamp ts) {
  std::int64_t days = ts / 86400;
  std::int64_t rem = ts % 86400;
  if (rem < 0) {
    rem += 86400;
    days -= 1;
  }
  int y = 0, m = 0, d = 0;
  civil_from_days(days, y, m, d);
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02lld:%02lld:%02lld", y, m, d,
                static_cast<long long>(rem / 3600), static_cast<long long>((rem % 3600) / 60),
                static_cast<long long>(rem % 60));
  return std::string(buf);
}

int hours_inclusive(Timestamp start, Timestamp end) {
  if (end < start || (end - start) % k_hour_s != 0) {
    raise(Errc::schema_mismatch, "event window [" + format_iso(start) + ", " + format_iso(end) +
                                     "] is not an inclusive hourly range");
  }
  return static_cast<int>((end - start) / k_hour_s) + 1;
}

}  // namespace floodcast::timeutil
