#include "rangecast/date.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <stdexcept>

namespace rangecast {

namespace {

// Howard Hinnant's civil-from-days / days-from-civil algorithms.
std::int64_t days_from_civil(int y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

Date civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return Date{static_cast<int>(y + (m <= 2)), static_cast<int>(m),
              static_cast<int>(d)};
}

int parse_int(std::string_view s) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw std::invalid_argument("bad integer field: '" + std::string(s) + "'");
  return v;
}

}  // namespace

std::int64_t Date::to_days() const {
  return days_from_civil(year, static_cast<unsigned>(month),
                         static_cast<unsigned>(day));
}

Date Date::from_days(std::int64_t z) { return civil_from_days(z); }

int Date::weekday() const {
  // 1970-01-01 was a Thursday (index 3 with Monday = 0).
  std::int64_t d = to_days();
  return static_cast<int>(((d % 7) + 7 + 3) % 7);
}

std::string Date::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", year, month, day);
  return buf;
}

bool is_valid_date(int year, int month, int day) {
  if (year < 1 || month < 1 || month > 12 || day < 1) return false;
  static constexpr std::array<int, 12> len = {31, 28, 31, 30, 31, 30,
                                              31, 31, 30, 31, 30, 31};
  int d = len[month - 1];
  const bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
  if (month == 2 && leap) d = 29;
  return day <= d;
}

Date parse_date_mdy(std::string_view s) {
  if (s.size() != 10 || s[2] != '/' || s[5] != '/')
    throw std::invalid_argument("expected MM/DD/YYYY, got '" + std::string(s) +
                                "'");
  Date dt{parse_int(s.substr(6, 4)), parse_int(s.substr(0, 2)),
          parse_int(s.substr(3, 2))};
  if (!is_valid_date(dt.year, dt.month, dt.day))
    throw std::invalid_argument("invalid calendar date '" + std::string(s) +
                                "'");
  return dt;
}

Date parse_date_compact(std::string_view s) {
  if (s.size() != 8)
    throw std::invalid_argument("expected YYYYMMDD, got '" + std::string(s) +
                                "'");
  Date dt{parse_int(s.substr(0, 4)), parse_int(s.substr(4, 2)),
          parse_int(s.substr(6, 2))};
  if (!is_valid_date(dt.year, dt.month, dt.day))
    throw std::invalid_argument("invalid calendar date '" + std::string(s) +
                                "'");
  return dt;
}

Date parse_date_iso(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-')
    throw std::invalid_argument("expected YYYY-MM-DD, got '" + std::string(s) +
                                "'");
  Date dt{parse_int(s.substr(0, 4)), parse_int(s.substr(5, 2)),
          parse_int(s.substr(8, 2))};
  if (!is_valid_date(dt.year, dt.month, dt.day))
    throw std::invalid_argument("invalid calendar date '" + std::string(s) +
                                "'");
  return dt;
}

}  // namespace rangecast
