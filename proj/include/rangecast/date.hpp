#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace rangecast {

// Proleptic-Gregorian calendar date. Day arithmetic uses the civil-days
// algorithm, so no timezone database or locale is involved anywhere.
struct Date {
  int year = 1970;
  int month = 1;  // 1..12
  int day = 1;    // 1..31

  // Days since 1970-01-01.
  std::int64_t to_days() const;
  static Date from_days(std::int64_t z);

  // 0 = Monday .. 6 = Sunday.
  int weekday() const;

  std::string to_string() const;  // "YYYY-MM-DD"

  auto operator<=>(const Date&) const = default;
  bool operator==(const Date&) const = default;
};

bool is_valid_date(int year, int month, int day);

// "MM/DD/YYYY" (canonical CSV), "YYYYMMDD" (histdata), "YYYY-MM-DD".
// Each throws std::invalid_argument on malformed or out-of-range input.
Date parse_date_mdy(std::string_view s);
Date parse_date_compact(std::string_view s);
Date parse_date_iso(std::string_view s);

}  // namespace rangecast
