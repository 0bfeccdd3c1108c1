#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rangecast/date.hpp"

namespace rangecast::market {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct EmptyDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DuplicateTimestampError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidPriceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyPanelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoCommonDaysError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

constexpr int kMinutesPerDay = 1440;

// One OHLC observation. `minute` is the minute-of-day in [0, 1439] in the
// data's own timezone; no conversion is ever applied to stored bars.
struct MinuteBar {
  Date date;
  int minute = 0;
  double open = 0, high = 0, low = 0, close = 0;
};

enum class BarFormat { canonical_csv, histdata_ascii };

struct RejectedBar {
  std::size_t line_no = 0;  // 1-based
  std::string line;
  std::string reason;
};

struct ParseResult {
  std::vector<MinuteBar> bars;      // in file order
  std::vector<RejectedBar> rejected;
};

// Per-pair matrix of minutely log ranges on a fixed minute grid, plus an
// observation mask. Storage is day-major: cell (t, d) lives at d * T + t.
struct RangePanel {
  std::string pair;
  int T = kMinutesPerDay;
  std::vector<Date> days;       // strictly increasing
  std::vector<double> values;   // size days.size() * T; 0.0 where masked
  std::vector<bool> mask;       // same shape; true = observed

  int n_days() const { return static_cast<int>(days.size()); }
  std::size_t idx(int t, int d) const {
    return static_cast<std::size_t>(d) * static_cast<std::size_t>(T) + t;
  }
  double at(int t, int d) const { return values[idx(t, d)]; }
  bool observed(int t, int d) const { return mask[idx(t, d)]; }
};

struct DroppedDay {
  Date date;
  int bars_observed = 0;
  double coverage = 0;
};

struct PanelDiagnostics {
  std::vector<DroppedDay> dropped_days;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Parses minute bars from text. canonical_csv records are
// "MM/DD/YYYY,HH:MM,open,high,low,close"; histdata_ascii records are
// "YYYYMMDD HHMMSS;open;high;low;close;volume". Malformed or
// invariant-violating lines become RejectedBar diagnostics instead of bars.
// Throws EmptyDataError when no input lines are present and
// DuplicateTimestampError when two bars share a (date, minute) stamp.
ParseResult parse_bars(std::istream& in, BarFormat format);
ParseResult parse_bars(const std::string& text, BarFormat format);

// ln(high) - ln(low). Throws InvalidPriceError when low <= 0 or high < low.
double log_range(const MinuteBar& bar);

// Aligns bars onto the fixed 1440-minute grid, one column per calendar date.
// Days whose observed-bar fraction is below `min_coverage` are dropped and
// reported through `diag`. Throws EmptyPanelError when nothing survives.
RangePanel build_panel(std::span<const MinuteBar> bars, std::string pair,
                       double min_coverage = 0.8,
                       PanelDiagnostics* diag = nullptr);

// Restricts every panel to the intersection of their day sets (order
// preserved). Throws NoCommonDaysError when the intersection is empty.
std::vector<RangePanel> align_panels(const std::vector<RangePanel>& panels);

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

// CSV layout: header "minute,<date1>,<date2>,...", one row per minute,
// masked cells emitted as empty fields.
std::string panel_to_csv(const RangePanel& panel);

// JSON object {pair, days, T, values, mask}; values is T rows of n_days
// entries with null at masked cells.
std::string panel_to_json(const RangePanel& panel);
RangePanel panel_from_json(const std::string& text);

}  // namespace rangecast::market
