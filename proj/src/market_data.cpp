#include "rangecast/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "rangecast/io_util.hpp"

namespace rangecast::market {

namespace {

using json = nlohmann::json;

double parse_price(std::string_view s) {
  // from_chars is locale-independent (dot decimal separator only).
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw std::invalid_argument("bad price field: '" + std::string(s) + "'");
  return v;
}

int parse_minute_hhmm(std::string_view s) {
  if (s.size() != 5 || s[2] != ':')
    throw std::invalid_argument("expected HH:MM, got '" + std::string(s) + "'");
  int h = 0, m = 0;
  std::from_chars(s.data(), s.data() + 2, h);
  std::from_chars(s.data() + 3, s.data() + 5, m);
  if (h < 0 || h > 23 || m < 0 || m > 59)
    throw std::invalid_argument("time out of range: '" + std::string(s) + "'");
  return h * 60 + m;
}

int parse_minute_hhmmss(std::string_view s) {
  if (s.size() != 6)
    throw std::invalid_argument("expected HHMMSS, got '" + std::string(s) + "'");
  int h = 0, m = 0, sec = 0;
  std::from_chars(s.data(), s.data() + 2, h);
  std::from_chars(s.data() + 2, s.data() + 4, m);
  std::from_chars(s.data() + 4, s.data() + 6, sec);
  if (h < 0 || h > 23 || m < 0 || m > 59 || sec < 0 || sec > 59)
    throw std::invalid_argument("time out of range: '" + std::string(s) + "'");
  return h * 60 + m;
}

// Returns the reason a bar violates the MinuteBar price invariants, or
// nullptr when it is well formed.
const char* bar_violation(const MinuteBar& b) {
  if (!(b.low > 0)) return "non-positive low price";
  if (b.high < b.low) return "high below low";
  if (b.open < b.low || b.open > b.high) return "open outside [low, high]";
  if (b.close < b.low || b.close > b.high) return "close outside [low, high]";
  return nullptr;
}

MinuteBar parse_canonical_line(std::string_view line) {
  const auto f = split_fields(line, ',');
  if (f.size() != 6) throw std::invalid_argument("expected 6 fields");
  MinuteBar b;
  b.date = parse_date_mdy(f[0]);
  b.minute = parse_minute_hhmm(f[1]);
  b.open = parse_price(f[2]);
  b.high = parse_price(f[3]);
  b.low = parse_price(f[4]);
  b.close = parse_price(f[5]);
  return b;
}

MinuteBar parse_histdata_line(std::string_view line) {
  const auto f = split_fields(line, ';');
  if (f.size() < 5) throw std::invalid_argument("expected >=5 fields");
  const auto stamp = f[0];
  const std::size_t sp = stamp.find(' ');
  if (sp == std::string_view::npos)
    throw std::invalid_argument("expected 'YYYYMMDD HHMMSS' stamp");
  MinuteBar b;
  b.date = parse_date_compact(stamp.substr(0, sp));
  b.minute = parse_minute_hhmmss(stamp.substr(sp + 1));
  b.open = parse_price(f[1]);
  b.high = parse_price(f[2]);
  b.low = parse_price(f[3]);
  b.close = parse_price(f[4]);
  return b;
}

}  // namespace

ParseResult parse_bars(std::istream& in, BarFormat format) {
  ParseResult res;
  std::set<std::pair<std::int64_t, int>> seen;
  std::string line;
  std::size_t line_no = 0;
  bool any_content = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    any_content = true;
    MinuteBar bar;
    try {
      bar = (format == BarFormat::canonical_csv) ? parse_canonical_line(line)
                                                 : parse_histdata_line(line);
    } catch (const std::invalid_argument& e) {
      res.rejected.push_back({line_no, line, e.what()});
      continue;
    }
    if (const char* why = bar_violation(bar)) {
      res.rejected.push_back({line_no, line, why});
      continue;
    }
    if (!seen.insert({bar.date.to_days(), bar.minute}).second)
      throw DuplicateTimestampError("duplicate timestamp " +
                                    bar.date.to_string() + " minute " +
                                    std::to_string(bar.minute));
    res.bars.push_back(bar);
  }
  if (!any_content) throw EmptyDataError("no input lines");
  return res;
}

ParseResult parse_bars(const std::string& text, BarFormat format) {
  std::istringstream in(text);
  return parse_bars(in, format);
}

double log_range(const MinuteBar& bar) {
  if (!(bar.low > 0))
    throw InvalidPriceError("low price must be positive, got " +
                            fmt_double(bar.low));
  if (bar.high < bar.low)
    throw InvalidPriceError("high below low");
  return std::log(bar.high) - std::log(bar.low);
}

RangePanel build_panel(std::span<const MinuteBar> bars, std::string pair,
                       double min_coverage, PanelDiagnostics* diag) {
  if (!(min_coverage > 0.0 && min_coverage <= 1.0))
    throw std::invalid_argument("min_coverage must be in (0, 1]");

  // Group by calendar date; std::map keeps days chronological regardless of
  // the input bar ordering.
  std::map<Date, std::vector<const MinuteBar*>> by_day;
  for (const MinuteBar& b : bars) by_day[b.date].push_back(&b);

  RangePanel panel;
  panel.pair = std::move(pair);
  panel.T = kMinutesPerDay;

  std::vector<const std::vector<const MinuteBar*>*> kept;
  for (const auto& [date, day_bars] : by_day) {
    const double coverage =
        static_cast<double>(day_bars.size()) / kMinutesPerDay;
    if (coverage < min_coverage) {
      if (diag)
        diag->dropped_days.push_back(
            {date, static_cast<int>(day_bars.size()), coverage});
      continue;
    }
    panel.days.push_back(date);
    kept.push_back(&day_bars);
  }
  if (panel.days.empty()) throw EmptyPanelError("all days dropped");

  panel.values.assign(panel.days.size() * static_cast<std::size_t>(panel.T),
                      0.0);
  panel.mask.assign(panel.values.size(), false);
  for (std::size_t d = 0; d < kept.size(); ++d) {
    for (const MinuteBar* b : *kept[d]) {
      const std::size_t i = panel.idx(b->minute, static_cast<int>(d));
      panel.values[i] = log_range(*b);
      panel.mask[i] = true;
    }
  }
  return panel;
}

std::vector<RangePanel> align_panels(const std::vector<RangePanel>& panels) {
  if (panels.size() < 2)
    throw std::invalid_argument("align_panels needs at least 2 panels");
  std::set<Date> common(panels[0].days.begin(), panels[0].days.end());
  for (std::size_t i = 1; i < panels.size(); ++i) {
    std::set<Date> next;
    for (const Date& d : panels[i].days)
      if (common.count(d)) next.insert(d);
    common.swap(next);
  }
  if (common.empty()) throw NoCommonDaysError("no common days across panels");

  std::vector<RangePanel> out;
  out.reserve(panels.size());
  for (const RangePanel& p : panels) {
    RangePanel r;
    r.pair = p.pair;
    r.T = p.T;
    for (const Date& d : p.days)
      if (common.count(d)) r.days.push_back(d);
    r.values.assign(r.days.size() * static_cast<std::size_t>(r.T), 0.0);
    r.mask.assign(r.values.size(), false);
    int rd = 0;
    for (int d = 0; d < p.n_days(); ++d) {
      if (!common.count(p.days[d])) continue;
      for (int t = 0; t < p.T; ++t) {
        r.values[r.idx(t, rd)] = p.at(t, d);
        r.mask[r.idx(t, rd)] = p.observed(t, d);
      }
      ++rd;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string panel_to_csv(const RangePanel& panel) {
  std::string out = "minute";
  for (const Date& d : panel.days) {
    out += ',';
    out += d.to_string();
  }
  out += '\n';
  for (int t = 0; t < panel.T; ++t) {
    out += std::to_string(t);
    for (int d = 0; d < panel.n_days(); ++d) {
      out += ',';
      if (panel.observed(t, d)) out += fmt_double(panel.at(t, d));
    }
    out += '\n';
  }
  return out;
}

std::string panel_to_json(const RangePanel& panel) {
  json j;
  j["pair"] = panel.pair;
  j["T"] = panel.T;
  json days = json::array();
  for (const Date& d : panel.days) days.push_back(d.to_string());
  j["days"] = std::move(days);
  json values = json::array();
  json mask = json::array();
  for (int t = 0; t < panel.T; ++t) {
    json vrow = json::array();
    json mrow = json::array();
    for (int d = 0; d < panel.n_days(); ++d) {
      if (panel.observed(t, d)) {
        vrow.push_back(panel.at(t, d));
        mrow.push_back(true);
      } else {
        vrow.push_back(nullptr);
        mrow.push_back(false);
      }
    }
    values.push_back(std::move(vrow));
    mask.push_back(std::move(mrow));
  }
  j["values"] = std::move(values);
  j["mask"] = std::move(mask);
  return j.dump();
}

RangePanel panel_from_json(const std::string& text) {
  const json j = json::parse(text);
  RangePanel p;
  p.pair = j.at("pair").get<std::string>();
  p.T = j.at("T").get<int>();
  for (const auto& d : j.at("days"))
    p.days.push_back(parse_date_iso(d.get<std::string>()));
  p.values.assign(p.days.size() * static_cast<std::size_t>(p.T), 0.0);
  p.mask.assign(p.values.size(), false);
  const json& values = j.at("values");
  for (int t = 0; t < p.T; ++t) {
    const json& row = values.at(t);
    for (int d = 0; d < p.n_days(); ++d) {
      const json& cell = row.at(d);
      if (!cell.is_null()) {
        p.values[p.idx(t, d)] = cell.get<double>();
        p.mask[p.idx(t, d)] = true;
      }
    }
  }
  return p;
}

}  // namespace rangecast::market
