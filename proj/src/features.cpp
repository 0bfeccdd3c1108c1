#include "rangecast/features.hpp"

#include <algorithm>
#include <map>

#include "rangecast/io_util.hpp"

namespace rangecast::features {

using market::RangePanel;

Normalizer fit_normalizer(const RangePanel& panel, DayRange days) {
  if (days.size() <= 0 || days.begin < 0 || days.end > panel.n_days())
    throw std::invalid_argument("day subset out of range");
  bool any = false;
  double lo = 0, hi = 0;
  for (int d = days.begin; d < days.end; ++d) {
    for (int t = 0; t < panel.T; ++t) {
      if (!panel.observed(t, d)) continue;
      const double v = panel.at(t, d);
      if (!any) {
        lo = hi = v;
        any = true;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (!any) throw std::invalid_argument("no observed cells in day subset");
  if (!(hi > lo))
    throw DegenerateScaleError("constant series: min == max == " +
                               fmt_double(lo));
  return Normalizer{lo, hi};
}

namespace {

// Last panel date of each (year, month), for the month-end flag.
std::map<std::pair<int, int>, Date> month_end_dates(const RangePanel& panel) {
  std::map<std::pair<int, int>, Date> last;
  for (const Date& d : panel.days) {
    auto key = std::make_pair(d.year, d.month);
    auto it = last.find(key);
    if (it == last.end() || it->second < d) last[key] = d;
  }
  return last;
}

}  // namespace

std::vector<double> time_features_at(const RangePanel& panel, int t, int day) {
  const Date& date = panel.days[day];
  const auto ends = month_end_dates(panel);
  const bool month_end = ends.at({date.year, date.month}) == date;
  return {static_cast<double>(t) / (panel.T - 1),
          static_cast<double>(date.weekday()) / 6.0,
          static_cast<double>(date.month - 1) / 11.0,
          month_end ? 1.0 : 0.0};
}

SampleSet make_time_samples(const RangePanel& panel, DayRange days,
                            const Normalizer& norm) {
  SampleSet set;
  set.kind = SampleKind::time_features;
  set.width = 1;
  set.pair_ids = {panel.pair};
  set.normalizers = {norm};
  const auto ends = month_end_dates(panel);
  for (int d = days.begin; d < days.end; ++d) {
    const Date& date = panel.days[d];
    const bool month_end = ends.at({date.year, date.month}) == date;
    for (int t = 0; t < panel.T; ++t) {
      if (!panel.observed(t, d)) continue;
      Sample s;
      s.day = d;
      s.minute = t;
      s.time_features = {static_cast<double>(t) / (panel.T - 1),
                         static_cast<double>(date.weekday()) / 6.0,
                         static_cast<double>(date.month - 1) / 11.0,
                         month_end ? 1.0 : 0.0};
      const double raw = panel.at(t, d);
      s.target = {norm.transform(raw)};
      s.target_raw = {raw};
      set.samples.push_back(std::move(s));
    }
  }
  return set;
}

namespace {

// Admissibility of the joint window with target at (target_t, d): the
// intraday window covers minutes [target_t - p_t, target_t - 1] of day d,
// the interday window covers days [d - p_d, d - 1] at minute target_t, and
// every touched cell plus the target itself must be observed.
bool window_admissible(const RangePanel& panel, int target_t, int d, int p_t,
                       int p_d) {
  if (target_t - p_t < 0 || d - p_d < 0) return false;
  if (!panel.observed(target_t, d)) return false;
  for (int t = target_t - p_t; t < target_t; ++t)
    if (!panel.observed(t, d)) return false;
  for (int dd = d - p_d; dd < d; ++dd)
    if (!panel.observed(target_t, dd)) return false;
  return true;
}

}  // namespace

SampleSet make_lag_samples(const RangePanel& panel, int p_t, int p_d,
                           DayRange days, const Normalizer& norm) {
  if (p_t < 1 || p_d < 1) throw std::invalid_argument("p_t, p_d must be >= 1");
  SampleSet set;
  set.kind = SampleKind::lag_window;
  set.p_t = p_t;
  set.p_d = p_d;
  set.width = 1;
  set.pair_ids = {panel.pair};
  set.normalizers = {norm};
  for (int d = days.begin; d < days.end; ++d) {
    for (int target_t = p_t; target_t < panel.T; ++target_t) {
      if (!window_admissible(panel, target_t, d, p_t, p_d)) continue;
      Sample s;
      s.day = d;
      s.minute = target_t;
      s.intraday.reserve(p_t);
      for (int t = target_t - p_t; t < target_t; ++t)
        s.intraday.push_back(norm.transform(panel.at(t, d)));
      s.interday.reserve(p_d);
      for (int dd = d - p_d; dd < d; ++dd)
        s.interday.push_back(norm.transform(panel.at(target_t, dd)));
      const double raw = panel.at(target_t, d);
      s.target = {norm.transform(raw)};
      s.target_raw = {raw};
      set.samples.push_back(std::move(s));
    }
  }
  if (set.samples.empty()) throw EmptySampleSetError("no admissible samples");
  return set;
}

SampleSet make_pair_samples(const std::vector<RangePanel>& panels, int p_t,
                            int p_d, DayRange days,
                            const std::vector<Normalizer>& norms) {
  const int p = static_cast<int>(panels.size());
  if (p < 2) throw std::invalid_argument("pair samples need p >= 2 panels");
  if (norms.size() != panels.size())
    throw std::invalid_argument("one normalizer per panel required");
  for (int i = 1; i < p; ++i) {
    if (panels[i].days != panels[0].days || panels[i].T != panels[0].T)
      throw std::invalid_argument("panels must be aligned first");
  }
  if (p_t < 1 || p_d < 1) throw std::invalid_argument("p_t, p_d must be >= 1");

  SampleSet set;
  set.kind = SampleKind::pair_lag_window;
  set.p_t = p_t;
  set.p_d = p_d;
  set.width = p;
  for (const auto& panel : panels) set.pair_ids.push_back(panel.pair);
  set.normalizers = norms;

  const RangePanel& ref = panels[0];
  for (int d = days.begin; d < days.end; ++d) {
    for (int target_t = p_t; target_t < ref.T; ++target_t) {
      bool ok = true;
      for (int i = 0; i < p && ok; ++i)
        ok = window_admissible(panels[i], target_t, d, p_t, p_d);
      if (!ok) continue;
      Sample s;
      s.day = d;
      s.minute = target_t;
      s.intraday.resize(static_cast<std::size_t>(p_t) * p);
      for (int step = 0; step < p_t; ++step) {
        const int t = target_t - p_t + step;
        for (int i = 0; i < p; ++i)
          s.intraday[static_cast<std::size_t>(step) * p + i] =
              norms[i].transform(panels[i].at(t, d));
      }
      s.interday.resize(static_cast<std::size_t>(p_d) * p);
      for (int step = 0; step < p_d; ++step) {
        const int dd = d - p_d + step;
        for (int i = 0; i < p; ++i)
          s.interday[static_cast<std::size_t>(step) * p + i] =
              norms[i].transform(panels[i].at(target_t, dd));
      }
      s.target.resize(p);
      s.target_raw.resize(p);
      for (int i = 0; i < p; ++i) {
        const double raw = panels[i].at(target_t, d);
        s.target_raw[i] = raw;
        s.target[i] = norms[i].transform(raw);
      }
      set.samples.push_back(std::move(s));
    }
  }
  if (set.samples.empty()) throw EmptySampleSetError("no admissible samples");
  return set;
}

std::string sample_set_to_csv(const SampleSet& set) {
  std::string out = "day,minute";
  const auto& first = set.samples.empty() ? Sample{} : set.samples.front();
  for (std::size_t i = 0; i < first.time_features.size(); ++i)
    out += ",tf" + std::to_string(i);
  for (std::size_t i = 0; i < first.intraday.size(); ++i)
    out += ",y" + std::to_string(i);
  for (std::size_t i = 0; i < first.interday.size(); ++i)
    out += ",z" + std::to_string(i);
  for (std::size_t i = 0; i < first.target.size(); ++i)
    out += ",target" + std::to_string(i);
  out += '\n';
  for (const Sample& s : set.samples) {
    out += std::to_string(s.day) + ',' + std::to_string(s.minute);
    for (double v : s.time_features) out += ',' + fmt_double(v);
    for (double v : s.intraday) out += ',' + fmt_double(v);
    for (double v : s.interday) out += ',' + fmt_double(v);
    for (double v : s.target) out += ',' + fmt_double(v);
    out += '\n';
  }
  return out;
}

}  // namespace rangecast::features
