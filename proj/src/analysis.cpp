#include "rangecast/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rangecast/io_util.hpp"

namespace rangecast::analysis {

using market::RangePanel;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Moments {
  double mean = 0;
  double var = 0;  // population form, N divisor
  std::size_t n = 0;
};

Moments observed_moments(const RangePanel& panel) {
  Moments m;
  double sum = 0;
  for (int d = 0; d < panel.n_days(); ++d)
    for (int t = 0; t < panel.T; ++t)
      if (panel.observed(t, d)) {
        sum += panel.at(t, d);
        ++m.n;
      }
  if (m.n == 0) throw DegenerateSeriesError("panel has no observed cells");
  m.mean = sum / static_cast<double>(m.n);
  double ss = 0;
  for (int d = 0; d < panel.n_days(); ++d)
    for (int t = 0; t < panel.T; ++t)
      if (panel.observed(t, d)) {
        const double dev = panel.at(t, d) - m.mean;
        ss += dev * dev;
      }
  m.var = ss / static_cast<double>(m.n);
  return m;
}

double clamp_corr(double v) { return std::clamp(v, -1.0, 1.0); }

MinuteProfile profile_over_days(const RangePanel& panel,
                                const std::vector<int>& day_indices) {
  MinuteProfile p;
  p.means.assign(panel.T, 0.0);
  p.counts.assign(panel.T, 0);
  for (int d : day_indices)
    for (int t = 0; t < panel.T; ++t)
      if (panel.observed(t, d)) {
        p.means[t] += panel.at(t, d);
        ++p.counts[t];
      }
  for (int t = 0; t < panel.T; ++t)
    p.means[t] = p.counts[t] > 0 ? p.means[t] / p.counts[t] : kNaN;
  return p;
}

}  // namespace

MinuteProfile minute_profile(const RangePanel& panel) {
  if (panel.n_days() == 0) throw std::invalid_argument("empty panel");
  std::vector<int> all(panel.n_days());
  for (int d = 0; d < panel.n_days(); ++d) all[d] = d;
  return profile_over_days(panel, all);
}

std::map<int, MinuteProfile> weekday_profiles(const RangePanel& panel) {
  if (panel.n_days() == 0) throw std::invalid_argument("empty panel");
  std::map<int, std::vector<int>> groups;
  for (int d = 0; d < panel.n_days(); ++d)
    groups[panel.days[d].weekday()].push_back(d);
  std::map<int, MinuteProfile> out;
  for (const auto& [wd, idx] : groups)
    out[wd] = profile_over_days(panel, idx);
  return out;
}

AcfResult intraday_acf(const RangePanel& panel, int max_lag) {
  if (max_lag < 1) throw std::invalid_argument("max_lag must be >= 1");
  const Moments m = observed_moments(panel);
  if (!(m.var > 0)) throw DegenerateSeriesError("zero variance");

  AcfResult res;
  res.lags.resize(max_lag + 1);
  res.values.assign(max_lag + 1, kNaN);
  for (int k = 0; k <= max_lag; ++k) res.lags[k] = k;

  std::vector<double> sums(max_lag + 1, 0.0);
  std::vector<std::size_t> counts(max_lag + 1, 0);
  for (int d = 0; d < panel.n_days(); ++d) {
    int t = 0;
    while (t < panel.T) {
      if (!panel.observed(t, d)) {
        ++t;
        continue;
      }
      int run_end = t;
      while (run_end < panel.T && panel.observed(run_end, d)) ++run_end;
      for (int k = 0; k <= max_lag; ++k) {
        for (int i = t; i + k < run_end; ++i) {
          sums[k] += (panel.at(i, d) - m.mean) * (panel.at(i + k, d) - m.mean);
          ++counts[k];
        }
      }
      t = run_end;
    }
  }
  for (int k = 0; k <= max_lag; ++k)
    if (counts[k] > 0)
      res.values[k] = clamp_corr(sums[k] / counts[k] / m.var);
  return res;
}

AcfResult interday_acf(const RangePanel& panel, int minute, int max_lag) {
  if (minute < 0 || minute >= panel.T)
    throw std::invalid_argument("minute out of range");
  if (max_lag < 1) throw std::invalid_argument("max_lag must be >= 1");

  std::vector<double> series;          // observed values at this minute
  std::vector<int> pos;                // their day indices
  for (int d = 0; d < panel.n_days(); ++d)
    if (panel.observed(minute, d)) {
      series.push_back(panel.at(minute, d));
      pos.push_back(d);
    }
  const int n = static_cast<int>(series.size());
  if (n < 2) throw DegenerateSeriesError("fewer than 2 observations");

  double mean = 0;
  for (double v : series) mean += v;
  mean /= n;
  double var = 0;
  for (double v : series) var += (v - mean) * (v - mean);
  var /= n;
  if (!(var > 0)) throw DegenerateSeriesError("zero variance");

  // Day-index lookup so masked days form real gaps, not shifted positions.
  std::vector<int> at_day(panel.n_days(), -1);
  for (int i = 0; i < n; ++i) at_day[pos[i]] = i;

  AcfResult res;
  res.lags.resize(max_lag + 1);
  res.values.assign(max_lag + 1, kNaN);
  for (int k = 0; k <= max_lag; ++k) {
    res.lags[k] = k;
    if (k > n - 2 && k != 0) continue;  // undefined beyond n-2
    double sum = 0;
    std::size_t count = 0;
    for (int d = 0; d + k < panel.n_days(); ++d) {
      const int i = at_day[d];
      const int j = at_day[d + k];
      if (i < 0 || j < 0) continue;
      sum += (series[i] - mean) * (series[j] - mean);
      ++count;
    }
    if (count > 0) res.values[k] = clamp_corr(sum / count / var);
  }
  return res;
}

CrossCorrelation cross_pair_correlation(const std::vector<RangePanel>& panels,
                                        const std::vector<int>& lags) {
  const int p = static_cast<int>(panels.size());
  if (p < 2) throw std::invalid_argument("need >= 2 panels");
  for (int i = 1; i < p; ++i)
    if (panels[i].days != panels[0].days || panels[i].T != panels[0].T)
      throw std::invalid_argument("panels must be aligned first");

  CrossCorrelation cc;
  cc.lags = lags;
  cc.matrices.assign(lags.size(),
                     std::vector<std::vector<double>>(
                         p, std::vector<double>(p, kNaN)));
  const RangePanel& ref = panels[0];
  for (std::size_t l = 0; l < lags.size(); ++l) {
    const int lag = lags[l];
    if (lag < 0) throw std::invalid_argument("lags must be nonnegative");
    for (int i = 0; i < p; ++i) {
      for (int j = 0; j < p; ++j) {
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        std::size_t n = 0;
        for (int d = 0; d < ref.n_days(); ++d) {
          for (int t = lag; t < ref.T; ++t) {
            if (!panels[i].observed(t, d) || !panels[j].observed(t - lag, d))
              continue;
            const double x = panels[i].at(t, d);
            const double y = panels[j].at(t - lag, d);
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
            ++n;
          }
        }
        if (n < 2) continue;
        const double nn = static_cast<double>(n);
        const double cov = sxy / nn - (sx / nn) * (sy / nn);
        const double vx = sxx / nn - (sx / nn) * (sx / nn);
        const double vy = syy / nn - (sy / nn) * (sy / nn);
        if (vx > 0 && vy > 0)
          cc.matrices[l][i][j] = clamp_corr(cov / std::sqrt(vx * vy));
      }
    }
  }
  return cc;
}

std::string profile_to_csv(const MinuteProfile& profile) {
  std::string out = "minute,mean,count\n";
  for (std::size_t t = 0; t < profile.means.size(); ++t) {
    out += std::to_string(t) + ',';
    if (!std::isnan(profile.means[t])) out += fmt_double(profile.means[t]);
    out += ',' + std::to_string(profile.counts[t]) + '\n';
  }
  return out;
}

std::string weekday_profiles_to_csv(
    const std::map<int, MinuteProfile>& profiles) {
  std::string out = "weekday,minute,mean,count\n";
  for (const auto& [wd, profile] : profiles) {
    for (std::size_t t = 0; t < profile.means.size(); ++t) {
      out += std::to_string(wd) + ',' + std::to_string(t) + ',';
      if (!std::isnan(profile.means[t])) out += fmt_double(profile.means[t]);
      out += ',' + std::to_string(profile.counts[t]) + '\n';
    }
  }
  return out;
}

std::string acf_to_csv(const AcfResult& acf) {
  std::string out = "lag,acf\n";
  for (std::size_t k = 0; k < acf.lags.size(); ++k) {
    out += std::to_string(acf.lags[k]) + ',';
    if (!std::isnan(acf.values[k])) out += fmt_double(acf.values[k]);
    out += '\n';
  }
  return out;
}

std::string cross_correlation_to_csv(const CrossCorrelation& cc,
                                     const std::vector<std::string>& pair_ids) {
  std::string out = "lag,pair_i,pair_j,correlation\n";
  for (std::size_t l = 0; l < cc.lags.size(); ++l) {
    for (std::size_t i = 0; i < pair_ids.size(); ++i) {
      for (std::size_t j = 0; j < pair_ids.size(); ++j) {
        out += std::to_string(cc.lags[l]) + ',' + pair_ids[i] + ',' +
               pair_ids[j] + ',';
        const double v = cc.matrices[l][i][j];
        if (!std::isnan(v)) out += fmt_double(v);
        out += '\n';
      }
    }
  }
  return out;
}

}  // namespace rangecast::analysis
