#pragma once

#include <map>
#include <stdexcept>
#include <vector>

#include "rangecast/market_data.hpp"

namespace rangecast::analysis {

struct DegenerateSeriesError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mean log range per minute over observed cells. Minutes with zero
// observations carry NaN and serialize as empty fields.
struct MinuteProfile {
  std::vector<double> means;   // length T, NaN where undefined
  std::vector<int> counts;
};

struct AcfResult {
  std::vector<int> lags;
  std::vector<double> values;  // NaN where undefined
};

MinuteProfile minute_profile(const market::RangePanel& panel);

// Days grouped by weekday (0 = Monday) before averaging; only weekdays
// present in the panel appear in the map.
std::map<int, MinuteProfile> weekday_profiles(const market::RangePanel& panel);

// Sample ACF of the within-day series. Lag-k products are formed only inside
// a single day across contiguous runs of observed cells; the numerator mean
// is taken over the products actually formed and the denominator is the
// global sample variance (Box-Jenkins convention), with the result clamped
// to [-1, 1]. Throws DegenerateSeriesError on zero variance.
AcfResult intraday_acf(const market::RangePanel& panel, int max_lag);

// Standard sample ACF of the day-indexed series at one fixed minute.
// Lags beyond n_observed - 2 are undefined (NaN).
AcfResult interday_acf(const market::RangePanel& panel, int minute,
                       int max_lag);

// Pearson correlation of V_i[t] against V_j[t - lag] per ordered pair and
// lag, over jointly observed within-day positions. Cells where either
// subsample is degenerate carry NaN.
struct CrossCorrelation {
  std::vector<int> lags;
  // matrices[l][i][j] = corr(V_i(t), V_j(t - lags[l]))
  std::vector<std::vector<std::vector<double>>> matrices;
};

CrossCorrelation cross_pair_correlation(
    const std::vector<market::RangePanel>& panels,
    const std::vector<int>& lags = {0, 1, 2, 4, 8});

// Tidy CSV emitters (one row per (group, index, value); undefined = empty).
std::string profile_to_csv(const MinuteProfile& profile);
std::string weekday_profiles_to_csv(
    const std::map<int, MinuteProfile>& profiles);
std::string acf_to_csv(const AcfResult& acf);
std::string cross_correlation_to_csv(const CrossCorrelation& cc,
                                     const std::vector<std::string>& pair_ids);

}  // namespace rangecast::analysis
