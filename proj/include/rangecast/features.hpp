#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "rangecast/market_data.hpp"

namespace rangecast::features {

struct DegenerateScaleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptySampleSetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Half-open range of day indices into a panel's day list.
struct DayRange {
  int begin = 0;
  int end = 0;
  bool contains(int d) const { return d >= begin && d < end; }
  int size() const { return end - begin; }
};

// Min-max scaling fitted on training days only. transform maps the training
// extrema to [0,1]; out-of-range inputs extrapolate without clipping.
struct Normalizer {
  double min = 0;
  double max = 1;
  double transform(double v) const { return (v - min) / (max - min); }
  double inverse(double u) const { return min + u * (max - min); }
};

Normalizer fit_normalizer(const market::RangePanel& panel, DayRange days);

// One assembled training/evaluation sample. `minute`/`day` locate the target
// cell. Window layouts are step-major: element (step, pair) of a w-wide
// window lives at step * w + pair.
struct Sample {
  int day = 0;
  int minute = 0;
  std::vector<double> time_features;  // (t, day_of_week, month, month_end)
  std::vector<double> intraday;       // p_t * w, normalized
  std::vector<double> interday;       // p_d * w, normalized
  std::vector<double> target;         // 1 or p entries, normalized
  std::vector<double> target_raw;     // same, original log-range scale
};

enum class SampleKind { time_features, lag_window, pair_lag_window };

struct SampleSet {
  SampleKind kind = SampleKind::lag_window;
  int p_t = 0;
  int p_d = 0;
  int width = 1;  // pairs per window column
  std::vector<std::string> pair_ids;
  std::vector<Normalizer> normalizers;  // one per pair
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

// Calendar features of cell (t, day): minute scaled by 1/(T-1), weekday
// (Monday = 0) scaled by 1/6, month scaled by (m-1)/11, and a month-end flag
// that is 1 on the last panel date of that (year, month).
std::vector<double> time_features_at(const market::RangePanel& panel, int t,
                                     int day);

// One sample per observed cell in `days`; target is the normalized V at the
// cell itself (calendar features are known in advance, so no lag shift).
SampleSet make_time_samples(const market::RangePanel& panel, DayRange days,
                            const Normalizer& norm);

// Lagged windows for a single pair: intraday window (V_{t-p_t+1..t}, same
// day), interday window (V at the target minute over the p_d previous days),
// target V at (t+1). Windows never cross the day boundary and never touch a
// masked cell; earlier days outside `days` may be read for interday history.
// Throws EmptySampleSetError when nothing is admissible.
SampleSet make_lag_samples(const market::RangePanel& panel, int p_t, int p_d,
                           DayRange days, const Normalizer& norm);

// Joint windows over p >= 2 aligned panels; a sample exists only where it is
// admissible for every pair simultaneously, and each pair's column is scaled
// by its own normalizer.
SampleSet make_pair_samples(const std::vector<market::RangePanel>& panels,
                            int p_t, int p_d, DayRange days,
                            const std::vector<Normalizer>& norms);

// Debug export: one row per sample with the flattened windows.
std::string sample_set_to_csv(const SampleSet& set);

}  // namespace rangecast::features
