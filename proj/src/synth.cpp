#include "rangecast/synth.hpp"

#include <cmath>
#include <cstdio>

#include "rangecast/io_util.hpp"

namespace rangecast::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<Date> weekday_sequence(Date start, int count) {
  std::vector<Date> days;
  days.reserve(count);
  std::int64_t z = start.to_days();
  while (static_cast<int>(days.size()) < count) {
    const Date d = Date::from_days(z);
    if (d.weekday() < 5) days.push_back(d);
    ++z;
  }
  return days;
}

// Latent AR surface, day-major layout, noise drawn from per-day substreams.
std::vector<double> latent_ar(const SeasonalSpec& spec, double noise_sd) {
  const int T = spec.T, days = spec.days, lag = spec.intraday_lag;
  std::vector<double> x(static_cast<std::size_t>(days) * T, 0.0);
  auto at = [&](int t, int d) -> double& {
    return x[static_cast<std::size_t>(d) * T + t];
  };
  for (int d = 0; d < days; ++d) {
    SplitMix64 rng(SplitMix64::derive(spec.seed, 0xDA7ull * 131 + d));
    for (int t = 0; t < T; ++t) {
      double v = noise_sd > 0 ? noise_sd * rng.next_normal() : 0.0;
      if (t - lag >= 0) v += spec.phi * at(t - lag, d);
      if (d - 1 >= 0) v += spec.psi * at(t, d - 1);
      at(t, d) = v;
    }
  }
  return x;
}

void validate_stability(const SeasonalSpec& spec) {
  if (spec.days < 1 || spec.T < 1) throw SpecError("days and T must be >= 1");
  if (spec.intraday_lag < 1) throw SpecError("intraday_lag must be >= 1");
  if (std::abs(spec.phi) + std::abs(spec.psi) >= 1.0)
    throw SpecError("unstable parameters: |phi| + |psi| >= 1");
}

market::RangePanel panel_from_values(const std::string& pair, int T,
                                     const std::vector<Date>& days,
                                     const std::vector<double>& pre,
                                     int* truncated) {
  market::RangePanel panel;
  panel.pair = pair;
  panel.T = T;
  panel.days = days;
  panel.values.resize(pre.size());
  panel.mask.assign(pre.size(), true);
  int cut = 0;
  for (std::size_t i = 0; i < pre.size(); ++i) {
    if (pre[i] < 0) {
      panel.values[i] = 0.0;
      ++cut;
    } else {
      panel.values[i] = pre[i];
    }
  }
  if (truncated) *truncated = cut;
  return panel;
}

}  // namespace

std::vector<double> seasonal_profile(const SeasonalSpec& spec) {
  std::vector<double> s(spec.T, spec.base_level);
  for (int t = 0; t < spec.T; ++t) {
    const double phase = std::sin(kPi * t / spec.T);
    s[t] += spec.hump_amplitude * phase * phase;
  }
  for (const auto& [minute, level] : spec.spikes) {
    if (minute < 0 || minute >= spec.T)
      throw SpecError("spike minute out of range");
    s[minute] += level;
  }
  return s;
}

SeasonalPanel gen_seasonal_ar_panel(const SeasonalSpec& spec) {
  validate_stability(spec);
  SeasonalPanel out;
  out.seasonal = seasonal_profile(spec);
  const std::vector<double> x = latent_ar(spec, spec.noise_sd);
  out.pre_truncation.resize(x.size());
  for (int d = 0; d < spec.days; ++d)
    for (int t = 0; t < spec.T; ++t) {
      const std::size_t i = static_cast<std::size_t>(d) * spec.T + t;
      out.pre_truncation[i] = out.seasonal[t] + x[i];
    }
  out.panel = panel_from_values(spec.pair, spec.T,
                                weekday_sequence(spec.start_date, spec.days),
                                out.pre_truncation, &out.truncated);
  return out;
}

GarchSim gen_garch_returns(const GarchSimSpec& spec) {
  if (!(spec.omega > 0) || spec.alpha < 0 || spec.beta < 0 ||
      spec.alpha + spec.beta >= 1.0)
    throw SpecError("infeasible GARCH parameters");
  if (spec.n < 2) throw SpecError("n must be >= 2");
  GarchSim sim;
  sim.returns.resize(spec.n);
  sim.sigma2.resize(spec.n);
  SplitMix64 rng(SplitMix64::derive(spec.seed, 0x6A2C4ull));
  double sigma2 = spec.omega / (1.0 - spec.alpha - spec.beta);
  for (int t = 0; t < spec.n; ++t) {
    if (t > 0)
      sigma2 = spec.omega + spec.alpha * sim.returns[t - 1] * sim.returns[t - 1] +
               spec.beta * sim.sigma2[t - 1];
    sim.sigma2[t] = sigma2;
    sim.returns[t] = std::sqrt(sigma2) * rng.next_normal();
  }
  return sim;
}

MultiPairPanels gen_multi_pair(const MultiPairSpec& spec) {
  validate_stability(spec.factor);
  const std::size_t p = spec.pair_ids.size();
  if (p < 1) throw SpecError("need at least one pair id");
  if (spec.loadings.size() != p)
    throw SpecError("one loading per pair required");
  if (spec.idio_sd < 0) throw SpecError("idio_sd must be >= 0");

  MultiPairPanels out;
  out.seasonal = seasonal_profile(spec.factor);

  // Factor with unit innovations, standardized to unit sample variance so
  // loadings carry the whole scale.
  out.factor = latent_ar(spec.factor, 1.0);
  double mean = 0;
  for (double v : out.factor) mean += v;
  mean /= static_cast<double>(out.factor.size());
  double var = 0;
  for (double v : out.factor) var += (v - mean) * (v - mean);
  var /= static_cast<double>(out.factor.size());
  if (!(var > 0)) throw SpecError("degenerate factor (zero variance)");
  const double inv_sd = 1.0 / std::sqrt(var);
  for (double& v : out.factor) v = (v - mean) * inv_sd;

  const auto days = weekday_sequence(spec.factor.start_date, spec.factor.days);
  const int T = spec.factor.T;
  out.pre_truncation.resize(p);
  out.truncated = 0;
  for (std::size_t i = 0; i < p; ++i) {
    SplitMix64 rng(SplitMix64::derive(spec.factor.seed, 0x1D10ull + i));
    std::vector<double>& pre = out.pre_truncation[i];
    pre.resize(out.factor.size());
    for (std::size_t k = 0; k < pre.size(); ++k) {
      const int t = static_cast<int>(k % T);
      pre[k] = out.seasonal[t] + spec.loadings[i] * out.factor[k] +
               (spec.idio_sd > 0 ? spec.idio_sd * rng.next_normal() : 0.0);
    }
    int cut = 0;
    out.panels.push_back(
        panel_from_values(spec.pair_ids[i], T, days, pre, &cut));
    out.truncated += cut;
  }
  return out;
}

std::vector<market::MinuteBar> panel_to_bars(const market::RangePanel& panel,
                                             double base_price,
                                             std::uint64_t seed) {
  if (!(base_price > 0)) throw SpecError("base price must be positive");
  std::vector<market::MinuteBar> bars;
  double close = base_price;
  for (int d = 0; d < panel.n_days(); ++d) {
    SplitMix64 rng(SplitMix64::derive(seed, 0x516Eull * 131 + d));
    for (int t = 0; t < panel.T; ++t) {
      if (!panel.observed(t, d)) continue;
      const double v = panel.at(t, d);
      const bool up = (rng.next_u64() & 1) != 0;
      market::MinuteBar b;
      b.date = panel.days[d];
      b.minute = t;
      b.open = close;
      if (up) {
        b.low = b.open;
        b.high = b.close = b.open * std::exp(v);
      } else {
        b.high = b.open;
        b.low = b.close = b.open * std::exp(-v);
      }
      close = b.close;
      bars.push_back(b);
    }
  }
  return bars;
}

std::string bars_to_canonical_csv(std::span<const market::MinuteBar> bars) {
  std::string out;
  char stamp[32];
  for (const market::MinuteBar& b : bars) {
    std::snprintf(stamp, sizeof(stamp), "%02d/%02d/%04d,%02d:%02d", b.date.month,
                  b.date.day, b.date.year, b.minute / 60, b.minute % 60);
    out += stamp;
    out += ',' + fmt_double(b.open) + ',' + fmt_double(b.high) + ',' +
           fmt_double(b.low) + ',' + fmt_double(b.close) + '\n';
  }
  return out;
}

}  // namespace rangecast::synth
