#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rangecast/market_data.hpp"
#include "rangecast/rng.hpp"

namespace rangecast::synth {

struct SpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic seasonal-AR panel generator. With s(t) the seasonal profile
// and x the latent deviation,
//   x[t][D] = phi * x[t - intraday_lag][D] + psi * x[t][D-1] + noise
//   V[t][D] = max(s(t) + x[t][D], 0)
// out-of-range latent references contribute zero. Days are consecutive
// weekdays from start_date. Requires |phi| + |psi| < 1.
struct SeasonalSpec {
  std::string pair = "SYN";
  int days = 60;
  int T = market::kMinutesPerDay;
  double base_level = 5e-4;
  double hump_amplitude = 0.0;  // adds hump_amplitude * sin^2(pi t / T)
  std::vector<std::pair<int, double>> spikes;  // minute -> added level
  double phi = 0.0;
  double psi = 0.0;
  int intraday_lag = 1;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;
  Date start_date{2021, 1, 4};  // a Monday
};

struct SeasonalPanel {
  market::RangePanel panel;
  std::vector<double> seasonal;       // s(t), length T
  std::vector<double> pre_truncation; // s + x, day-major like the panel
  int truncated = 0;
};

std::vector<double> seasonal_profile(const SeasonalSpec& spec);
SeasonalPanel gen_seasonal_ar_panel(const SeasonalSpec& spec);

// GARCH(1,1) simulator: r_t = sigma_t * z_t with standard normal z and
//   sigma2_t = omega + alpha * r_{t-1}^2 + beta * sigma2_{t-1},
// sigma2_0 at the stationary variance omega / (1 - alpha - beta).
struct GarchSimSpec {
  double omega = 1e-6;
  double alpha = 0.05;
  double beta = 0.90;
  int n = 50000;
  std::uint64_t seed = 0;
};

struct GarchSim {
  std::vector<double> returns;
  std::vector<double> sigma2;  // latent variance path
};

GarchSim gen_garch_returns(const GarchSimSpec& spec);

// p panels sharing one latent factor: V_i = max(s(t) + loading_i * F + eta_i,
// 0) where F follows the seasonal-AR recursion (standardized to unit sample
// variance) and eta_i is iid normal with sd idio_sd. With unit idio_sd and
// flat s, the lag-0 correlation between pairs with loadings a, b approaches
// a*b / sqrt((a^2+1)(b^2+1)).
struct MultiPairSpec {
  SeasonalSpec factor;  // noise_sd ignored; factor noise is standardized
  std::vector<std::string> pair_ids;
  std::vector<double> loadings;
  double idio_sd = 1.0;
};

struct MultiPairPanels {
  std::vector<market::RangePanel> panels;
  std::vector<double> factor;          // standardized, day-major
  std::vector<double> seasonal;        // s(t)
  std::vector<std::vector<double>> pre_truncation;  // per pair
  int truncated = 0;
};

MultiPairPanels gen_multi_pair(const MultiPairSpec& spec);

// Rebuilds an OHLC bar stream whose per-minute log range reproduces the
// panel: each bar moves the close by exp(+-V) with a seeded sign, so
// high/low bracket open/close and ln(high/low) recovers V up to one
// floating-point exp/log round trip. Masked minutes emit no bar.
std::vector<market::MinuteBar> panel_to_bars(const market::RangePanel& panel,
                                             double base_price,
                                             std::uint64_t seed);

std::string bars_to_canonical_csv(std::span<const market::MinuteBar> bars);

}  // namespace rangecast::synth
