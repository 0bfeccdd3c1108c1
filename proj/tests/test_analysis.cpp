#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "rangecast/analysis.hpp"
#include "rangecast/rng.hpp"
#include "rangecast/synth.hpp"

using namespace rangecast;
using namespace rangecast::analysis;
using market::RangePanel;

namespace {

RangePanel noise_panel(int days, int T, std::uint64_t seed, double sd = 1.0,
                       double mean = 10.0) {
  RangePanel p;
  p.pair = "N";
  p.T = T;
  SplitMix64 rng(seed);
  std::int64_t z = Date{2021, 1, 4}.to_days();
  for (int d = 0; d < days; ++d) p.days.push_back(Date::from_days(z + d));
  p.values.resize(static_cast<std::size_t>(days) * T);
  p.mask.assign(p.values.size(), true);
  for (auto& v : p.values) v = mean + sd * rng.next_normal();
  return p;
}

}  // namespace

TEST_CASE("minute_profile averaging") {
  RangePanel p;
  p.pair = "X";
  p.T = 3;
  p.days = {{2021, 1, 4}, {2021, 1, 5}};
  SUBCASE("identical days reproduce a single day") {
    p.values = {1.0, 2.0, 3.0, 1.0, 2.0, 3.0};
    p.mask.assign(6, true);
    const auto prof = minute_profile(p);
    CHECK(prof.means == std::vector<double>{1.0, 2.0, 3.0});
    CHECK(prof.counts == std::vector<int>{2, 2, 2});
  }
  SUBCASE("v and 3v average to 2v") {
    p.values = {1.0, 2.0, 3.0, 3.0, 6.0, 9.0};
    p.mask.assign(6, true);
    const auto prof = minute_profile(p);
    CHECK(prof.means == std::vector<double>{2.0, 4.0, 6.0});
  }
  SUBCASE("minute masked on all days is undefined and serializes empty") {
    p.values = {1.0, 2.0, 3.0, 1.0, 2.0, 3.0};
    p.mask = {true, false, true, true, false, true};
    const auto prof = minute_profile(p);
    CHECK(std::isnan(prof.means[1]));
    CHECK(prof.counts[1] == 0);
    const std::string csv = profile_to_csv(prof);
    CHECK(csv.find("\n1,,0\n") != std::string::npos);
  }
}

TEST_CASE("minute_profile invariant under day reordering") {
  auto p = noise_panel(6, 40, 31);
  auto q = p;
  // reverse the day columns together with the day labels
  for (int d = 0; d < q.n_days(); ++d)
    for (int t = 0; t < q.T; ++t)
      q.values[q.idx(t, d)] = p.at(t, p.n_days() - 1 - d);
  std::reverse(q.days.begin(), q.days.end());
  std::sort(q.days.begin(), q.days.end());  // keep the strictly-increasing invariant
  const auto a = minute_profile(p);
  const auto b = minute_profile(q);
  for (int t = 0; t < p.T; ++t) CHECK(a.means[t] == doctest::Approx(b.means[t]));
}

TEST_CASE("weekday_profiles group by weekday") {
  synth::SeasonalSpec spec;
  spec.days = 10;  // two full Mon..Fri weeks
  spec.T = 20;
  spec.base_level = 1.0;
  const auto out = synth::gen_seasonal_ar_panel(spec);
  const auto profs = weekday_profiles(out.panel);
  CHECK(profs.size() == 5);
  for (const auto& [wd, prof] : profs) {
    CHECK(wd >= 0);
    CHECK(wd <= 4);
    CHECK(prof.counts[0] == 2);
  }
}

TEST_CASE("intraday_acf white noise stays inside the Monte-Carlo band") {
  const auto p = noise_panel(10, 500, 101);
  const auto acf = intraday_acf(p, 10);
  CHECK(acf.values[0] == 1.0);
  const double band = 3.0 / std::sqrt(5000.0);
  for (int k = 1; k <= 10; ++k) CHECK(std::abs(acf.values[k]) < band);
}

TEST_CASE("intraday_acf of an AR(1) panel matches phi") {
  // one long day so within-day products dominate
  synth::SeasonalSpec spec;
  spec.days = 2;
  spec.T = 50000;
  spec.base_level = 100.0;  // keeps values positive, cancels in deviations
  spec.phi = 0.5;
  spec.noise_sd = 1.0;
  spec.seed = 7;
  const auto out = synth::gen_seasonal_ar_panel(spec);
  CHECK(out.truncated == 0);
  const auto acf = intraday_acf(out.panel, 3);
  CHECK(std::abs(acf.values[1] - 0.5) < 0.05);
  CHECK(std::abs(acf.values[2] - 0.25) < 0.05);
}

TEST_CASE("intraday_acf degenerate and mask handling") {
  RangePanel p;
  p.pair = "C";
  p.T = 5;
  p.days = {{2021, 1, 4}};
  p.values.assign(5, 2.5);
  p.mask.assign(5, true);
  CHECK_THROWS_AS(intraday_acf(p, 2), DegenerateSeriesError);

  // products never bridge a masked cell
  auto q = noise_panel(1, 100, 55);
  q.mask[q.idx(50, 0)] = false;
  const auto acf = intraday_acf(q, 5);  // just exercises the run splitting
  CHECK(acf.values[0] == 1.0);
}

TEST_CASE("intraday_acf iid false-positive rate is controlled") {
  // Ljung-Box style sanity: |acf(k)| sqrt(N) > 1.96 for at most 10% of lags
  // across seeded trials.
  int exceed = 0, total = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = noise_panel(4, 500, 1000 + trial);
    const auto acf = intraday_acf(p, 20);
    const double n = 2000.0;
    for (int k = 1; k <= 20; ++k) {
      ++total;
      if (std::abs(acf.values[k]) * std::sqrt(n) > 1.96) ++exceed;
    }
  }
  CHECK(static_cast<double>(exceed) / total <= 0.10);
}

TEST_CASE("interday_acf") {
  SUBCASE("period-20 daily series peaks at lag 20") {
    RangePanel p;
    p.pair = "S";
    p.T = 2;
    const int days = 80;
    std::int64_t z = Date{2021, 1, 4}.to_days();
    for (int d = 0; d < days; ++d) p.days.push_back(Date::from_days(z + d));
    p.values.resize(static_cast<std::size_t>(days) * 2);
    p.mask.assign(p.values.size(), true);
    for (int d = 0; d < days; ++d)
      p.values[p.idx(1, d)] = (d % 20 == 0) ? 5.0 : 1.0;
    const auto acf = interday_acf(p, 1, 30);
    CHECK(acf.values[0] == 1.0);
    int argmax = 1;
    for (int k = 2; k <= 30; ++k)
      if (acf.values[k] > acf.values[argmax]) argmax = k;
    CHECK(argmax == 20);
  }
  SUBCASE("short series: lags beyond n-2 undefined") {
    auto p = noise_panel(6, 3, 77);
    const auto acf = interday_acf(p, 0, 5);
    CHECK(acf.values[0] == 1.0);
    CHECK(!std::isnan(acf.values[4]));  // n - 2 = 4 still defined
    CHECK(std::isnan(acf.values[5]));
  }
  SUBCASE("constant daily series throws") {
    RangePanel p;
    p.pair = "K";
    p.T = 1;
    std::int64_t z = Date{2021, 1, 4}.to_days();
    for (int d = 0; d < 12; ++d) p.days.push_back(Date::from_days(z + d));
    p.values.assign(12, 3.0);
    p.mask.assign(12, true);
    CHECK_THROWS_AS(interday_acf(p, 0, 4), DegenerateSeriesError);
  }
}

TEST_CASE("interday AR(1) across days recovers psi") {
  synth::SeasonalSpec spec;
  spec.days = 2000;
  spec.T = 4;
  spec.base_level = 100.0;
  spec.phi = 0.0;
  spec.psi = 0.4;
  spec.noise_sd = 1.0;
  spec.seed = 23;
  const auto out = synth::gen_seasonal_ar_panel(spec);
  const auto acf = interday_acf(out.panel, 2, 3);
  CHECK(std::abs(acf.values[1] - 0.4) < 0.05);
}

TEST_CASE("cross_pair_correlation") {
  SUBCASE("panel against itself: diagonal 1 at lag 0") {
    auto p = noise_panel(4, 200, 400);
    auto q = p;
    q.pair = "Q";
    const auto cc = cross_pair_correlation({p, q}, {0});
    CHECK(cc.matrices[0][0][0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cc.matrices[0][0][1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("lag-0 matrix is symmetric") {
    auto p = noise_panel(4, 300, 91);
    auto q = noise_panel(4, 300, 92);
    q.pair = "Q";
    q.days = p.days;
    const auto cc = cross_pair_correlation({p, q}, {0});
    CHECK(std::abs(cc.matrices[0][0][1] - cc.matrices[0][1][0]) < 1e-12);
  }
  SUBCASE("a 2-minute shifted copy is maximal at lag 2") {
    auto p = noise_panel(3, 1000, 555);
    auto q = p;
    q.pair = "Q";
    // q at minute t equals p at minute t - 2
    for (int d = 0; d < q.n_days(); ++d) {
      for (int t = q.T - 1; t >= 2; --t)
        q.values[q.idx(t, d)] = p.at(t - 2, d);
    }
    const auto cc = cross_pair_correlation({q, p}, {0, 1, 2, 4, 8});
    // corr(q_t, p_{t-l}) peaks at l = 2
    double best = -2;
    int best_lag = -1;
    for (std::size_t l = 0; l < cc.lags.size(); ++l) {
      if (cc.matrices[l][0][1] > best) {
        best = cc.matrices[l][0][1];
        best_lag = cc.lags[l];
      }
    }
    CHECK(best_lag == 2);
    CHECK(best > 0.99);
  }
  SUBCASE("independent panels stay inside the noise band") {
    auto p = noise_panel(4, 500, 31);
    auto q = noise_panel(4, 500, 77);
    q.pair = "Q";
    q.days = p.days;
    const auto cc = cross_pair_correlation({p, q}, {0, 1, 2, 4, 8});
    const double band = 3.0 / std::sqrt(2000.0);
    for (std::size_t l = 0; l < cc.lags.size(); ++l)
      CHECK(std::abs(cc.matrices[l][0][1]) < band);
  }
}

TEST_CASE("analysis CSV emitters") {
  auto p = noise_panel(3, 10, 3);
  const auto acf = intraday_acf(p, 3);
  const std::string csv = acf_to_csv(acf);
  CHECK(csv.rfind("lag,acf\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);

  const auto cc = cross_pair_correlation({p, p}, {0, 1});
  const std::string ccsv = cross_correlation_to_csv(cc, {"A", "B"});
  CHECK(std::count(ccsv.begin(), ccsv.end(), '\n') == 1 + 2 * 4);
}
