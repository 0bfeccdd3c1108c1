#include "rangecast/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "rangecast/io_util.hpp"

namespace rangecast::eval {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

std::vector<FoldSplit> blocked_splits(int n_days, int k, double train_ratio,
                                      double val_ratio) {
  if (k < 1) throw SplitError("k must be >= 1");
  if (n_days < 10 * k)
    throw SplitError("need at least " + std::to_string(10 * k) + " days, got " +
                     std::to_string(n_days));
  if (train_ratio <= 0 || val_ratio <= 0 || train_ratio + val_ratio >= 1.0)
    throw SplitError("invalid split ratios");

  const int base = n_days / k;
  std::vector<FoldSplit> splits;
  int start = 0;
  for (int f = 0; f < k; ++f) {
    const int n = (f == k - 1) ? n_days - start : base;
    const int n_train = static_cast<int>(std::floor(train_ratio * n));
    const int n_val = static_cast<int>(std::floor(val_ratio * n));
    const int n_test = n - n_train - n_val;
    if (n_train < 1 || n_val < 1 || n_test < 1)
      throw SplitError("block too small for the split ratios");
    FoldSplit s;
    s.fold = f;
    s.train = {start, start + n_train};
    s.val = {s.train.end, s.train.end + n_val};
    s.test = {s.val.end, s.val.end + n_test};
    start += n;
    splits.push_back(s);
  }
  return splits;
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

double mse_of(const std::vector<PredictionRecord>& records) {
  if (records.empty()) return kNaN;
  double acc = 0;
  for (const auto& r : records) acc += r.squared_error;
  return acc / static_cast<double>(records.size());
}

void finalize_result(EvalResult& result) {
  const std::size_t n_pairs = result.pair_ids.size();
  const std::size_t n_folds = result.folds.size();
  result.mse_by_pair.assign(n_pairs, std::vector<double>(n_folds, kNaN));
  for (std::size_t f = 0; f < n_folds; ++f) {
    std::vector<double> acc(n_pairs, 0.0);
    std::vector<std::size_t> cnt(n_pairs, 0);
    for (const auto& r : result.folds[f].records) {
      acc[r.pair] += r.squared_error;
      ++cnt[r.pair];
    }
    for (std::size_t p = 0; p < n_pairs; ++p)
      if (cnt[p] > 0) result.mse_by_pair[p][f] = acc[p] / cnt[p];
  }
  result.mean_by_pair.assign(n_pairs, kNaN);
  result.std_by_pair.assign(n_pairs, kNaN);
  for (std::size_t p = 0; p < n_pairs; ++p) {
    double mean = 0;
    int m = 0;
    for (double v : result.mse_by_pair[p])
      if (!std::isnan(v)) {
        mean += v;
        ++m;
      }
    if (m == 0) continue;
    mean /= m;
    result.mean_by_pair[p] = mean;
    if (m > 1) {
      double ss = 0;
      for (double v : result.mse_by_pair[p])
        if (!std::isnan(v)) ss += (v - mean) * (v - mean);
      result.std_by_pair[p] = std::sqrt(ss / (m - 1));
    } else {
      result.std_by_pair[p] = 0.0;
    }
  }
}

std::string records_to_csv(const std::vector<PredictionRecord>& records,
                           const std::vector<Date>& days) {
  std::string out = "day,minute,target,prediction,squared_error\n";
  for (const auto& r : records) {
    out += days[r.day].to_string() + ',' + std::to_string(r.minute) + ',' +
           fmt_double(r.target) + ',' + fmt_double(r.prediction) + ',' +
           fmt_double(r.squared_error) + '\n';
  }
  return out;
}

std::vector<PredictionRecord> records_from_csv(const std::string& text) {
  std::vector<PredictionRecord> records;
  std::size_t pos = 0;
  bool header = true;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string_view line(text.data() + pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = split_fields(line, ',');
    if (f.size() != 5) throw std::invalid_argument("bad record row");
    PredictionRecord r;
    // absolute day number so records from different files align by date even
    // when one model has no forecast on some day
    r.day = static_cast<int>(parse_date_iso(f[0]).to_days());
    r.minute = std::stoi(std::string(f[1]));
    r.target = std::stod(std::string(f[2]));
    r.prediction = std::stod(std::string(f[3]));
    r.squared_error = std::stod(std::string(f[4]));
    records.push_back(r);
  }
  return records;
}

// ---------------------------------------------------------------------------
// Neural drivers
// ---------------------------------------------------------------------------

namespace {

std::vector<market::RangePanel> panels_for(
    zoo::Family family, const std::vector<market::RangePanel>& panels,
    std::size_t pair_index) {
  if (family == zoo::Family::PPairsTwoLSTM) return panels;
  return {panels[pair_index]};
}

}  // namespace

zoo::Checkpoint train_fold(const zoo::ModelSpec& spec,
                           const std::vector<market::RangePanel>& panels,
                           const FoldSplit& split, std::uint64_t seed) {
  spec.validate();
  std::vector<features::Normalizer> norms;
  for (const auto& panel : panels)
    norms.push_back(features::fit_normalizer(panel, split.train));
  const auto train_set =
      zoo::assemble_samples(spec.family, spec, panels, split.train, norms);
  const auto val_set =
      zoo::assemble_samples(spec.family, spec, panels, split.val, norms);

  auto net = zoo::build_network(
      spec, SplitMix64::derive(seed, 0x1717ull + split.fold));
  neural::TrainConfig tc = spec.train;
  tc.seed = SplitMix64::derive(seed, 0x7A17ull + split.fold);

  zoo::Checkpoint ckpt;
  ckpt.spec = spec;
  ckpt.axis = spec.family == zoo::Family::LSTM_D ? zoo::LstmAxis::interday
                                                 : zoo::LstmAxis::intraday;
  for (const auto& panel : panels) ckpt.pair_ids.push_back(panel.pair);
  ckpt.normalizers = norms;
  ckpt.history = neural::train(*net, train_set, val_set, tc);
  ckpt.params = net->pack_params();
  return ckpt;
}

FoldEval predict_test_fold(const neural::NeuralNet& net,
                           const zoo::ModelSpec& spec,
                           const std::vector<market::RangePanel>& panels,
                           const std::vector<features::Normalizer>& norms,
                           const FoldSplit& split) {
  const auto test_set =
      zoo::assemble_samples(spec.family, spec, panels, split.test, norms);
  FoldEval fe;
  fe.fold = split.fold;
  for (const auto& s : test_set.samples) {
    const neural::Vec y = net.predict(s);
    for (std::size_t k = 0; k < y.size(); ++k) {
      PredictionRecord r;
      r.pair = static_cast<int>(k);
      r.day = s.day;
      r.minute = s.minute;
      r.target = s.target_raw[k];
      r.prediction = norms[k].inverse(y[k]);
      const double e = r.prediction - r.target;
      r.squared_error = e * e;
      fe.records.push_back(r);
    }
  }
  fe.n = fe.records.size();
  fe.mse = mse_of(fe.records);
  return fe;
}

namespace {

// AR evaluation for one pair: order tuned on (train, val) unless pinned,
// final coefficients fitted on the train days, one-step predictions over the
// test days.
void evaluate_ar_pair(const zoo::ModelSpec& spec,
                      const market::RangePanel& panel, const FoldSplit& split,
                      int pair_index, FoldEval& fe,
                      std::vector<FittedParams>& fitted) {
  int order = spec.ar_order;
  if (order <= 0)
    order = baselines::tune_ar_order(panel, spec.ar_order_grid, split.train,
                                     split.val)
                .order;
  const auto model =
      baselines::fit_ar(baselines::panel_segments(panel, split.train), order);

  FittedParams fp;
  fp.fold = split.fold;
  fp.pair = pair_index;
  fp.model = "AR(" + std::to_string(order) + ")";
  fp.names = {"intercept"};
  fp.values = {model.intercept};
  for (int i = 0; i < order; ++i) {
    fp.names.push_back("phi" + std::to_string(i + 1));
    fp.values.push_back(model.coeffs[i]);
  }
  fitted.push_back(std::move(fp));

  for (int d = split.test.begin; d < split.test.end; ++d) {
    for (int target_t = order; target_t < panel.T; ++target_t) {
      if (!panel.observed(target_t, d)) continue;
      bool ok = true;
      for (int t = target_t - order; t < target_t && ok; ++t)
        ok = panel.observed(t, d);
      if (!ok) continue;
      std::vector<double> window;
      window.reserve(order);
      for (int t = target_t - order; t < target_t; ++t)
        window.push_back(panel.at(t, d));
      PredictionRecord r;
      r.pair = pair_index;
      r.day = d;
      r.minute = target_t;
      r.target = panel.at(target_t, d);
      r.prediction = baselines::predict_ar(model, window);
      const double e = r.prediction - r.target;
      r.squared_error = e * e;
      fe.records.push_back(r);
    }
  }
}

}  // namespace

EvalResult evaluate_family(const zoo::ModelSpec& spec,
                           const std::vector<market::RangePanel>& panels,
                           const std::vector<FoldSplit>& splits,
                           std::uint64_t seed) {
  if (panels.empty()) throw std::invalid_argument("no panels");
  if (spec.family == zoo::Family::GARCH)
    throw std::invalid_argument("GARCH evaluation needs bars; use evaluate_garch");

  EvalResult result;
  result.family = spec.family;
  for (const auto& p : panels) result.pair_ids.push_back(p.pair);

  for (const FoldSplit& split : splits) {
    FoldEval fe;
    fe.fold = split.fold;
    if (spec.family == zoo::Family::AR) {
      for (std::size_t i = 0; i < panels.size(); ++i)
        evaluate_ar_pair(spec, panels[i], split, static_cast<int>(i), fe,
                         result.fitted);
    } else if (spec.family == zoo::Family::PPairsTwoLSTM) {
      zoo::ModelSpec joint = spec;
      joint.n_pairs = static_cast<int>(panels.size());
      const auto ckpt = train_fold(joint, panels, split, seed);
      const auto net = zoo::restore_network(ckpt);
      fe = predict_test_fold(*net, joint, panels, ckpt.normalizers, split);
      fe.fold = split.fold;
    } else {
      for (std::size_t i = 0; i < panels.size(); ++i) {
        const auto sub = panels_for(spec.family, panels, i);
        const auto ckpt = train_fold(
            spec, sub, split, SplitMix64::derive(seed, 0xFA1ull * 31 + i));
        const auto net = zoo::restore_network(ckpt);
        FoldEval one =
            predict_test_fold(*net, spec, sub, ckpt.normalizers, split);
        for (PredictionRecord r : one.records) {
          r.pair = static_cast<int>(i);
          fe.records.push_back(r);
        }
      }
    }
    fe.n = fe.records.size();
    fe.mse = mse_of(fe.records);
    result.folds.push_back(std::move(fe));
  }
  finalize_result(result);
  return result;
}

// ---------------------------------------------------------------------------
// GARCH driver
// ---------------------------------------------------------------------------

namespace {

struct CloseGrid {
  std::vector<double> close;  // day-major, like panel values
  std::vector<bool> mask;
};

CloseGrid close_grid(const market::RangePanel& panel,
                     const std::vector<market::MinuteBar>& bars) {
  CloseGrid g;
  g.close.assign(panel.values.size(), 0.0);
  g.mask.assign(panel.values.size(), false);
  std::map<Date, int> day_of;
  for (int d = 0; d < panel.n_days(); ++d) day_of[panel.days[d]] = d;
  for (const auto& b : bars) {
    auto it = day_of.find(b.date);
    if (it == day_of.end()) continue;
    const std::size_t i = panel.idx(b.minute, it->second);
    g.close[i] = b.close;
    g.mask[i] = true;
  }
  return g;
}

struct StreamPoint {
  int day, minute;
  double ret;
};

// Within-day close-to-close log returns over a day range, chronological.
std::vector<StreamPoint> return_stream(const market::RangePanel& panel,
                                       const CloseGrid& g,
                                       features::DayRange days) {
  std::vector<StreamPoint> out;
  for (int d = days.begin; d < days.end; ++d) {
    for (int t = 1; t < panel.T; ++t) {
      const std::size_t i = panel.idx(t, d);
      const std::size_t prev = panel.idx(t - 1, d);
      if (!g.mask[i] || !g.mask[prev]) continue;
      out.push_back({d, t, std::log(g.close[i] / g.close[prev])});
    }
  }
  return out;
}

}  // namespace

EvalResult evaluate_garch(const zoo::ModelSpec& spec,
                          const std::vector<market::RangePanel>& panels,
                          const std::vector<std::vector<market::MinuteBar>>& bars,
                          const std::vector<FoldSplit>& splits) {
  if (panels.size() != bars.size())
    throw std::invalid_argument("one bar stream per panel required");

  EvalResult result;
  result.family = zoo::Family::GARCH;
  for (const auto& p : panels) result.pair_ids.push_back(p.pair);

  std::vector<CloseGrid> grids;
  for (std::size_t i = 0; i < panels.size(); ++i)
    grids.push_back(close_grid(panels[i], bars[i]));

  for (const FoldSplit& split : splits) {
    FoldEval fe;
    fe.fold = split.fold;
    for (std::size_t i = 0; i < panels.size(); ++i) {
      const market::RangePanel& panel = panels[i];
      const CloseGrid& grid = grids[i];

      const auto train_pts = return_stream(panel, grid, split.train);
      std::vector<double> train_returns, train_ranges;
      train_returns.reserve(train_pts.size());
      train_ranges.reserve(train_pts.size());
      for (const auto& pt : train_pts) {
        train_returns.push_back(pt.ret);
        train_ranges.push_back(panel.observed(pt.minute, pt.day)
                                   ? panel.at(pt.minute, pt.day)
                                   : kNaN);
      }
      const auto model =
          baselines::fit_garch(train_returns, train_ranges, spec.garch);

      FittedParams fp;
      fp.fold = split.fold;
      fp.pair = static_cast<int>(i);
      fp.model = "GARCH(1,1)";
      fp.names = {"omega", "alpha", "beta", "range_scale"};
      fp.values = {model.omega, model.alpha, model.beta, model.range_scale};
      fp.optimizer = "nelder_mead";
      fp.final_loglik = model.final_loglik;
      fp.trace_length = model.likelihood_trace.size();
      if (!model.likelihood_trace.empty()) {
        fp.trace_first = model.likelihood_trace.front();
        fp.trace_last = model.likelihood_trace.back();
      }
      result.fitted.push_back(std::move(fp));

      // Filter chronologically from the fold's start through its test days;
      // predictions land on adjacent-minute transitions inside test days.
      const auto pts = return_stream(
          panel, grid, {split.train.begin, split.test.end});
      double sigma2 = model.sigma2_0;
      for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        const double next_sigma2 =
            std::max(baselines::garch_next_variance(model, pts[k].ret, sigma2),
                     1e-12);
        const auto& nxt = pts[k + 1];
        if (split.test.contains(nxt.day) && nxt.day == pts[k].day &&
            nxt.minute == pts[k].minute + 1 &&
            panel.observed(nxt.minute, nxt.day)) {
          PredictionRecord r;
          r.pair = static_cast<int>(i);
          r.day = nxt.day;
          r.minute = nxt.minute;
          r.target = panel.at(nxt.minute, nxt.day);
          r.prediction = model.range_scale * std::sqrt(next_sigma2);
          const double e = r.prediction - r.target;
          r.squared_error = e * e;
          fe.records.push_back(r);
        }
        sigma2 = next_sigma2;
      }
    }
    fe.n = fe.records.size();
    fe.mse = mse_of(fe.records);
    result.folds.push_back(std::move(fe));
  }
  finalize_result(result);
  return result;
}

EvalResult evaluate_mean_baseline(const market::RangePanel& panel,
                                  const std::vector<FoldSplit>& splits) {
  EvalResult result;
  result.family = zoo::Family::AR;  // closest tag; label is informational
  result.pair_ids = {panel.pair};
  for (const FoldSplit& split : splits) {
    double mean = 0;
    std::size_t n = 0;
    for (int d = split.train.begin; d < split.train.end; ++d)
      for (int t = 0; t < panel.T; ++t)
        if (panel.observed(t, d)) {
          mean += panel.at(t, d);
          ++n;
        }
    if (n == 0) throw std::invalid_argument("no observed training cells");
    mean /= static_cast<double>(n);
    FoldEval fe;
    fe.fold = split.fold;
    for (int d = split.test.begin; d < split.test.end; ++d)
      for (int t = 0; t < panel.T; ++t)
        if (panel.observed(t, d)) {
          PredictionRecord r;
          r.pair = 0;
          r.day = d;
          r.minute = t;
          r.target = panel.at(t, d);
          r.prediction = mean;
          const double e = r.prediction - r.target;
          r.squared_error = e * e;
          fe.records.push_back(r);
        }
    fe.n = fe.records.size();
    fe.mse = mse_of(fe.records);
    result.folds.push_back(std::move(fe));
  }
  finalize_result(result);
  return result;
}

// ---------------------------------------------------------------------------
// Diebold-Mariano
// ---------------------------------------------------------------------------

DmResult dm_test(const std::vector<double>& errorsA,
                 const std::vector<double>& errorsB, bool harvey_correction) {
  if (errorsA.size() != errorsB.size())
    throw std::invalid_argument("error series must have equal length");
  const std::size_t n = errorsA.size();
  if (n < 10) throw std::invalid_argument("need n >= 10 aligned losses");

  DmResult res;
  res.n = n;
  std::vector<double> d(n);
  double mean = 0;
  for (std::size_t t = 0; t < n; ++t) {
    d[t] = errorsA[t] - errorsB[t];
    mean += d[t];
  }
  mean /= static_cast<double>(n);
  res.mean_diff = mean;

  // floor(n^(1/3)) in exact integer arithmetic (cbrt can round across the
  // integer boundary for perfect cubes)
  int bandwidth = static_cast<int>(std::floor(std::cbrt(static_cast<double>(n))));
  while (static_cast<std::size_t>(bandwidth + 1) * (bandwidth + 1) *
             (bandwidth + 1) <=
         n)
    ++bandwidth;
  while (bandwidth > 1 && static_cast<std::size_t>(bandwidth) * bandwidth *
                                  bandwidth >
                              n)
    --bandwidth;
  auto gamma = [&](int k) {
    double acc = 0;
    for (std::size_t t = k; t < n; ++t)
      acc += (d[t] - mean) * (d[t - k] - mean);
    return acc / static_cast<double>(n);
  };
  double lrv = gamma(0);
  for (int k = 1; k <= bandwidth; ++k)
    lrv += 2.0 * (1.0 - static_cast<double>(k) / (bandwidth + 1)) * gamma(k);
  res.long_run_variance = lrv;

  if (!(lrv > 0)) {
    res.indeterminate = true;
    res.statistic = kNaN;
    return res;
  }
  double stat = mean / std::sqrt(lrv / static_cast<double>(n));
  if (harvey_correction)
    stat *= std::sqrt(static_cast<double>(n - 1) / static_cast<double>(n));
  res.statistic = stat;
  res.significant_5pct = std::abs(stat) > 1.96;
  return res;
}

std::vector<DmCell> dm_matrix(
    const std::vector<std::string>& model_names,
    const std::vector<std::vector<PredictionRecord>>& model_records) {
  if (model_names.size() != model_records.size() || model_names.size() < 2)
    throw std::invalid_argument("need >= 2 named models");

  // (day, minute) -> squared error, per model.
  std::vector<std::map<std::pair<int, int>, double>> keyed(model_names.size());
  for (std::size_t m = 0; m < model_records.size(); ++m)
    for (const auto& r : model_records[m])
      keyed[m][{r.day, r.minute}] = r.squared_error;

  std::vector<DmCell> cells;
  for (std::size_t i = 0; i < model_names.size(); ++i) {
    for (std::size_t j = i + 1; j < model_names.size(); ++j) {
      DmCell cell;
      cell.row_model = model_names[i];
      cell.col_model = model_names[j];
      std::vector<double> a, b;
      for (const auto& [key, ea] : keyed[i]) {
        auto it = keyed[j].find(key);
        if (it != keyed[j].end()) {
          a.push_back(ea);
          b.push_back(it->second);
        }
      }
      if (a.size() < 10) {
        cell.result.indeterminate = true;
        cell.result.statistic = kNaN;
        cell.result.n = a.size();
      } else {
        cell.result = dm_test(a, b);
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::string dm_matrix_to_csv(const std::vector<DmCell>& cells) {
  std::string out = "row_model,col_model,statistic,significant,indeterminate,n\n";
  for (const auto& c : cells) {
    out += c.row_model + ',' + c.col_model + ',';
    if (!c.result.indeterminate) out += fmt_double(c.result.statistic);
    out += ',';
    out += c.result.significant_5pct ? "1" : "0";
    out += ',';
    out += c.result.indeterminate ? "1" : "0";
    out += ',' + std::to_string(c.result.n) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sensitivity
// ---------------------------------------------------------------------------

std::vector<SensitivityCurve> sensitivity_sweep(
    const zoo::ModelSpec& base, const std::vector<int>& p_grid,
    const std::vector<market::RangePanel>& panels,
    const std::vector<FoldSplit>& splits, std::uint64_t seed) {
  if (p_grid.empty()) throw std::invalid_argument("empty p grid");

  std::vector<SensitivityCurve> curves(panels.size());
  for (std::size_t i = 0; i < panels.size(); ++i)
    curves[i].pair = panels[i].pair;

  for (int p : p_grid) {
    zoo::ModelSpec spec = base;
    spec.family = zoo::Family::PPairsTwoLSTM;
    spec.n_pairs = static_cast<int>(panels.size());
    spec.p_t = spec.p_d = p;
    const EvalResult res = evaluate_family(
        spec, panels, splits, SplitMix64::derive(seed, 0x5E5ull + p));
    for (std::size_t i = 0; i < panels.size(); ++i) {
      SensitivityPoint pt;
      pt.p = p;
      pt.raw_mse = res.mean_by_pair[i];
      curves[i].points.push_back(pt);
    }
  }

  // Min-max normalize each pair's curve separately.
  for (auto& curve : curves) {
    double lo = curve.points[0].raw_mse, hi = curve.points[0].raw_mse;
    for (const auto& pt : curve.points) {
      lo = std::min(lo, pt.raw_mse);
      hi = std::max(hi, pt.raw_mse);
    }
    const bool degenerate = !(hi > lo);
    for (auto& pt : curve.points) {
      pt.degenerate = degenerate;
      pt.normalized = degenerate ? 0.0 : (pt.raw_mse - lo) / (hi - lo);
    }
  }
  return curves;
}

std::string sensitivity_to_csv(const std::vector<SensitivityCurve>& curves) {
  std::string out = "pair,p,mse,normalized_mse,degenerate\n";
  for (const auto& curve : curves) {
    for (const auto& pt : curve.points) {
      out += curve.pair + ',' + std::to_string(pt.p) + ',' +
             fmt_double(pt.raw_mse) + ',' + fmt_double(pt.normalized) + ',' +
             (pt.degenerate ? "1" : "0") + '\n';
    }
  }
  return out;
}

}  // namespace rangecast::eval
