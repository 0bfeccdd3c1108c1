#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rangecast/model_zoo.hpp"

namespace rangecast::eval {

struct SplitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Blocked chronological cross-validation
// ---------------------------------------------------------------------------

struct FoldSplit {
  int fold = 0;
  features::DayRange train, val, test;  // contiguous, strictly ordered
};

// Partitions the timeline into k contiguous blocks of floor(D/k) days
// (remainder to the last block); each block splits chronologically into
// floor(0.6n) train, floor(0.3n) validation and the rest test days.
// Throws SplitError when D < 10k.
std::vector<FoldSplit> blocked_splits(int n_days, int k = 3,
                                      double train_ratio = 0.6,
                                      double val_ratio = 0.3);

// ---------------------------------------------------------------------------
// Per-sample evaluation records
// ---------------------------------------------------------------------------

struct PredictionRecord {
  int pair = 0;  // index into the result's pair_ids
  int day = 0;
  int minute = 0;
  double target = 0;      // original log-range scale
  double prediction = 0;  // original log-range scale
  double squared_error = 0;
};

struct FoldEval {
  int fold = 0;
  double mse = 0;  // over every record in the fold, raw units
  std::size_t n = 0;
  std::vector<PredictionRecord> records;
};

// Fitted classical-model parameters, kept for the per-fold JSON artifacts.
struct FittedParams {
  int fold = 0;
  int pair = 0;
  std::string model;  // e.g. "AR(2)" or "GARCH(1,1)"
  std::vector<std::string> names;
  std::vector<double> values;
  std::string optimizer;          // empty for closed-form fits
  double final_loglik = 0;        // mean log-likelihood, GARCH only
  std::size_t trace_length = 0;   // likelihood trace summary
  double trace_first = 0, trace_last = 0;
};

struct EvalResult {
  zoo::Family family = zoo::Family::TwoLSTM;
  std::vector<std::string> pair_ids;
  std::vector<FoldEval> folds;
  std::vector<FittedParams> fitted;              // AR / GARCH only
  std::vector<std::vector<double>> mse_by_pair;  // [pair][fold], NaN if empty
  std::vector<double> mean_by_pair;              // across folds
  std::vector<double> std_by_pair;               // sample std across folds
};

double mse_of(const std::vector<PredictionRecord>& records);
void finalize_result(EvalResult& result);  // fills mse_by_pair and summaries

// "day,minute,target,prediction,squared_error" with ISO dates.
std::string records_to_csv(const std::vector<PredictionRecord>& records,
                           const std::vector<Date>& days);
// Parses the same layout; `day` holds the date as days-since-epoch so that
// records loaded from different files align by calendar date.
std::vector<PredictionRecord> records_from_csv(const std::string& text);

// ---------------------------------------------------------------------------
// Model drivers
// ---------------------------------------------------------------------------

// Trains one neural model for one fold (normalizers fitted on the fold's
// train days) and returns the checkpoint.
zoo::Checkpoint train_fold(const zoo::ModelSpec& spec,
                           const std::vector<market::RangePanel>& panels,
                           const FoldSplit& split, std::uint64_t seed);

// Test predictions of a trained network, denormalized before scoring.
FoldEval predict_test_fold(const neural::NeuralNet& net,
                           const zoo::ModelSpec& spec,
                           const std::vector<market::RangePanel>& panels,
                           const std::vector<features::Normalizer>& norms,
                           const FoldSplit& split);

// Full protocol for one family over all folds. Single-pair families are
// trained once per pair; the pairs model is trained jointly. GARCH needs the
// bar streams and is served by evaluate_garch.
EvalResult evaluate_family(const zoo::ModelSpec& spec,
                           const std::vector<market::RangePanel>& panels,
                           const std::vector<FoldSplit>& splits,
                           std::uint64_t seed);

EvalResult evaluate_garch(const zoo::ModelSpec& spec,
                          const std::vector<market::RangePanel>& panels,
                          const std::vector<std::vector<market::MinuteBar>>& bars,
                          const std::vector<FoldSplit>& splits);

// Train-mean benchmark; doubles as the closed-form oracle in tests.
EvalResult evaluate_mean_baseline(const market::RangePanel& panel,
                                  const std::vector<FoldSplit>& splits);

// ---------------------------------------------------------------------------
// Diebold-Mariano
// ---------------------------------------------------------------------------

struct DmResult {
  double statistic = 0;
  double mean_diff = 0;          // mean of eA - eB
  double long_run_variance = 0;  // Newey-West, Bartlett kernel
  std::size_t n = 0;
  bool significant_5pct = false;  // two-sided, |stat| > 1.96
  bool indeterminate = false;     // zero long-run variance
};

// Loss differential d_t = errorsA[t] - errorsB[t]; statistic
// mean(d) / sqrt(LRV/n) with bandwidth floor(n^(1/3)). Positive values mean
// the B series (column model) outperforms A. The optional Harvey correction
// multiplies by sqrt((n-1)/n) for the one-step horizon.
DmResult dm_test(const std::vector<double>& errorsA,
                 const std::vector<double>& errorsB,
                 bool harvey_correction = false);

struct DmCell {
  std::string row_model, col_model;
  DmResult result;
};

// Upper-triangular pairwise matrix for one currency pair; the two error
// series of each cell are first aligned on their common (day, minute)
// timestamps. Cells with fewer than 10 common points are indeterminate.
std::vector<DmCell> dm_matrix(
    const std::vector<std::string>& model_names,
    const std::vector<std::vector<PredictionRecord>>& model_records);

std::string dm_matrix_to_csv(const std::vector<DmCell>& cells);

// ---------------------------------------------------------------------------
// Sensitivity sweep
// ---------------------------------------------------------------------------

struct SensitivityPoint {
  int p = 0;
  double raw_mse = 0;     // mean test MSE across folds
  double normalized = 0;  // min-max within the pair's curve; 0 + flag if flat
  bool degenerate = false;
};

struct SensitivityCurve {
  std::string pair;
  std::vector<SensitivityPoint> points;
};

std::vector<SensitivityCurve> sensitivity_sweep(
    const zoo::ModelSpec& base, const std::vector<int>& p_grid,
    const std::vector<market::RangePanel>& panels,
    const std::vector<FoldSplit>& splits, std::uint64_t seed);

std::string sensitivity_to_csv(const std::vector<SensitivityCurve>& curves);

}  // namespace rangecast::eval
