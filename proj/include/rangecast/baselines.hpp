#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "rangecast/features.hpp"
#include "rangecast/market_data.hpp"

namespace rangecast::baselines {

struct SingularFitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InsufficientHistoryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TuningFailedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConvergenceFailure : std::runtime_error {
  ConvergenceFailure(std::string msg, std::vector<double> last,
                     std::vector<double> trace)
      : std::runtime_error(std::move(msg)),
        last_iterate(std::move(last)),
        likelihood_trace(std::move(trace)) {}
  std::vector<double> last_iterate;      // (omega, alpha, beta)
  std::vector<double> likelihood_trace;  // best mean log-likelihood per iter
};

// ---------------------------------------------------------------------------
// AR(p) by least squares
// ---------------------------------------------------------------------------

struct ArModel {
  int order = 1;
  double intercept = 0;
  std::vector<double> coeffs;  // phi_1 .. phi_p, phi_1 on the most recent lag
};

// Fits y_t = c + sum_i phi_i * y_{t-i} by the normal equations with
// intercept. Each segment is treated as contiguous; windows never span a
// segment boundary (segments come from per-day runs of observed cells).
// Throws SingularFitError when the design matrix is singular.
ArModel fit_ar(const std::vector<std::vector<double>>& segments, int p);
ArModel fit_ar(const std::vector<double>& series, int p);

// `window` is chronological (oldest first, most recent last).
double predict_ar(const ArModel& model, const std::vector<double>& window);

// Extracts the per-day contiguous observed runs of a panel restricted to a
// day range, the shared series form consumed by fit_ar.
std::vector<std::vector<double>> panel_segments(const market::RangePanel& panel,
                                                features::DayRange days);

// Argmin over candidate orders with exact ties resolved toward the smaller
// p; NaN entries (failed fits) are skipped. Throws TuningFailedError when
// nothing is finite.
int pick_best_order(const std::vector<int>& orders,
                    const std::vector<double>& mse);

// Picks the order with the lowest one-step validation MSE, ties toward the
// smaller p. Throws TuningFailedError when every order fails to fit.
struct ArOrderChoice {
  int order = 1;
  std::vector<double> validation_mse;  // aligned with `orders`
  std::vector<int> orders;
};
ArOrderChoice tune_ar_order(const market::RangePanel& panel,
                            const std::vector<int>& orders,
                            features::DayRange train, features::DayRange val);

// ---------------------------------------------------------------------------
// GARCH(1,1) by Gaussian quasi-maximum-likelihood
// ---------------------------------------------------------------------------

enum class RangeScaleMode {
  fitted,    // least-squares scalar regressing log range on sigma (default)
  brownian,  // sqrt(8/pi), the Brownian-motion expected-range constant
};

struct GarchSettings {
  int max_iterations = 500;
  double tolerance = 1e-8;        // absolute spread of mean log-likelihood
  double variance_floor = 1e-12;
  RangeScaleMode scale_mode = RangeScaleMode::fitted;
  // Optional starting point; zeros mean "use the default heuristic".
  double init_omega = 0, init_alpha = 0, init_beta = 0;
};

struct GarchModel {
  double omega = 0, alpha = 0, beta = 0;
  double range_scale = 0;
  double sigma2_0 = 0;                   // filter initialization
  double final_loglik = 0;               // mean log-likelihood at optimum
  std::vector<double> likelihood_trace;  // best value per accepted iteration
};

// Maximizes the Gaussian quasi-log-likelihood over {omega>0, alpha>=0,
// beta>=0, alpha+beta<=0.999} with Nelder-Mead on transformed parameters.
// `ranges` (when nonempty, aligned with `returns` so ranges[t] is the log
// range of the interval whose return is returns[t]) feeds the range_scale
// regression. Throws ConvergenceFailure on non-convergence or degenerate
// input.
GarchModel fit_garch(const std::vector<double>& returns,
                     const std::vector<double>& ranges = {},
                     const GarchSettings& settings = {});

// One-step conditional variance and the mapped log-range prediction.
double garch_next_variance(const GarchModel& m, double last_return,
                           double last_sigma2);
double predict_garch_range(const GarchModel& m, double last_return,
                           double last_sigma2);

// Full variance filter pass (sigma2[0] = m.sigma2_0), used by evaluation.
std::vector<double> garch_filter(const GarchModel& m,
                                 const std::vector<double>& returns);

}  // namespace rangecast::baselines
