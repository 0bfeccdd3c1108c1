#include "rangecast/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace rangecast::baselines {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Gaussian elimination with partial pivoting on a dense symmetric system.
// Throws SingularFitError when a pivot collapses relative to the matrix
// scale.
std::vector<double> solve_linear(std::vector<std::vector<double>> a,
                                 std::vector<double> b) {
  const int n = static_cast<int>(b.size());
  double scale = 0;
  for (const auto& row : a)
    for (double v : row) scale = std::max(scale, std::abs(v));
  if (scale == 0) throw SingularFitError("zero normal matrix");
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < 1e-12 * scale)
      throw SingularFitError("singular design matrix (constant series?)");
    std::swap(a[pivot], a[col]);
    std::swap(b[pivot], b[col]);
    for (int r = col + 1; r < n; ++r) {
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int c = r + 1; c < n; ++c) s -= a[r][c] * x[c];
    x[r] = s / a[r][r];
  }
  return x;
}

}  // namespace

ArModel fit_ar(const std::vector<std::vector<double>>& segments, int p) {
  if (p < 1) throw std::invalid_argument("order must be >= 1");
  // Normal equations for the design [1, y_{t-1}, ..., y_{t-p}], accumulated
  // streaming so segments of any length contribute without concatenation.
  const int m = p + 1;
  std::vector<std::vector<double>> xtx(m, std::vector<double>(m, 0.0));
  std::vector<double> xty(m, 0.0);
  std::size_t rows = 0;
  std::vector<double> x(m, 0.0);
  for (const auto& seg : segments) {
    const int n = static_cast<int>(seg.size());
    for (int t = p; t < n; ++t) {
      x[0] = 1.0;
      for (int i = 1; i <= p; ++i) x[i] = seg[t - i];
      const double y = seg[t];
      for (int r = 0; r < m; ++r) {
        for (int c = r; c < m; ++c) xtx[r][c] += x[r] * x[c];
        xty[r] += x[r] * y;
      }
      ++rows;
    }
  }
  if (rows < static_cast<std::size_t>(p) + 10)
    throw std::invalid_argument("series too short for order " +
                                std::to_string(p));
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < r; ++c) xtx[r][c] = xtx[c][r];

  const std::vector<double> beta = solve_linear(std::move(xtx), std::move(xty));
  ArModel model;
  model.order = p;
  model.intercept = beta[0];
  model.coeffs.assign(beta.begin() + 1, beta.end());
  for (double c : model.coeffs)
    if (!std::isfinite(c)) throw SingularFitError("non-finite coefficient");
  return model;
}

ArModel fit_ar(const std::vector<double>& series, int p) {
  return fit_ar(std::vector<std::vector<double>>{series}, p);
}

double predict_ar(const ArModel& model, const std::vector<double>& window) {
  const int p = model.order;
  if (static_cast<int>(window.size()) < p)
    throw InsufficientHistoryError("window shorter than order " +
                                   std::to_string(p));
  double y = model.intercept;
  // coeffs[i-1] multiplies y_{t-i}; the window is chronological.
  const std::size_t last = window.size();
  for (int i = 1; i <= p; ++i) y += model.coeffs[i - 1] * window[last - i];
  return y;
}

std::vector<std::vector<double>> panel_segments(const market::RangePanel& panel,
                                                features::DayRange days) {
  std::vector<std::vector<double>> segments;
  for (int d = days.begin; d < days.end; ++d) {
    int t = 0;
    while (t < panel.T) {
      if (!panel.observed(t, d)) {
        ++t;
        continue;
      }
      std::vector<double> run;
      while (t < panel.T && panel.observed(t, d)) run.push_back(panel.at(t++, d));
      segments.push_back(std::move(run));
    }
  }
  return segments;
}

int pick_best_order(const std::vector<int>& orders,
                    const std::vector<double>& mse) {
  // Scan in ascending order so exact ties resolve toward the smaller p.
  std::vector<std::size_t> idx(orders.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return orders[a] < orders[b]; });
  int best = -1;
  double best_mse = kNaN;
  for (std::size_t i : idx) {
    if (std::isnan(mse[i])) continue;
    if (best < 0 || mse[i] < best_mse) {
      best = orders[i];
      best_mse = mse[i];
    }
  }
  if (best < 0) throw TuningFailedError("every candidate order failed");
  return best;
}

ArOrderChoice tune_ar_order(const market::RangePanel& panel,
                            const std::vector<int>& orders,
                            features::DayRange train, features::DayRange val) {
  if (orders.empty()) throw std::invalid_argument("empty order grid");
  const auto train_segments = panel_segments(panel, train);
  const auto val_segments = panel_segments(panel, val);
  const int max_order = *std::max_element(orders.begin(), orders.end());

  // One-step squared losses per order on a common validation grid
  // (t >= max_order in every segment), so the per-point losses pair up
  // across orders.
  std::vector<std::vector<double>> losses(orders.size());
  ArOrderChoice choice;
  choice.orders = orders;
  choice.validation_mse.assign(orders.size(), kNaN);
  for (std::size_t i = 0; i < orders.size(); ++i) {
    const int p = orders[i];
    ArModel model;
    try {
      model = fit_ar(train_segments, p);
    } catch (const SingularFitError&) {
      continue;
    } catch (const std::invalid_argument&) {
      continue;
    }
    std::vector<double> window(p);
    for (const auto& seg : val_segments) {
      for (std::size_t t = max_order; t < seg.size(); ++t) {
        std::copy(seg.begin() + (t - p), seg.begin() + t, window.begin());
        const double err = predict_ar(model, window) - seg[t];
        losses[i].push_back(err * err);
      }
    }
    if (!losses[i].empty()) {
      double sse = 0;
      for (double l : losses[i]) sse += l;
      choice.validation_mse[i] = sse / static_cast<double>(losses[i].size());
    }
  }

  // Smallest order statistically tied with the minimum: orders whose mean
  // loss sits within one standard error of the paired loss differential are
  // ties, resolved toward the smaller p. A raw argmin is unstable here
  // because extra lags with near-zero fitted coefficients win or lose the
  // validation comparison by a coin flip.
  const int arg_min = pick_best_order(orders, choice.validation_mse);
  std::size_t min_idx = 0;
  for (std::size_t i = 0; i < orders.size(); ++i)
    if (orders[i] == arg_min &&
        !std::isnan(choice.validation_mse[i]))
      min_idx = i;
  std::vector<std::size_t> idx(orders.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return orders[a] < orders[b]; });
  choice.order = arg_min;
  for (std::size_t i : idx) {
    if (std::isnan(choice.validation_mse[i])) continue;
    const auto& li = losses[i];
    const auto& lm = losses[min_idx];
    const std::size_t n = li.size();
    double mean_d = 0;
    for (std::size_t t = 0; t < n; ++t) mean_d += li[t] - lm[t];
    mean_d /= static_cast<double>(n);
    double var_d = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const double dev = (li[t] - lm[t]) - mean_d;
      var_d += dev * dev;
    }
    var_d /= static_cast<double>(n);
    const double se = std::sqrt(var_d / static_cast<double>(n));
    if (mean_d <= se) {
      choice.order = orders[i];
      break;
    }
  }
  return choice;
}

// ---------------------------------------------------------------------------
// GARCH(1,1)
// ---------------------------------------------------------------------------

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double u) {
  const double c = std::clamp(u, 1e-12, 1.0 - 1e-12);
  return std::log(c / (1.0 - c));
}

constexpr double kPersistenceCap = 0.999;

struct GarchParams {
  double omega, alpha, beta;
};

// Unconstrained coordinates: (ln omega, logit of total persistence scaled by
// the cap, logit of alpha's share of the persistence).
GarchParams decode(const std::vector<double>& theta) {
  const double omega = std::exp(theta[0]);
  const double u = sigmoid(theta[1]) * kPersistenceCap;
  const double v = sigmoid(theta[2]);
  return {omega, u * v, u * (1.0 - v)};
}

std::vector<double> encode(double omega, double alpha, double beta) {
  const double u = std::min((alpha + beta) / kPersistenceCap, 1.0 - 1e-9);
  const double v = alpha + beta > 0 ? alpha / (alpha + beta) : 0.5;
  return {std::log(omega), logit(u), logit(v)};
}

// Negative mean Gaussian quasi-log-likelihood
//   f = (1/2(n-1)) * sum_{t>=1} [ln sigma2_t + r_t^2 / sigma2_t].
double neg_mean_loglik(const GarchParams& g, const std::vector<double>& r,
                       double sigma2_0, double floor) {
  const std::size_t n = r.size();
  double sigma2 = sigma2_0;
  double acc = 0;
  for (std::size_t t = 1; t < n; ++t) {
    sigma2 = g.omega + g.alpha * r[t - 1] * r[t - 1] + g.beta * sigma2;
    sigma2 = std::max(sigma2, floor);
    acc += std::log(sigma2) + r[t] * r[t] / sigma2;
  }
  return 0.5 * acc / static_cast<double>(n - 1);
}

}  // namespace

GarchModel fit_garch(const std::vector<double>& returns,
                     const std::vector<double>& ranges,
                     const GarchSettings& settings) {
  const std::size_t n = returns.size();
  if (n < 1000)
    throw std::invalid_argument("need >= 1000 return observations, got " +
                                std::to_string(n));
  double mean = 0;
  for (double r : returns) mean += r;
  mean /= static_cast<double>(n);
  double var = 0;
  for (double r : returns) var += (r - mean) * (r - mean);
  var /= static_cast<double>(n);
  if (!(var > 1e-18))
    throw ConvergenceFailure("degenerate returns: sample variance is zero", {},
                             {});

  const double sigma2_0 = var;
  auto objective = [&](const std::vector<double>& theta) {
    return neg_mean_loglik(decode(theta), returns, sigma2_0,
                           settings.variance_floor);
  };

  double a0 = settings.init_alpha, b0 = settings.init_beta,
         w0 = settings.init_omega;
  if (w0 <= 0) {
    a0 = 0.05;
    b0 = 0.90;
    w0 = var * (1.0 - a0 - b0);
  }

  // Nelder-Mead (reflection 1, expansion 2, contraction 0.5, shrink 0.5).
  const int dim = 3;
  std::vector<std::vector<double>> simplex;
  simplex.push_back(encode(w0, a0, b0));
  for (int i = 0; i < dim; ++i) {
    auto v = simplex[0];
    v[i] += 0.5;
    simplex.push_back(std::move(v));
  }
  std::vector<double> fv(dim + 1);
  for (int i = 0; i <= dim; ++i) fv[i] = objective(simplex[i]);

  std::vector<double> trace;
  bool converged = false;
  for (int iter = 0; iter < settings.max_iterations; ++iter) {
    std::vector<int> ord(dim + 1);
    std::iota(ord.begin(), ord.end(), 0);
    std::sort(ord.begin(), ord.end(),
              [&](int a, int b) { return fv[a] < fv[b]; });
    const int best = ord[0], worst = ord[dim], second = ord[dim - 1];

    trace.push_back(-fv[best]);
    if (fv[worst] - fv[best] < settings.tolerance) {
      converged = true;
      break;
    }

    std::vector<double> centroid(dim, 0.0);
    for (int i = 0; i <= dim; ++i) {
      if (i == worst) continue;
      for (int d = 0; d < dim; ++d) centroid[d] += simplex[i][d];
    }
    for (double& c : centroid) c /= dim;

    auto blend = [&](double coef) {
      std::vector<double> p(dim);
      for (int d = 0; d < dim; ++d)
        p[d] = centroid[d] + coef * (simplex[worst][d] - centroid[d]);
      return p;
    };

    const auto reflected = blend(-1.0);
    const double fr = objective(reflected);
    if (fr < fv[best]) {
      const auto expanded = blend(-2.0);
      const double fe = objective(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        fv[worst] = fe;
      } else {
        simplex[worst] = reflected;
        fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      simplex[worst] = reflected;
      fv[worst] = fr;
    } else {
      const bool outside = fr < fv[worst];
      const auto contracted = blend(outside ? -0.5 : 0.5);
      const double fc = objective(contracted);
      if (fc < std::min(fr, fv[worst])) {
        simplex[worst] = contracted;
        fv[worst] = fc;
      } else {
        for (int i = 0; i <= dim; ++i) {
          if (i == best) continue;
          for (int d = 0; d < dim; ++d)
            simplex[i][d] = simplex[best][d] +
                            0.5 * (simplex[i][d] - simplex[best][d]);
          fv[i] = objective(simplex[i]);
        }
      }
    }
  }

  int best = 0;
  for (int i = 1; i <= dim; ++i)
    if (fv[i] < fv[best]) best = i;
  const GarchParams g = decode(simplex[best]);
  if (!converged)
    throw ConvergenceFailure(
        "Nelder-Mead did not converge within " +
            std::to_string(settings.max_iterations) + " iterations",
        {g.omega, g.alpha, g.beta}, trace);

  GarchModel model;
  model.omega = g.omega;
  model.alpha = g.alpha;
  model.beta = g.beta;
  model.sigma2_0 = sigma2_0;
  model.final_loglik = -fv[best];
  model.likelihood_trace = std::move(trace);

  if (settings.scale_mode == RangeScaleMode::brownian || ranges.empty()) {
    model.range_scale = std::sqrt(8.0 / M_PI);
  } else {
    if (ranges.size() != returns.size())
      throw std::invalid_argument("ranges must align with returns");
    // No-intercept least squares of observed log range on the one-step
    // conditional sigma. NaN range entries (unobserved minutes) are skipped.
    double num = 0, den = 0;
    double sigma2 = sigma2_0;
    for (std::size_t t = 1; t < n; ++t) {
      sigma2 = g.omega + g.alpha * returns[t - 1] * returns[t - 1] +
               g.beta * sigma2;
      sigma2 = std::max(sigma2, settings.variance_floor);
      if (!std::isfinite(ranges[t])) continue;
      const double s = std::sqrt(sigma2);
      num += ranges[t] * s;
      den += s * s;
    }
    model.range_scale = den > 0 ? num / den : std::sqrt(8.0 / M_PI);
  }
  return model;
}

double garch_next_variance(const GarchModel& m, double last_return,
                           double last_sigma2) {
  return m.omega + m.alpha * last_return * last_return + m.beta * last_sigma2;
}

double predict_garch_range(const GarchModel& m, double last_return,
                           double last_sigma2) {
  return m.range_scale * std::sqrt(garch_next_variance(m, last_return,
                                                       last_sigma2));
}

std::vector<double> garch_filter(const GarchModel& m,
                                 const std::vector<double>& returns) {
  std::vector<double> sigma2(returns.size());
  if (returns.empty()) return sigma2;
  sigma2[0] = m.sigma2_0;
  for (std::size_t t = 1; t < returns.size(); ++t)
    sigma2[t] = std::max(
        garch_next_variance(m, returns[t - 1], sigma2[t - 1]), 1e-12);
  return sigma2;
}

}  // namespace rangecast::baselines
