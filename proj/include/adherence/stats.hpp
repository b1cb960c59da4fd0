#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>

#include "adherence/common.hpp"

namespace adherence::stats {

/// Fit failed because the likelihood is unbounded (coefficients diverge).
class SeparationError : public NumericError {
 public:
  SeparationError(const std::string& what, Eigen::VectorXd last_iterate)
      : NumericError(what), last_iterate(std::move(last_iterate)) {}
  /// Coefficients at the aborted iteration, for callers that can
  /// still use the saturated probabilities (e.g. propensity clipping).
  Eigen::VectorXd last_iterate;
};

/// Information matrix is singular (collinear or constant columns).
class RankError : public NumericError {
 public:
  explicit RankError(const std::string& what) : NumericError(what) {}
};

struct FittedLogistic {
  Eigen::VectorXd coefficients;  // intercept first
  Eigen::MatrixXd covariance;    // inverse observed information
  int n_iterations = 0;
  bool converged = false;
  double log_likelihood = 0.0;

  double standard_error(Eigen::Index i) const { return std::sqrt(covariance(i, i)); }
};

/// Maximum-likelihood logistic regression via iteratively reweighted
/// least squares. X must carry an explicit intercept column (first).
/// Non-intercept columns are standardized internally for conditioning;
/// coefficients and covariance are returned on the original scale.
FittedLogistic fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            double tol = 1e-8, int max_iter = 100);

/// Linear predictor probabilities for a fitted model.
Eigen::VectorXd predict_logistic(const FittedLogistic& fit, const Eigen::MatrixXd& X);

struct InferenceRow {
  std::string name;
  double odds_ratio = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
};

struct Counts2x2 {
  double events = 0;
  double non_events = 0;
};

/// Odds ratio with Woolf confidence interval and two-sided Wald p-value.
/// All four cells must be at least one.
InferenceRow odds_ratio_2x2(const Counts2x2& exposed, const Counts2x2& reference,
                            const std::string& name = "");

/// Wald inference for one coefficient of a converged fit, optionally
/// rescaled (e.g. scale=10 reports a per-decade odds ratio for age in years).
InferenceRow wald_inference(const FittedLogistic& fit, Eigen::Index index,
                            const std::string& name = "", double scale = 1.0);

struct TTestResult {
  double mean_difference = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double t_statistic = 0.0;
  double dof = 0.0;
  double p_value = 1.0;
};

/// Unequal-variance t-test with Welch-Satterthwaite degrees of freedom.
TTestResult welch_t_test(std::span<const double> a, std::span<const double> b);

// -- distribution tails -------------------------------------------------

/// Standard normal CDF.
double normal_cdf(double z);

/// Two-sided normal p-value for a z statistic.
double normal_two_sided_p(double z);

/// Two-sided Student-t p-value with (possibly fractional) dof.
double t_two_sided_p(double t, double dof);

/// Upper quantile t_{1-alpha/2, dof}, used for confidence intervals.
double t_quantile_975(double dof);

/// Regularized incomplete beta I_x(a, b) (Lentz continued fraction).
double incomplete_beta(double a, double b, double x);

}  // namespace adherence::stats
