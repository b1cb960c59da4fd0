#include "adherence/stats.hpp"

#include <algorithm>
#include <cmath>

namespace adherence::stats {

namespace {

constexpr double kSeparationThreshold = 30.0;
constexpr double kZ975 = 1.959963984540054;  // Phi^-1(0.975)

double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

double beta_cf(double a, double b, double x) {
  // continued fraction for the incomplete beta (Numerical-Recipes form)
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

struct Standardization {
  Eigen::VectorXd center;
  Eigen::VectorXd scale;
};

Standardization column_standardization(const Eigen::MatrixXd& X) {
  const Eigen::Index p = X.cols();
  Standardization s{Eigen::VectorXd::Zero(p), Eigen::VectorXd::Ones(p)};
  for (Eigen::Index j = 1; j < p; ++j) {  // leave the intercept column alone
    const double mean = X.col(j).mean();
    const double var = (X.col(j).array() - mean).square().sum() / static_cast<double>(X.rows());
    const double sd = std::sqrt(var);
    if (sd > 0.0) {
      s.center(j) = mean;
      s.scale(j) = sd;
    }
  }
  return s;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double front = std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - std::exp(b * std::log1p(-x) + a * std::log(x) - log_beta(b, a)) * beta_cf(b, a, 1.0 - x) / b;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_two_sided_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

double t_two_sided_p(double t, double dof) {
  if (dof <= 0.0) throw InvalidInputError("t_two_sided_p: dof must be positive");
  if (!std::isfinite(t)) return 0.0;
  const double x = dof / (dof + t * t);
  return incomplete_beta(0.5 * dof, 0.5, x);
}

double t_quantile_975(double dof) {
  // bisection on the two-sided tail; tails are monotone in |t|
  double lo = 0.0, hi = 1e3;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (t_two_sided_p(mid, dof) > 0.05)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

FittedLogistic fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tol, int max_iter) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (n != y.size()) throw InvalidInputError("fit_logistic: X and y sizes differ");
  if (n <= p) throw InvalidInputError("fit_logistic: need more rows than columns");
  for (Eigen::Index i = 0; i < n; ++i)
    if (y(i) != 0.0 && y(i) != 1.0) throw InvalidInputError("fit_logistic: y must be binary");
  for (Eigen::Index j = 0; j < p; ++j)
    if (X.col(j).cwiseAbs().maxCoeff() == 0.0) throw RankError("fit_logistic: constant-zero column");

  const Standardization st = column_standardization(X);
  Eigen::MatrixXd Z = X;
  for (Eigen::Index j = 1; j < p; ++j) Z.col(j) = (X.col(j).array() - st.center(j)) / st.scale(j);

  auto unstandardize = [&](const Eigen::VectorXd& beta_z) {
    Eigen::VectorXd beta = beta_z;
    for (Eigen::Index j = 1; j < p; ++j) beta(j) = beta_z(j) / st.scale(j);
    double intercept = beta_z(0);
    for (Eigen::Index j = 1; j < p; ++j) intercept -= beta_z(j) * st.center(j) / st.scale(j);
    beta(0) = intercept;
    return beta;
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  FittedLogistic fit;
  Eigen::VectorXd prob(n), w(n);

  for (int iter = 1; iter <= max_iter; ++iter) {
    const Eigen::VectorXd eta = Z * beta;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double pi = 1.0 / (1.0 + std::exp(-eta(i)));
      prob(i) = pi;
      w(i) = pi * (1.0 - pi);
    }
    const Eigen::VectorXd grad = Z.transpose() * (y - prob);
    Eigen::MatrixXd info = Z.transpose() * w.asDiagonal() * Z;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array().abs() < 1e-12).any())
      throw RankError("fit_logistic: singular information matrix");

    const Eigen::VectorXd step = ldlt.solve(grad);
    beta += step;
    fit.n_iterations = iter;

    if (beta.cwiseAbs().maxCoeff() > kSeparationThreshold)
      throw SeparationError("fit_logistic: coefficients diverged (separation)", unstandardize(beta));

    if (grad.cwiseAbs().maxCoeff() < tol) {
      fit.converged = true;
      break;
    }
  }

  // final quantities at the solution
  const Eigen::VectorXd eta = Z * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pi = 1.0 / (1.0 + std::exp(-eta(i)));
    prob(i) = pi;
    w(i) = pi * (1.0 - pi);
    ll += y(i) * std::log(std::max(pi, 1e-300)) + (1.0 - y(i)) * std::log(std::max(1.0 - pi, 1e-300));
  }
  Eigen::MatrixXd info = Z.transpose() * w.asDiagonal() * Z;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success) throw RankError("fit_logistic: singular information at solution");
  Eigen::MatrixXd cov_z = ldlt.solve(Eigen::MatrixXd::Identity(p, p));

  // back-transform: beta = A beta_z with A encoding the affine rescaling
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(p, p);
  for (Eigen::Index j = 1; j < p; ++j) {
    A(j, j) = 1.0 / st.scale(j);
    A(0, j) = -st.center(j) / st.scale(j);
  }
  fit.coefficients = unstandardize(beta);
  fit.covariance = A * cov_z * A.transpose();
  fit.log_likelihood = ll;
  return fit;
}

Eigen::VectorXd predict_logistic(const FittedLogistic& fit, const Eigen::MatrixXd& X) {
  const Eigen::VectorXd eta = X * fit.coefficients;
  Eigen::VectorXd out(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) out(i) = 1.0 / (1.0 + std::exp(-eta(i)));
  return out;
}

InferenceRow odds_ratio_2x2(const Counts2x2& exposed, const Counts2x2& reference, const std::string& name) {
  const double a = exposed.events, b = exposed.non_events;
  const double c = reference.events, d = reference.non_events;
  if (a < 1 || b < 1 || c < 1 || d < 1)
    throw InvalidInputError("odds_ratio_2x2: all cells must be at least one");
  const double log_or = std::log((a / b) / (c / d));
  const double se = std::sqrt(1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d);
  InferenceRow row;
  row.name = name;
  row.odds_ratio = std::exp(log_or);
  row.ci_low = std::exp(log_or - kZ975 * se);
  row.ci_high = std::exp(log_or + kZ975 * se);
  row.p_value = normal_two_sided_p(log_or / se);
  return row;
}

InferenceRow wald_inference(const FittedLogistic& fit, Eigen::Index index, const std::string& name, double scale) {
  if (!fit.converged) throw NumericError("wald_inference: fit did not converge");
  if (index < 0 || index >= fit.coefficients.size()) throw InvalidInputError("wald_inference: index out of range");
  const double beta = fit.coefficients(index) * scale;
  const double se = fit.standard_error(index) * scale;
  if (!(se > 0.0)) throw NumericError("wald_inference: nonpositive standard error");
  InferenceRow row;
  row.name = name;
  row.odds_ratio = std::exp(beta);
  row.ci_low = std::exp(beta - kZ975 * se);
  row.ci_high = std::exp(beta + kZ975 * se);
  row.p_value = normal_two_sided_p(beta / se);
  return row;
}

TTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  const size_t na = a.size(), nb = b.size();
  if (na < 2 || nb < 2) throw InvalidInputError("welch_t_test: each group needs at least two values");
  auto moments = [](std::span<const double> v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size() - 1);
    return std::pair<double, double>(mean, var);
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  if (va == 0.0 && vb == 0.0) throw InvalidInputError("welch_t_test: both groups have zero variance");

  const double sa = va / static_cast<double>(na);
  const double sb = vb / static_cast<double>(nb);
  const double se = std::sqrt(sa + sb);
  const double dof = (sa + sb) * (sa + sb) /
                     (sa * sa / static_cast<double>(na - 1) + sb * sb / static_cast<double>(nb - 1));
  TTestResult r;
  r.mean_difference = ma - mb;
  r.t_statistic = r.mean_difference / se;
  r.dof = dof;
  r.p_value = (r.mean_difference == 0.0) ? 1.0 : t_two_sided_p(r.t_statistic, dof);
  const double tc = t_quantile_975(dof);
  r.ci_low = r.mean_difference - tc * se;
  r.ci_high = r.mean_difference + tc * se;
  return r;
}

}  // namespace adherence::stats
