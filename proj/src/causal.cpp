#include "adherence/causal.hpp"

#include <algorithm>
#include <cmath>

#include "adherence/common.hpp"
#include "adherence/rng.hpp"

namespace adherence::causal {

void CausalDataset::validate() const {
  if (X.rows() != t.size() || X.rows() != y.size())
    throw InvalidInputError("causal dataset: misaligned sizes");
  Eigen::Index treated = 0;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    if (t(i) != 0.0 && t(i) != 1.0) throw InvalidInputError("causal dataset: treatment must be binary");
    if (t(i) == 1.0) ++treated;
  }
  if (treated == 0 || treated == t.size())
    throw InvalidInputError("causal dataset: both treatment arms must be nonempty");
}

void LinearRegressor::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Eigen::MatrixXd Xi(X.rows(), X.cols() + 1);
  Xi.col(0).setOnes();
  Xi.rightCols(X.cols()) = X;
  beta_ = Xi.colPivHouseholderQr().solve(y);
}

Eigen::VectorXd LinearRegressor::predict(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd Xi(X.rows(), X.cols() + 1);
  Xi.col(0).setOnes();
  Xi.rightCols(X.cols()) = X;
  return Xi * beta_;
}

void ForestRegressor::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  model_ = std::make_unique<learners::ForestModel>(
      learners::ForestModel::fit(X, y, learners::ForestModel::Task::kRegression, config_));
}

Eigen::VectorXd ForestRegressor::predict(const Eigen::MatrixXd& X) const {
  if (!model_) throw NumericError("forest regressor: not fitted");
  return model_->predict(X);
}

std::unique_ptr<Regressor> make_base_learner(BaseLearnerKind kind, uint64_t seed) {
  if (kind == BaseLearnerKind::kLinear) return std::make_unique<LinearRegressor>();
  learners::ForestConfig config;
  config.seed = seed;
  return std::make_unique<ForestRegressor>(config);
}

Eigen::VectorXd fit_propensity(const Eigen::MatrixXd& X, const Eigen::VectorXd& t) {
  Eigen::MatrixXd Xi(X.rows(), X.cols() + 1);
  Xi.col(0).setOnes();
  Xi.rightCols(X.cols()) = X;
  Eigen::VectorXd coef;
  try {
    coef = stats::fit_logistic(Xi, t).coefficients;
  } catch (const stats::SeparationError& e) {
    coef = e.last_iterate;  // saturated probabilities; clipping bounds them
  }
  Eigen::VectorXd eta = Xi * coef;
  Eigen::VectorXd scores(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-eta(i)));
    scores(i) = std::clamp(p, 0.01, 0.99);
  }
  return scores;
}

double ipw_ate(const CausalDataset& data) { return ipw_ate(data, fit_propensity(data.X, data.t)); }

double ipw_ate(const CausalDataset& data, const Eigen::VectorXd& propensity) {
  data.validate();
  if (propensity.size() != data.t.size()) throw InvalidInputError("ipw_ate: propensity size mismatch");
  double w1_sum = 0.0, w1y_sum = 0.0, w0_sum = 0.0, w0y_sum = 0.0;
  for (Eigen::Index i = 0; i < data.t.size(); ++i) {
    const double e = propensity(i);
    if (data.t(i) == 1.0) {
      const double w = 1.0 / e;
      w1_sum += w;
      w1y_sum += w * data.y(i);
    } else {
      const double w = 1.0 / (1.0 - e);
      w0_sum += w;
      w0y_sum += w * data.y(i);
    }
  }
  return w1y_sum / w1_sum - w0y_sum / w0_sum;
}

namespace {

struct ArmSplit {
  Eigen::MatrixXd X1, X0;
  Eigen::VectorXd y1, y0;
};

ArmSplit split_arms(const CausalDataset& data) {
  const Eigen::Index n = data.t.size();
  Eigen::Index n1 = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (data.t(i) == 1.0) ++n1;
  ArmSplit split;
  split.X1.resize(n1, data.X.cols());
  split.X0.resize(n - n1, data.X.cols());
  split.y1.resize(n1);
  split.y0.resize(n - n1);
  Eigen::Index i1 = 0, i0 = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (data.t(i) == 1.0) {
      split.X1.row(i1) = data.X.row(i);
      split.y1(i1++) = data.y(i);
    } else {
      split.X0.row(i0) = data.X.row(i);
      split.y0(i0++) = data.y(i);
    }
  }
  return split;
}

}  // namespace

double s_learner(const CausalDataset& data, BaseLearnerKind base, uint64_t seed) {
  data.validate();
  Eigen::MatrixXd Xt(data.X.rows(), data.X.cols() + 1);
  Xt.leftCols(data.X.cols()) = data.X;
  Xt.col(data.X.cols()) = data.t;
  auto model = make_base_learner(base, Rng::mix(seed, 1));
  model->fit(Xt, data.y);
  Eigen::MatrixXd X1 = Xt, X0 = Xt;
  X1.col(data.X.cols()).setOnes();
  X0.col(data.X.cols()).setZero();
  return (model->predict(X1) - model->predict(X0)).mean();
}

double t_learner(const CausalDataset& data, BaseLearnerKind base, uint64_t seed) {
  data.validate();
  const ArmSplit arms = split_arms(data);
  auto mu1 = make_base_learner(base, Rng::mix(seed, 2));
  auto mu0 = make_base_learner(base, Rng::mix(seed, 3));
  mu1->fit(arms.X1, arms.y1);
  mu0->fit(arms.X0, arms.y0);
  return (mu1->predict(data.X) - mu0->predict(data.X)).mean();
}

double x_learner(const CausalDataset& data, BaseLearnerKind base, uint64_t seed) {
  data.validate();
  const ArmSplit arms = split_arms(data);
  auto mu1 = make_base_learner(base, Rng::mix(seed, 4));
  auto mu0 = make_base_learner(base, Rng::mix(seed, 5));
  mu1->fit(arms.X1, arms.y1);
  mu0->fit(arms.X0, arms.y0);

  // imputed individual effects, regressed back on covariates per arm
  const Eigen::VectorXd d1 = arms.y1 - mu0->predict(arms.X1);
  const Eigen::VectorXd d0 = mu1->predict(arms.X0) - arms.y0;
  auto tau1 = make_base_learner(base, Rng::mix(seed, 6));
  auto tau0 = make_base_learner(base, Rng::mix(seed, 7));
  tau1->fit(arms.X1, d1);
  tau0->fit(arms.X0, d0);

  const Eigen::VectorXd e = fit_propensity(data.X, data.t);
  const Eigen::VectorXd t1 = tau1->predict(data.X);
  const Eigen::VectorXd t0 = tau0->predict(data.X);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < data.X.rows(); ++i)
    acc += e(i) * t0(i) + (1.0 - e(i)) * t1(i);
  return acc / static_cast<double>(data.X.rows());
}

const char* to_string(Estimator e) {
  switch (e) {
    case Estimator::kIpw: return "ipw";
    case Estimator::kSLearner: return "s_learner";
    case Estimator::kTLearner: return "t_learner";
    case Estimator::kXLearner: return "x_learner";
  }
  return "?";
}

double AteReport::value(const std::string& estimator, const std::string& outcome,
                        const std::string& dataset) const {
  for (const auto& c : cells)
    if (c.estimator == estimator && c.outcome == outcome && c.dataset == dataset) return c.ate;
  throw InvalidInputError("ate report: missing cell " + estimator + "/" + outcome + "/" + dataset);
}

CausalDataset build_causal_dataset(const std::vector<cohort::CohortRecord>& records,
                                   const std::string& outcome) {
  if (records.empty()) throw InvalidInputError("build_causal_dataset: no records");
  const auto fm = learners::encode(records);

  // the medication indicator column becomes the treatment
  Eigen::Index t_col = -1;
  for (size_t j = 0; j < fm.column_names.size(); ++j)
    if (fm.column_names[j] == "medication=amlodipine") t_col = static_cast<Eigen::Index>(j);
  if (t_col < 0) throw InvalidInputError("build_causal_dataset: no amlodipine arm found");

  CausalDataset data;
  data.X.resize(fm.X.rows(), fm.X.cols() - 1);
  Eigen::Index out_col = 0;
  for (Eigen::Index j = 0; j < fm.X.cols(); ++j) {
    if (j == t_col) continue;
    data.X.col(out_col++) = fm.X.col(j);
  }
  data.t = fm.X.col(t_col);
  data.y.resize(fm.X.rows());
  for (Eigen::Index i = 0; i < fm.X.rows(); ++i) {
    const auto& r = records[static_cast<size_t>(i)];
    const auto& v = outcome == "systolic" ? r.systolic_reduction : r.diastolic_reduction;
    if (!v) throw InvalidInputError("build_causal_dataset: record lacks " + outcome + " reduction");
    data.y(i) = *v;
  }
  data.validate();
  return data;
}

AteReport ate_comparison(const std::vector<cohort::CohortRecord>& records,
                         const std::vector<Estimator>& estimators, BaseLearnerKind base,
                         uint64_t seed) {
  if (records.empty()) throw InvalidInputError("ate_comparison: no records");
  std::vector<cohort::CohortRecord> adherent;
  for (const auto& r : records) {
    if (!r.adherence) throw InvalidInputError("ate_comparison: unlabeled record");
    if (!r.adherence->non_adherent) adherent.push_back(r);
  }
  if (adherent.size() < 50)
    throw InvalidInputError("ate_comparison: adherent subset too small");

  AteReport report;
  for (const std::string& outcome : {std::string("diastolic"), std::string("systolic")}) {
    for (const std::string& dataset : {std::string("full"), std::string("adherent_only")}) {
      const auto& subset = dataset == "full" ? records : adherent;
      const CausalDataset data = build_causal_dataset(subset, outcome);
      for (const Estimator est : estimators) {
        double ate = 0.0;
        switch (est) {
          case Estimator::kIpw: ate = ipw_ate(data); break;
          case Estimator::kSLearner: ate = s_learner(data, base, seed); break;
          case Estimator::kTLearner: ate = t_learner(data, base, seed); break;
          case Estimator::kXLearner: ate = x_learner(data, base, seed); break;
        }
        report.cells.push_back({to_string(est), outcome, dataset, ate});
      }
    }
  }
  return report;
}

}  // namespace adherence::causal
