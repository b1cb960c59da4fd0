#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "adherence/learners.hpp"

namespace adherence::causal {

/// Confounders, binary treatment (1 = amlodipine, 0 = lisinopril),
/// and a continuous outcome (blood-pressure reduction in mmHg).
struct CausalDataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd t;
  Eigen::VectorXd y;

  void validate() const;
};

/// Regression interface shared by the meta-learner base models.
class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) = 0;
  virtual Eigen::VectorXd predict(const Eigen::MatrixXd& X) const = 0;
};

/// Ordinary least squares with intercept (QR factorization).
class LinearRegressor : public Regressor {
 public:
  void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) override;
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override;

 private:
  Eigen::VectorXd beta_;  // intercept first
};

/// Random forest in regression mode behind the Regressor interface.
class ForestRegressor : public Regressor {
 public:
  explicit ForestRegressor(learners::ForestConfig config) : config_(config) {}
  void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) override;
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const override;

 private:
  learners::ForestConfig config_;
  std::unique_ptr<learners::ForestModel> model_;
};

enum class BaseLearnerKind { kLinear, kForest };

std::unique_ptr<Regressor> make_base_learner(BaseLearnerKind kind, uint64_t seed);

/// Propensity scores from a logistic regression of t on X, clipped to
/// [0.01, 0.99]. A separable fit falls back to its saturated iterate so
/// clipping still yields usable scores.
Eigen::VectorXd fit_propensity(const Eigen::MatrixXd& X, const Eigen::VectorXd& t);

/// Hajek (self-normalized) inverse-probability-weighted ATE.
double ipw_ate(const CausalDataset& data);
double ipw_ate(const CausalDataset& data, const Eigen::VectorXd& propensity);

/// Pooled-model meta-learner: mu(x, t) fit with t as an extra column.
double s_learner(const CausalDataset& data, BaseLearnerKind base, uint64_t seed = 0);

/// Per-arm models mu1, mu0; ATE = mean(mu1(x) - mu0(x)).
double t_learner(const CausalDataset& data, BaseLearnerKind base, uint64_t seed = 0);

/// Two-stage imputed-effect learner blended by propensity.
double x_learner(const CausalDataset& data, BaseLearnerKind base, uint64_t seed = 0);

enum class Estimator { kIpw, kSLearner, kTLearner, kXLearner };
const char* to_string(Estimator e);

/// Table of ATE estimates: estimator x outcome x dataset.
struct AteReport {
  struct Cell {
    std::string estimator;
    std::string outcome;  // "diastolic" | "systolic"
    std::string dataset;  // "full" | "adherent_only"
    double ate = 0.0;
  };
  std::vector<Cell> cells;

  double value(const std::string& estimator, const std::string& outcome,
               const std::string& dataset) const;
};

/// Runs the requested estimators for both outcomes on the full records
/// and on the adherent-only subset. Records must carry adherence labels
/// and both reductions.
AteReport ate_comparison(const std::vector<cohort::CohortRecord>& records,
                         const std::vector<Estimator>& estimators, BaseLearnerKind base,
                         uint64_t seed = 0);

/// Confounder dataset from cohort records (encoded features minus the
/// medication indicator, which becomes the treatment).
CausalDataset build_causal_dataset(const std::vector<cohort::CohortRecord>& records,
                                   const std::string& outcome);

}  // namespace adherence::causal
