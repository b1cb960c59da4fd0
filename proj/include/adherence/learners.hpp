#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "adherence/cohort.hpp"
#include "adherence/stats.hpp"

namespace adherence::learners {

/// Train-time encoding state reapplied verbatim to evaluation data.
struct EncodingMetadata {
  // categorical field -> ordered level list; first level is the reference
  std::map<std::string, std::vector<std::string>> levels;
  // continuous column name -> (center, scale)
  std::map<std::string, std::pair<double, double>> scaling;
};

struct FeatureMatrix {
  Eigen::MatrixXd X;  // no intercept column
  std::vector<std::string> column_names;
  EncodingMetadata metadata;
};

/// One-hot encodes sex/race/marital/medication and standardizes the
/// continuous features (age, comorbidity counts, hypertension duration,
/// prior visits, first-visit pressures). Time between visits is excluded.
/// When `metadata` is given, levels and scaling are taken from it and an
/// unseen category raises an error.
FeatureMatrix encode(const std::vector<cohort::CohortRecord>& records,
                     const std::optional<EncodingMetadata>& metadata = std::nullopt);

// -- random forest ---------------------------------------------------------

struct ForestConfig {
  int n_trees = 100;
  int min_leaf = 2;
  int features_per_split = 0;  // 0 -> ceil(sqrt(p))
  uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;        // -1 marks a leaf
  double threshold = 0.0;  // midpoint split, go left when x <= threshold
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf: class-1 frequency or mean response
};

struct DecisionTree {
  std::vector<TreeNode> nodes;
  double predict(const Eigen::RowVectorXd& x) const;
};

/// Bagged trees over bootstrap samples; axis-aligned splits chosen among
/// a per-node random feature subset. Works in classification mode
/// (Gini impurity, binary labels) or regression mode (variance).
class ForestModel {
 public:
  enum class Task { kClassification, kRegression };

  static ForestModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Task task,
                         const ForestConfig& config);

  /// Mean of per-tree leaf values: class-1 probability or regression mean.
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;

  Task task() const { return task_; }
  const ForestConfig& config() const { return config_; }
  const std::vector<DecisionTree>& trees() const { return trees_; }

  std::string to_text() const;
  static ForestModel from_text(const std::string& text);

 private:
  Task task_ = Task::kClassification;
  ForestConfig config_;
  std::vector<DecisionTree> trees_;
};

// -- scoring ----------------------------------------------------------------

/// Mann-Whitney AUROC with midrank tie handling; both classes required.
double auroc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels);

/// Hard labels at a threshold; score >= threshold maps to 1.
Eigen::VectorXd classify(const Eigen::VectorXd& scores, double threshold = 0.5);

/// Logistic classifier over encoded features (adds the intercept column,
/// reuses the IRLS fit). Falls back to the saturated iterate when the
/// training data is separable so experiment sweeps never abort.
class LogisticClassifier {
 public:
  static LogisticClassifier fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);
  Eigen::VectorXd predict_proba(const Eigen::MatrixXd& X) const;

 private:
  Eigen::VectorXd coefficients_;  // intercept first
};

}  // namespace adherence::learners
