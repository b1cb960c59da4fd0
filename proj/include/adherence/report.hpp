#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adherence/causal.hpp"
#include "adherence/stats.hpp"

namespace adherence::report {

/// Per-group fairness metrics for one trained model on one test set.
struct GroupMetrics {
  std::optional<double> dp_diff;
  std::optional<double> tpr_diff;
  std::optional<double> fpr_diff;
};

/// One (condition, seed, model) evaluation.
struct ExperimentRow {
  std::string condition;     // "ratio=0.30" or "size=600"
  double condition_value = 0.0;
  std::string variant;       // "full" | "adherent_only" | ""
  std::string model;         // "logistic" | "forest"
  int seed_index = 0;
  double auroc = 0.0;
  std::map<std::string, GroupMetrics> fairness;  // group -> metrics
};

struct Aggregate {
  std::string condition;
  double condition_value = 0.0;
  std::string variant;
  std::string model;
  std::string metric;  // "auroc" | "dp_diff:black" | ...
  double mean = 0.0;
  double sem = 0.0;
  int n = 0;
};

struct ExperimentReport {
  std::string experiment;  // "vary_ratio" | "ablate_na"
  std::vector<ExperimentRow> rows;
  std::vector<Aggregate> aggregates;

  const Aggregate& aggregate(const std::string& condition, const std::string& variant,
                             const std::string& model, const std::string& metric) const;
};

/// Mean and standard error of the mean per (condition, variant, model,
/// metric); absent per-row metrics are skipped, not counted as zero.
void compute_aggregates(ExperimentReport& report);

// -- emission ----------------------------------------------------------

void write_experiment_csv(const std::string& dir, const ExperimentReport& report);
void write_experiment_json(const std::string& path, const ExperimentReport& report);
ExperimentReport read_experiment_json(const std::string& path);

/// Static chart: one panel per metric, mean with SEM error bars per
/// condition, one series per (model, variant).
void write_experiment_svg(const std::string& path, const ExperimentReport& report);

// factor analysis (bivariate + multivariate tables)
struct FactorRow {
  std::string factor;
  std::string level;  // empty for continuous factors
  long long total = 0;
  long long non_adherent = 0;
  long long adherent = 0;
  bool reference = false;
  std::optional<stats::InferenceRow> inference;  // absent for reference levels
};

struct FactorAnalysisReport {
  std::vector<FactorRow> bivariate;
  std::vector<FactorRow> multivariate;
};

void write_factor_csv(const std::string& dir, const FactorAnalysisReport& report);
void write_factor_json(const std::string& path, const FactorAnalysisReport& report);

// outcome comparison (Welch t-tests per outcome)
struct OutcomeRow {
  std::string outcome;  // "systolic_reduction" | "diastolic_reduction"
  stats::TTestResult test;
};

void write_outcome_csv(const std::string& path, const std::vector<OutcomeRow>& rows);
void write_outcome_json(const std::string& path, const std::vector<OutcomeRow>& rows);

void write_ate_csv(const std::string& path, const causal::AteReport& report);
void write_ate_json(const std::string& path, const causal::AteReport& report);

}  // namespace adherence::report
