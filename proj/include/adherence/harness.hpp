#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adherence/report.hpp"
#include "adherence/synth.hpp"

namespace adherence::harness {

/// Configuration for the contamination-sweep and ablation experiments.
/// The cohort source is either a synthetic config (fresh cohort per seed,
/// seed-derived) or an ingested cohort file (fixed records, per-seed
/// train/test resampling).
struct ExperimentConfig {
  std::string experiment = "vary_ratio";  // "vary_ratio" | "ablate_na"
  synth::SynthConfig cohort = synth::default_config();
  std::optional<std::string> cohort_file;
  int train_size = 300;
  std::vector<double> na_ratios = {0.0, 0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<int> full_sizes = {600, 800, 1000, 1200};
  double ablation_ratio = 0.25;
  int n_seeds = 100;
  uint64_t base_seed = 42;
  int test_size = 500;
  std::vector<std::string> models = {"logistic", "forest"};
  std::vector<std::string> fairness_groups = {"asian", "black", "white", "other"};
  int max_parallelism = 0;  // 0 -> hardware concurrency

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Fixed training size, non-adherent fraction swept over `na_ratios`.
/// Per seed: one all-adherent held-out test set shared by every ratio
/// (paired conditions), disjoint training draws at each ratio.
report::ExperimentReport run_vary_ratio(const ExperimentConfig& config);

/// Non-adherent ratio fixed at `ablation_ratio`; per size, training on
/// the full draw vs on its adherent subset, same test set.
report::ExperimentReport run_ablation(const ExperimentConfig& config);

/// Bivariate odds ratios per factor (2x2 for categorical levels,
/// single-covariate logistic for continuous), then a multivariate fit
/// over the factors with a bivariate p below 0.05.
report::FactorAnalysisReport run_factor_analysis(const std::vector<cohort::CohortRecord>& records);

/// Welch t-tests of the blood-pressure reductions, non-adherent minus
/// adherent, on records with both reductions present.
std::vector<report::OutcomeRow> run_outcome_ttest(const std::vector<cohort::CohortRecord>& records);

/// Deterministic work pool: runs fn(i) for i in [0, n) with at most
/// `parallelism` threads; results must be written to preallocated slots.
void parallel_for(long n, int parallelism, const std::function<void(long)>& fn);

}  // namespace adherence::harness
