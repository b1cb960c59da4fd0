#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adherence/cohort.hpp"

namespace adherence::synth {

/// Linear predictor over the named covariate basis. Continuous covariates
/// enter centered at their configured means; categorical levels enter as
/// indicators against the reference level ("asian", "divorced", female).
/// Basis names: male, age_c, black, white, other, married, single,
/// widowed, marital_other, eci_c, cci_c, htn_c, pvis_c, fsys_c, fdia_c,
/// treatment.
struct LinearModel {
  double intercept = 0.0;
  std::map<std::string, double> coefficients;

  double eval(const std::map<std::string, double>& basis) const;
};

struct CovariateSpec {
  double male_p = 0.40850;
  double age_mean = 62.03;
  double age_sd = 14.2;
  std::array<double, 4> race_probs = {0.31052, 0.11565, 0.45432, 0.11951};  // asian, black, white, other
  std::array<double, 5> marital_probs = {0.09081, 0.51366, 0.24234, 0.09881, 0.05438};
  double eci_mean = 3.13;
  double eci_sd = 2.4;   // negative binomial, capped at 31
  double cci_thinning = 0.5;  // binomial thinning of the ECI count, capped at 17
  double htn_shape = 0.835;
  double htn_scale = 7.11;
  double pvis_mean = 15.75;
  double pvis_sd = 11.6;  // negative binomial, capped at 90
  double first_systolic_mean = 133.0;
  double first_systolic_sd = 15.0;
  double first_diastolic_mean = 82.0;
  double first_diastolic_sd = 9.0;
  double bp_correlation = 0.5;
  double interval_shape = 1.964;
  double interval_scale = 59.51;
  int interval_min_days = 30;
  int interval_max_days = 182;
};

/// Full generative specification. Observed reduction for a record is
///   baseline(x) + m * (response(x) + effect(x) * t) + noise
/// where t indicates amlodipine (vs lisinopril), and m is 1 for adherent
/// records or the attenuation multiplier of the drawn non-adherence type.
struct SynthConfig {
  long n = 4000;
  uint64_t seed = 1;
  CovariateSpec covariates;
  LinearModel adherence_model;  // logit of non-adherence; may use "treatment"
  LinearModel treatment_model;  // logit of amlodipine assignment
  std::array<double, 4> type_mix = {0.644, 0.302, 0.067, 0.079};  // missed, dose, medication, timing
  std::array<double, 4> attenuation = {0.0, 0.5, 0.3, 0.8};
  LinearModel effect_diastolic;    // adherent-conditional treatment effect
  LinearModel effect_systolic;
  LinearModel response_diastolic;  // drug response common to both arms
  LinearModel response_systolic;
  LinearModel baseline_diastolic;  // course absent any medication effect
  LinearModel baseline_systolic;
  double noise_sd_diastolic = 8.0;
  double noise_sd_systolic = 12.0;

  void validate() const;
};

/// Oracle quantities retained by the generator; never part of records.
struct GroundTruth {
  double true_ate_diastolic = 0.0;  // mean of effect(x) over the drawn cohort
  double true_ate_systolic = 0.0;
  std::vector<double> effect_diastolic;  // per-record effect(x)
  std::vector<double> effect_systolic;
  std::vector<double> attenuation_multiplier;  // 1 for adherent records
  // potential outcomes under the realized adherence, by assigned arm
  std::vector<double> y0_diastolic, y1_diastolic;
  std::vector<double> y0_systolic, y1_systolic;
};

struct SynthCohort {
  std::vector<cohort::CohortRecord> records;
  GroundTruth ground_truth;
};

/// Deterministic in (config, seed); records carry trigger-phrase notes so
/// the mock extraction backend reproduces the generated labels.
SynthCohort generate_cohort(const SynthConfig& config);

/// Marginal non-adherence rate over n simulated core draws (no record
/// materialization); used by calibration and the CLI summary.
double simulate_non_adherence_rate(const SynthConfig& config, long n, uint64_t seed);

/// Bisection on the adherence intercept until the simulated marginal
/// non-adherence rate (n = 200,000, fixed calibration seed) is within
/// 0.005 of `target_rate`.
SynthConfig calibrate_prevalence(const SynthConfig& config, double target_rate);

/// Mean potential-outcome difference under full adherence.
std::pair<double, double> true_ate(const GroundTruth& gt);

/// Presets used by the command-line interface and the test suites.
SynthConfig default_config();
SynthConfig reversal_config();  // arm-dependent non-adherence, small systolic effect
SynthConfig null_config();      // attenuation all 1: non-adherence is outcome-inert

// JSON round-trip for config files.
void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);
void write_ground_truth_json(const std::string& path, const GroundTruth& gt);

}  // namespace adherence::synth
