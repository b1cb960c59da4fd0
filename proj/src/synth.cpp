#include "adherence/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "adherence/common.hpp"
#include "adherence/rng.hpp"

namespace adherence::synth {

namespace {

constexpr uint64_t kCalibrationSeed = 0xCA11B8A7E5ULL;

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct CoreDraw {
  bool male = false;
  double age = 0.0;
  int race = 0;     // asian, black, white, other
  int marital = 0;  // divorced, married, single, widowed, other
  int eci = 0;
  int cci = 0;
  double htn = 0.0;
  int pvis = 0;
  double fsys = 0.0;
  double fdia = 0.0;
  int interval = 0;
  bool treated = false;
  bool non_adherent = false;
  int na_type = 0;
  std::map<std::string, double> basis;
};

CoreDraw draw_core(Rng& rng, const SynthConfig& cfg) {
  const CovariateSpec& cov = cfg.covariates;
  CoreDraw d;
  d.male = rng.bernoulli(cov.male_p);
  d.age = rng.normal(cov.age_mean, cov.age_sd);
  d.race = rng.categorical(std::span<const double>(cov.race_probs.data(), 4));
  d.marital = rng.categorical(std::span<const double>(cov.marital_probs.data(), 5));
  d.eci = std::min(rng.negative_binomial(cov.eci_mean, cov.eci_sd), 31);
  int cci = 0;
  for (int i = 0; i < d.eci; ++i)
    if (rng.bernoulli(cov.cci_thinning)) ++cci;
  d.cci = std::min(cci, 17);
  d.htn = rng.gamma(cov.htn_shape, cov.htn_scale);
  d.pvis = std::min(rng.negative_binomial(cov.pvis_mean, cov.pvis_sd), 90);
  const double z1 = rng.normal();
  const double z2 = rng.normal();
  d.fsys = cov.first_systolic_mean + cov.first_systolic_sd * z1;
  d.fdia = cov.first_diastolic_mean +
           cov.first_diastolic_sd *
               (cov.bp_correlation * z1 + std::sqrt(1.0 - cov.bp_correlation * cov.bp_correlation) * z2);
  for (;;) {  // truncated interval draw
    const double v = rng.gamma(cov.interval_shape, cov.interval_scale);
    if (v >= cov.interval_min_days && v <= cov.interval_max_days) {
      d.interval = static_cast<int>(v);
      break;
    }
  }

  d.basis = {{"male", d.male ? 1.0 : 0.0},
             {"age_c", d.age - cov.age_mean},
             {"black", d.race == 1 ? 1.0 : 0.0},
             {"white", d.race == 2 ? 1.0 : 0.0},
             {"other", d.race == 3 ? 1.0 : 0.0},
             {"married", d.marital == 1 ? 1.0 : 0.0},
             {"single", d.marital == 2 ? 1.0 : 0.0},
             {"widowed", d.marital == 3 ? 1.0 : 0.0},
             {"marital_other", d.marital == 4 ? 1.0 : 0.0},
             {"eci_c", d.eci - cov.eci_mean},
             {"cci_c", d.cci - cov.eci_mean * cov.cci_thinning},
             {"htn_c", d.htn - cov.htn_shape * cov.htn_scale},
             {"pvis_c", d.pvis - cov.pvis_mean},
             {"fsys_c", d.fsys - cov.first_systolic_mean},
             {"fdia_c", d.fdia - cov.first_diastolic_mean},
             {"treatment", 0.0}};

  d.treated = rng.bernoulli(logistic(cfg.treatment_model.eval(d.basis)));
  d.basis["treatment"] = d.treated ? 1.0 : 0.0;
  d.non_adherent = rng.bernoulli(logistic(cfg.adherence_model.eval(d.basis)));
  d.na_type = rng.categorical(std::span<const double>(cfg.type_mix.data(), 4));
  return d;
}

const char* trigger_phrase(int na_type) {
  switch (na_type) {
    case 0: return "ran out of pills and did not refill";
    case 1: return "took half the prescribed dose";
    case 2: return "switched to a different medication";
    default: return "takes it at night instead";
  }
}

}  // namespace

double LinearModel::eval(const std::map<std::string, double>& basis) const {
  double z = intercept;
  for (const auto& [name, coef] : coefficients) {
    const auto it = basis.find(name);
    if (it == basis.end()) throw InvalidInputError("linear model references unknown covariate: " + name);
    z += coef * it->second;
  }
  return z;
}

void SynthConfig::validate() const {
  if (n <= 0) throw InvalidInputError("synth config: n must be positive");
  if (noise_sd_diastolic <= 0.0 || noise_sd_systolic <= 0.0)
    throw InvalidInputError("synth config: noise sd must be positive");
  double mix_sum = 0.0;
  for (double v : type_mix) {
    if (v < 0.0) throw InvalidInputError("synth config: type mix must be nonnegative");
    mix_sum += v;
  }
  if (mix_sum <= 0.0) throw InvalidInputError("synth config: type mix must have positive mass");
  for (double a : attenuation)
    if (a < 0.0 || a > 1.0) throw InvalidInputError("synth config: attenuation must lie in [0, 1]");
  auto check_probs = [](const auto& probs, const char* what) {
    double s = 0.0;
    for (double p : probs) {
      if (p < 0.0) throw InvalidInputError(std::string("synth config: negative probability in ") + what);
      s += p;
    }
    if (std::fabs(s - 1.0) > 1e-6)
      throw InvalidInputError(std::string("synth config: probabilities must sum to one in ") + what);
  };
  check_probs(covariates.race_probs, "race");
  check_probs(covariates.marital_probs, "marital status");
  if (covariates.male_p < 0.0 || covariates.male_p > 1.0)
    throw InvalidInputError("synth config: male probability outside [0, 1]");
  if (covariates.interval_min_days >= covariates.interval_max_days)
    throw InvalidInputError("synth config: interval bounds out of order");
}

double simulate_non_adherence_rate(const SynthConfig& config, long n, uint64_t seed) {
  config.validate();
  Rng rng(seed);
  long count = 0;
  for (long i = 0; i < n; ++i)
    if (draw_core(rng, config).non_adherent) ++count;
  return static_cast<double>(count) / static_cast<double>(n);
}

SynthCohort generate_cohort(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);
  SynthCohort out;
  out.records.reserve(static_cast<size_t>(config.n));
  GroundTruth& gt = out.ground_truth;

  const cohort::Date base_date = cohort::parse_date("2021-01-04");

  for (long i = 0; i < config.n; ++i) {
    const CoreDraw d = draw_core(rng, config);
    const double eps_d = rng.normal(0.0, config.noise_sd_diastolic);
    const double eps_s = rng.normal(0.0, config.noise_sd_systolic);

    const double tau_d = config.effect_diastolic.eval(d.basis);
    const double tau_s = config.effect_systolic.eval(d.basis);
    const double resp_d = config.response_diastolic.eval(d.basis);
    const double resp_s = config.response_systolic.eval(d.basis);
    const double base_d = config.baseline_diastolic.eval(d.basis);
    const double base_s = config.baseline_systolic.eval(d.basis);
    const double m = d.non_adherent ? config.attenuation[static_cast<size_t>(d.na_type)] : 1.0;
    const double t = d.treated ? 1.0 : 0.0;

    const double red_d = base_d + m * (resp_d + tau_d * t) + eps_d;
    const double red_s = base_s + m * (resp_s + tau_s * t) + eps_s;

    cohort::CohortRecord r;
    char pid[16];
    std::snprintf(pid, sizeof(pid), "S%06ld", i);
    r.pair.patient_id = pid;
    r.sex = d.male ? cohort::Sex::kMale : cohort::Sex::kFemale;
    r.age = d.age;
    r.race = static_cast<cohort::Race>(d.race);
    r.marital = static_cast<cohort::Marital>(d.marital);
    r.eci_count = d.eci;
    r.cci_count = d.cci;
    r.htn_duration_years = d.htn;
    r.primary_visits_prior_year = d.pvis;

    const std::string med = d.treated ? "amlodipine" : "lisinopril";
    r.pair.first.patient_id = r.pair.patient_id;
    r.pair.first.date = cohort::add_days(base_date, static_cast<int>((i * 7) % 365));
    r.pair.first.prescriptions = {med};
    r.pair.first.systolic = d.fsys;
    r.pair.first.diastolic = d.fdia;
    r.pair.first.demographics =
        cohort::Demographics{r.sex, r.age, r.race, r.marital, r.eci_count,
                             r.cci_count, r.htn_duration_years, r.primary_visits_prior_year};

    r.pair.second.patient_id = r.pair.patient_id;
    r.pair.second.date = cohort::add_days(r.pair.first.date, d.interval);
    r.pair.second.systolic = d.fsys - red_s;
    r.pair.second.diastolic = d.fdia - red_d;
    r.pair.second.note_id = std::string("N") + (pid + 1);
    r.pair.interval_days = d.interval;

    AdherenceLabel label;
    label.source = LabelSource::kAnnotation;
    label.non_adherent = d.non_adherent;
    if (d.non_adherent) {
      label.types.insert(static_cast<NonAdherenceType>(d.na_type));
      const char* phrase = trigger_phrase(d.na_type);
      r.pair.second.note_text = "Patient " + std::string(phrase) + " (" + med + "). Blood pressure rechecked.";
      label.evidence = {phrase};
    } else {
      r.pair.second.note_text = "Continues " + med + " as prescribed. Blood pressure rechecked.";
    }
    r.adherence = std::move(label);

    r.systolic_reduction = red_s;
    r.diastolic_reduction = red_d;
    r.outcome_normal_bp = cohort::label_outcome(r);

    gt.effect_diastolic.push_back(tau_d);
    gt.effect_systolic.push_back(tau_s);
    gt.attenuation_multiplier.push_back(m);
    gt.y0_diastolic.push_back(base_d + m * resp_d + eps_d);
    gt.y1_diastolic.push_back(base_d + m * (resp_d + tau_d) + eps_d);
    gt.y0_systolic.push_back(base_s + m * resp_s + eps_s);
    gt.y1_systolic.push_back(base_s + m * (resp_s + tau_s) + eps_s);

    out.records.push_back(std::move(r));
  }

  double sum_d = 0.0, sum_s = 0.0;
  for (size_t i = 0; i < gt.effect_diastolic.size(); ++i) {
    sum_d += gt.effect_diastolic[i];
    sum_s += gt.effect_systolic[i];
  }
  gt.true_ate_diastolic = sum_d / static_cast<double>(config.n);
  gt.true_ate_systolic = sum_s / static_cast<double>(config.n);
  return out;
}

SynthConfig calibrate_prevalence(const SynthConfig& config, double target_rate) {
  if (target_rate <= 0.0 || target_rate >= 1.0)
    throw InvalidInputError("calibrate_prevalence: target rate must lie in (0, 1)");
  constexpr long kSimN = 200000;
  constexpr double kTol = 0.005;

  SynthConfig c = config;
  auto rate_at = [&](double intercept) {
    c.adherence_model.intercept = intercept;
    return simulate_non_adherence_rate(c, kSimN, kCalibrationSeed);
  };

  double lo = config.adherence_model.intercept - 10.0;
  double hi = config.adherence_model.intercept + 10.0;
  if (rate_at(lo) > target_rate || rate_at(hi) < target_rate)
    throw NumericError("calibrate_prevalence: target rate not bracketed by intercept range");

  double mid = 0.0;
  for (int iter = 0; iter < 60; ++iter) {
    mid = 0.5 * (lo + hi);
    const double rate = rate_at(mid);
    if (std::fabs(rate - target_rate) <= kTol && iter >= 10) break;
    if (rate < target_rate)
      lo = mid;
    else
      hi = mid;
  }
  c.adherence_model.intercept = mid;
  return c;
}

std::pair<double, double> true_ate(const GroundTruth& gt) {
  return {gt.true_ate_diastolic, gt.true_ate_systolic};
}

SynthConfig default_config() {
  SynthConfig c;
  c.n = 4000;
  c.seed = 1;

  c.treatment_model.intercept = 0.0;
  c.treatment_model.coefficients = {
      {"age_c", 0.035}, {"black", 0.3}, {"eci_c", 0.06}, {"fsys_c", 0.01}};

  c.adherence_model.intercept = -1.2784;  // calibrated to 21.7% marginal rate
  c.adherence_model.coefficients = {
      {"age_c", -0.0062}, {"black", 0.322},  {"white", -0.105},      {"other", 0.095},
      {"eci_c", -0.041},  {"male", -0.051},  {"married", -0.06},     {"single", 0.23},
      {"widowed", 0.03},  {"marital_other", 0.247}};

  c.effect_diastolic.intercept = 2.0;
  c.effect_systolic.intercept = 1.0;

  c.response_diastolic.intercept = 3.0;
  c.response_diastolic.coefficients = {{"age_c", -0.30}, {"black", -9.0}};
  c.response_systolic.intercept = 6.0;
  c.response_systolic.coefficients = {{"age_c", -0.60}, {"black", -15.0}};

  c.baseline_diastolic.intercept = 3.0;
  c.baseline_diastolic.coefficients = {{"age_c", 0.15}, {"fdia_c", 0.30}, {"black", 11.0}};
  c.baseline_systolic.intercept = 5.0;
  c.baseline_systolic.coefficients = {{"age_c", 0.30}, {"fsys_c", 0.35}, {"black", 18.0}};

  c.noise_sd_diastolic = 8.0;
  c.noise_sd_systolic = 12.0;
  return c;
}

SynthConfig reversal_config() {
  SynthConfig c = default_config();
  c.n = 6000;
  c.adherence_model.intercept = -2.35;  // calibrated to 17.5% with the treatment term
  c.adherence_model.coefficients["treatment"] = 1.2;
  c.attenuation = {0.0, 0.1, 0.1, 0.2};
  c.effect_diastolic.intercept = 2.0;
  c.effect_systolic.intercept = 0.1;
  c.response_diastolic = LinearModel{4.0, {}};
  c.response_systolic = LinearModel{4.0, {}};
  c.baseline_diastolic = LinearModel{1.0, {{"age_c", 0.10}, {"fdia_c", 0.30}}};
  c.baseline_systolic = LinearModel{2.0, {{"age_c", 0.12}, {"fsys_c", 0.35}}};
  c.noise_sd_diastolic = 4.0;
  c.noise_sd_systolic = 2.0;
  return c;
}

SynthConfig null_config() {
  SynthConfig c = default_config();
  c.attenuation = {1.0, 1.0, 1.0, 1.0};
  return c;
}

// -- JSON ------------------------------------------------------------------

namespace {
void to_json(nlohmann::json& j, const LinearModel& m) {
  j = {{"intercept", m.intercept}, {"coefficients", m.coefficients}};
}
void from_json(const nlohmann::json& j, LinearModel& m) {
  m.intercept = j.at("intercept");
  m.coefficients = j.at("coefficients").get<std::map<std::string, double>>();
}
void to_json(nlohmann::json& j, const CovariateSpec& c) {
  j = {{"male_p", c.male_p},
       {"age_mean", c.age_mean},
       {"age_sd", c.age_sd},
       {"race_probs", c.race_probs},
       {"marital_probs", c.marital_probs},
       {"eci_mean", c.eci_mean},
       {"eci_sd", c.eci_sd},
       {"cci_thinning", c.cci_thinning},
       {"htn_shape", c.htn_shape},
       {"htn_scale", c.htn_scale},
       {"pvis_mean", c.pvis_mean},
       {"pvis_sd", c.pvis_sd},
       {"first_systolic_mean", c.first_systolic_mean},
       {"first_systolic_sd", c.first_systolic_sd},
       {"first_diastolic_mean", c.first_diastolic_mean},
       {"first_diastolic_sd", c.first_diastolic_sd},
       {"bp_correlation", c.bp_correlation},
       {"interval_shape", c.interval_shape},
       {"interval_scale", c.interval_scale},
       {"interval_min_days", c.interval_min_days},
       {"interval_max_days", c.interval_max_days}};
}
void from_json(const nlohmann::json& j, CovariateSpec& c) {
  j.at("male_p").get_to(c.male_p);
  j.at("age_mean").get_to(c.age_mean);
  j.at("age_sd").get_to(c.age_sd);
  j.at("race_probs").get_to(c.race_probs);
  j.at("marital_probs").get_to(c.marital_probs);
  j.at("eci_mean").get_to(c.eci_mean);
  j.at("eci_sd").get_to(c.eci_sd);
  j.at("cci_thinning").get_to(c.cci_thinning);
  j.at("htn_shape").get_to(c.htn_shape);
  j.at("htn_scale").get_to(c.htn_scale);
  j.at("pvis_mean").get_to(c.pvis_mean);
  j.at("pvis_sd").get_to(c.pvis_sd);
  j.at("first_systolic_mean").get_to(c.first_systolic_mean);
  j.at("first_systolic_sd").get_to(c.first_systolic_sd);
  j.at("first_diastolic_mean").get_to(c.first_diastolic_mean);
  j.at("first_diastolic_sd").get_to(c.first_diastolic_sd);
  j.at("bp_correlation").get_to(c.bp_correlation);
  j.at("interval_shape").get_to(c.interval_shape);
  j.at("interval_scale").get_to(c.interval_scale);
  j.at("interval_min_days").get_to(c.interval_min_days);
  j.at("interval_max_days").get_to(c.interval_max_days);
}
}  // namespace

void to_json(nlohmann::json& j, const SynthConfig& c) {
  nlohmann::json cov, adh, trt, ed, es, rd, rs, bd, bs;
  to_json(cov, c.covariates);
  to_json(adh, c.adherence_model);
  to_json(trt, c.treatment_model);
  to_json(ed, c.effect_diastolic);
  to_json(es, c.effect_systolic);
  to_json(rd, c.response_diastolic);
  to_json(rs, c.response_systolic);
  to_json(bd, c.baseline_diastolic);
  to_json(bs, c.baseline_systolic);
  j = {{"n", c.n},
       {"seed", c.seed},
       {"covariates", cov},
       {"adherence_model", adh},
       {"treatment_model", trt},
       {"type_mix", c.type_mix},
       {"attenuation", c.attenuation},
       {"effect_diastolic", ed},
       {"effect_systolic", es},
       {"response_diastolic", rd},
       {"response_systolic", rs},
       {"baseline_diastolic", bd},
       {"baseline_systolic", bs},
       {"noise_sd_diastolic", c.noise_sd_diastolic},
       {"noise_sd_systolic", c.noise_sd_systolic}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  j.at("n").get_to(c.n);
  j.at("seed").get_to(c.seed);
  from_json(j.at("covariates"), c.covariates);
  from_json(j.at("adherence_model"), c.adherence_model);
  from_json(j.at("treatment_model"), c.treatment_model);
  j.at("type_mix").get_to(c.type_mix);
  j.at("attenuation").get_to(c.attenuation);
  from_json(j.at("effect_diastolic"), c.effect_diastolic);
  from_json(j.at("effect_systolic"), c.effect_systolic);
  from_json(j.at("response_diastolic"), c.response_diastolic);
  from_json(j.at("response_systolic"), c.response_systolic);
  from_json(j.at("baseline_diastolic"), c.baseline_diastolic);
  from_json(j.at("baseline_systolic"), c.baseline_systolic);
  j.at("noise_sd_diastolic").get_to(c.noise_sd_diastolic);
  j.at("noise_sd_systolic").get_to(c.noise_sd_systolic);
}

void write_ground_truth_json(const std::string& path, const GroundTruth& gt) {
  nlohmann::json j = {{"true_ate_diastolic", gt.true_ate_diastolic},
                      {"true_ate_systolic", gt.true_ate_systolic},
                      {"effect_diastolic", gt.effect_diastolic},
                      {"effect_systolic", gt.effect_systolic},
                      {"attenuation_multiplier", gt.attenuation_multiplier},
                      {"y0_diastolic", gt.y0_diastolic},
                      {"y1_diastolic", gt.y1_diastolic},
                      {"y0_systolic", gt.y0_systolic},
                      {"y1_systolic", gt.y1_systolic}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInputError("cannot write ground truth file: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace adherence::synth
