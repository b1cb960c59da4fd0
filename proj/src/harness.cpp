#include "adherence/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <thread>

#include "adherence/common.hpp"
#include "adherence/fairness.hpp"
#include "adherence/learners.hpp"
#include "adherence/rng.hpp"

namespace adherence::harness {

namespace {

using cohort::CohortRecord;

uint64_t stream_seed(uint64_t base, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  return Rng::mix(Rng::mix(Rng::mix(base, a), b), c);
}

std::vector<size_t> take(const std::vector<size_t>& pool, Rng& rng, size_t k, const char* what) {
  if (pool.size() < k)
    throw InvalidInputError(std::string("experiment sampling infeasible: need ") + std::to_string(k) +
                            " " + what + " records, have " + std::to_string(pool.size()));
  const auto picks = rng.sample_without_replacement(pool.size(), k);
  std::vector<size_t> out(k);
  for (size_t i = 0; i < k; ++i) out[i] = pool[picks[i]];
  return out;
}

struct SeedContext {
  std::vector<CohortRecord> generated;       // synthetic source only
  const std::vector<CohortRecord>* records;  // points at generated or ingested
  std::vector<size_t> test_idx;
  std::vector<size_t> adherent_pool;  // excludes the test set
  std::vector<size_t> na_pool;
};

SeedContext make_seed_context(const ExperimentConfig& cfg,
                              const std::vector<CohortRecord>* ingested, int seed_index) {
  SeedContext ctx;
  if (ingested) {
    ctx.records = ingested;
  } else {
    synth::SynthConfig sc = cfg.cohort;
    sc.seed = stream_seed(cfg.base_seed, 0x10c0, static_cast<uint64_t>(seed_index));
    ctx.generated = synth::generate_cohort(sc).records;
    ctx.records = &ctx.generated;
  }

  std::vector<size_t> adherent, non_adherent;
  for (size_t i = 0; i < ctx.records->size(); ++i) {
    const auto& r = (*ctx.records)[i];
    if (!r.adherence) throw InvalidInputError("experiment cohort has unlabeled records");
    if (!r.outcome_normal_bp) throw InvalidInputError("experiment cohort lacks outcome labels");
    (r.adherence->non_adherent ? non_adherent : adherent).push_back(i);
  }

  Rng rng(stream_seed(cfg.base_seed, 0x7e57, static_cast<uint64_t>(seed_index)));
  ctx.test_idx = take(adherent, rng, static_cast<size_t>(cfg.test_size), "adherent test");
  std::vector<char> in_test(ctx.records->size(), 0);
  for (size_t i : ctx.test_idx) in_test[i] = 1;
  for (size_t i : adherent)
    if (!in_test[i]) ctx.adherent_pool.push_back(i);
  ctx.na_pool = std::move(non_adherent);
  return ctx;
}

struct EvaluatedModel {
  double auroc = 0.0;
  std::map<std::string, report::GroupMetrics> fairness;
};

EvaluatedModel evaluate_model(const std::string& model, const std::vector<CohortRecord>& all,
                              const std::vector<size_t>& train_idx, const std::vector<size_t>& test_idx,
                              const std::vector<std::string>& groups, uint64_t model_seed) {
  std::vector<CohortRecord> train, test;
  train.reserve(train_idx.size());
  test.reserve(test_idx.size());
  for (size_t i : train_idx) train.push_back(all[i]);
  for (size_t i : test_idx) test.push_back(all[i]);

  const auto train_fm = learners::encode(train);
  const auto test_fm = learners::encode(test, train_fm.metadata);

  Eigen::VectorXd y_train(static_cast<Eigen::Index>(train.size()));
  for (size_t i = 0; i < train.size(); ++i) y_train(static_cast<Eigen::Index>(i)) = *train[i].outcome_normal_bp;
  Eigen::VectorXd y_test(static_cast<Eigen::Index>(test.size()));
  for (size_t i = 0; i < test.size(); ++i) y_test(static_cast<Eigen::Index>(i)) = *test[i].outcome_normal_bp;

  Eigen::VectorXd scores;
  if (model == "logistic") {
    scores = learners::LogisticClassifier::fit(train_fm.X, y_train).predict_proba(test_fm.X);
  } else if (model == "forest") {
    learners::ForestConfig fc;
    fc.seed = model_seed;
    scores = learners::ForestModel::fit(train_fm.X, y_train,
                                        learners::ForestModel::Task::kClassification, fc)
                 .predict(test_fm.X);
  } else {
    throw InvalidInputError("unknown model: " + model);
  }

  EvaluatedModel out;
  out.auroc = learners::auroc(scores, y_test);

  const Eigen::VectorXd preds = learners::classify(scores);
  for (const auto& group : groups) {
    const auto race = cohort::race_from_string(group);
    if (!race) throw InvalidInputError("unknown fairness group: " + group);
    fairness::GroupOutcomes g;
    g.group.resize(test.size());
    g.y_true.resize(test.size());
    g.y_pred.resize(test.size());
    for (size_t i = 0; i < test.size(); ++i) {
      g.group[i] = test[i].race == *race ? 1 : 0;
      g.y_true[i] = *test[i].outcome_normal_bp;
      g.y_pred[i] = static_cast<int>(preds(static_cast<Eigen::Index>(i)));
    }
    report::GroupMetrics gm;
    const bool has_focal = std::count(g.group.begin(), g.group.end(), 1) > 0;
    const bool has_rest = std::count(g.group.begin(), g.group.end(), 0) > 0;
    if (has_focal && has_rest) {
      gm.dp_diff = fairness::demographic_parity_diff(g);
      const auto eo = fairness::equalized_odds_diffs(g);
      gm.tpr_diff = eo.tpr_diff;
      gm.fpr_diff = eo.fpr_diff;
    }
    out.fairness[group] = gm;
  }
  return out;
}

std::optional<std::vector<CohortRecord>> load_ingested(const ExperimentConfig& cfg) {
  if (!cfg.cohort_file) return std::nullopt;
  return cohort::read_cohort_csv(*cfg.cohort_file);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (experiment != "vary_ratio" && experiment != "ablate_na")
    throw InvalidInputError("experiment must be vary_ratio or ablate_na");
  if (n_seeds < 1) throw InvalidInputError("n_seeds must be at least 1");
  if (train_size < 2 || test_size < 1) throw InvalidInputError("train/test sizes too small");
  for (double r : na_ratios)
    if (r < 0.0 || r > 1.0) throw InvalidInputError("non-adherent ratios must lie in [0, 1]");
  if (ablation_ratio < 0.0 || ablation_ratio > 1.0)
    throw InvalidInputError("ablation ratio must lie in [0, 1]");
  for (int s : full_sizes)
    if (s < 2) throw InvalidInputError("full sizes must be at least 2");
  if (models.empty()) throw InvalidInputError("at least one model required");
}

void parallel_for(long n, int parallelism, const std::function<void(long)>& fn) {
  if (parallelism <= 0) parallelism = static_cast<int>(std::thread::hardware_concurrency());
  parallelism = std::max(1, std::min<int>(parallelism, static_cast<int>(n)));
  if (parallelism == 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const long i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  for (int i = 0; i < parallelism; ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failed.load()) std::rethrow_exception(error);
}

report::ExperimentReport run_vary_ratio(const ExperimentConfig& config) {
  config.validate();
  const auto ingested = load_ingested(config);

  report::ExperimentReport rep;
  rep.experiment = "vary_ratio";
  const size_t cells_per_seed = config.na_ratios.size() * config.models.size();
  std::vector<report::ExperimentRow> rows(static_cast<size_t>(config.n_seeds) * cells_per_seed);

  parallel_for(config.n_seeds, config.max_parallelism, [&](long seed_index) {
    const SeedContext ctx = make_seed_context(config, ingested ? &*ingested : nullptr,
                                              static_cast<int>(seed_index));
    size_t slot = static_cast<size_t>(seed_index) * cells_per_seed;
    for (size_t ci = 0; ci < config.na_ratios.size(); ++ci) {
      const double ratio = config.na_ratios[ci];
      const size_t n_na = static_cast<size_t>(std::lround(ratio * config.train_size));
      const size_t n_adh = static_cast<size_t>(config.train_size) - n_na;

      Rng rng(stream_seed(config.base_seed, 0xd4a0, static_cast<uint64_t>(seed_index), ci));
      std::vector<size_t> train_idx = take(ctx.na_pool, rng, n_na, "non-adherent training");
      const auto adh_idx = take(ctx.adherent_pool, rng, n_adh, "adherent training");
      train_idx.insert(train_idx.end(), adh_idx.begin(), adh_idx.end());

      char cond[32];
      std::snprintf(cond, sizeof(cond), "ratio=%.2f", ratio);
      for (size_t mi = 0; mi < config.models.size(); ++mi) {
        const auto& model = config.models[mi];
        const auto eval = evaluate_model(model, *ctx.records, train_idx, ctx.test_idx,
                                         config.fairness_groups,
                                         stream_seed(config.base_seed, 0xf0ae57, static_cast<uint64_t>(seed_index),
                                                     ci * 16 + mi));
        report::ExperimentRow row;
        row.condition = cond;
        row.condition_value = ratio;
        row.model = model;
        row.seed_index = static_cast<int>(seed_index);
        row.auroc = eval.auroc;
        row.fairness = eval.fairness;
        rows[slot++] = std::move(row);
      }
    }
  });

  rep.rows = std::move(rows);
  report::compute_aggregates(rep);
  return rep;
}

report::ExperimentReport run_ablation(const ExperimentConfig& config) {
  config.validate();
  const auto ingested = load_ingested(config);

  report::ExperimentReport rep;
  rep.experiment = "ablate_na";
  const size_t cells_per_seed = config.full_sizes.size() * config.models.size() * 2;
  std::vector<report::ExperimentRow> rows(static_cast<size_t>(config.n_seeds) * cells_per_seed);

  parallel_for(config.n_seeds, config.max_parallelism, [&](long seed_index) {
    const SeedContext ctx = make_seed_context(config, ingested ? &*ingested : nullptr,
                                              static_cast<int>(seed_index));
    size_t slot = static_cast<size_t>(seed_index) * cells_per_seed;
    for (size_t ci = 0; ci < config.full_sizes.size(); ++ci) {
      const int size = config.full_sizes[ci];
      const size_t n_na = static_cast<size_t>(std::lround(config.ablation_ratio * size));
      const size_t n_adh = static_cast<size_t>(size) - n_na;

      Rng rng(stream_seed(config.base_seed, 0xab1a7e, static_cast<uint64_t>(seed_index), ci));
      const auto na_idx = take(ctx.na_pool, rng, n_na, "non-adherent training");
      const auto adh_idx = take(ctx.adherent_pool, rng, n_adh, "adherent training");
      std::vector<size_t> full_idx = na_idx;
      full_idx.insert(full_idx.end(), adh_idx.begin(), adh_idx.end());

      char cond[32];
      std::snprintf(cond, sizeof(cond), "size=%d", size);
      for (size_t mi = 0; mi < config.models.size(); ++mi) {
        const auto& model = config.models[mi];
        for (const bool adherent_only : {false, true}) {
          const auto& train_idx = adherent_only ? adh_idx : full_idx;
          const auto eval = evaluate_model(model, *ctx.records, train_idx, ctx.test_idx,
                                           config.fairness_groups,
                                           stream_seed(config.base_seed, 0xf0ae58, static_cast<uint64_t>(seed_index),
                                                       ci * 64 + mi * 2 + (adherent_only ? 1 : 0)));
          report::ExperimentRow row;
          row.condition = cond;
          row.condition_value = size;
          row.variant = adherent_only ? "adherent_only" : "full";
          row.model = model;
          row.seed_index = static_cast<int>(seed_index);
          row.auroc = eval.auroc;
          row.fairness = eval.fairness;
          rows[slot++] = std::move(row);
        }
      }
    }
  });

  rep.rows = std::move(rows);
  report::compute_aggregates(rep);
  return rep;
}

// -- factor analysis -----------------------------------------------------

namespace {

struct CategoricalFactor {
  std::string name;
  std::vector<std::string> levels;  // first is reference
  std::function<std::string(const CohortRecord&)> level_of;
};

struct ContinuousFactor {
  std::string name;
  double report_scale;  // multiplier applied to the coefficient for reporting
  std::function<double(const CohortRecord&)> value_of;
};

std::vector<CategoricalFactor> categorical_factors() {
  return {
      {"sex", {"female", "male"}, [](const CohortRecord& r) { return std::string(cohort::to_string(r.sex)); }},
      {"race",
       {"asian", "black", "white", "other"},
       [](const CohortRecord& r) { return std::string(cohort::to_string(r.race)); }},
      {"marital",
       {"divorced", "married", "single", "widowed", "other"},
       [](const CohortRecord& r) { return std::string(cohort::to_string(r.marital)); }},
  };
}

std::vector<ContinuousFactor> continuous_factors() {
  return {
      {"age (per 10-year increment)", 10.0, [](const CohortRecord& r) { return r.age; }},
      {"time between visits (days)", 1.0,
       [](const CohortRecord& r) { return static_cast<double>(r.pair.interval_days); }},
      {"comorbidities (ECI)", 1.0, [](const CohortRecord& r) { return static_cast<double>(r.eci_count); }},
      {"hypertension duration (years)", 1.0, [](const CohortRecord& r) { return r.htn_duration_years; }},
      {"primary care visits prior year", 1.0,
       [](const CohortRecord& r) { return static_cast<double>(r.primary_visits_prior_year); }},
  };
}

}  // namespace

report::FactorAnalysisReport run_factor_analysis(const std::vector<CohortRecord>& records) {
  if (records.empty()) throw InvalidInputError("run_factor_analysis: no records");
  const auto deduped = cohort::dedup_for_independence(records);

  report::FactorAnalysisReport rep;
  std::vector<std::string> significant_categorical;
  std::vector<std::string> significant_continuous;

  for (const auto& factor : categorical_factors()) {
    std::map<std::string, std::pair<long long, long long>> counts;  // level -> (non-adherent, adherent)
    for (const auto& r : deduped) {
      auto& c = counts[factor.level_of(r)];
      if (r.adherence->non_adherent) ++c.first;
      else ++c.second;
    }
    bool any_significant = false;
    const auto& ref = counts[factor.levels[0]];
    for (size_t li = 0; li < factor.levels.size(); ++li) {
      const auto& level = factor.levels[li];
      const auto& c = counts[level];
      report::FactorRow row;
      row.factor = factor.name;
      row.level = level;
      row.non_adherent = c.first;
      row.adherent = c.second;
      row.total = c.first + c.second;
      row.reference = li == 0;
      if (li > 0 && c.first >= 1 && c.second >= 1 && ref.first >= 1 && ref.second >= 1) {
        row.inference = stats::odds_ratio_2x2({static_cast<double>(c.first), static_cast<double>(c.second)},
                                              {static_cast<double>(ref.first), static_cast<double>(ref.second)},
                                              factor.name + "=" + level);
        if (row.inference->p_value < 0.05) any_significant = true;
      }
      rep.bivariate.push_back(std::move(row));
    }
    if (any_significant) significant_categorical.push_back(factor.name);
  }

  const Eigen::Index n = static_cast<Eigen::Index>(deduped.size());
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = deduped[static_cast<size_t>(i)].adherence->non_adherent ? 1.0 : 0.0;

  for (const auto& factor : continuous_factors()) {
    Eigen::MatrixXd X(n, 2);
    X.col(0).setOnes();
    for (Eigen::Index i = 0; i < n; ++i) X(i, 1) = factor.value_of(deduped[static_cast<size_t>(i)]);
    report::FactorRow row;
    row.factor = factor.name;
    row.total = n;
    row.non_adherent = static_cast<long long>(y.sum());
    row.adherent = n - row.non_adherent;
    const auto fit = stats::fit_logistic(X, y);
    row.inference = stats::wald_inference(fit, 1, factor.name, factor.report_scale);
    if (row.inference->p_value < 0.05) significant_continuous.push_back(factor.name);
    rep.bivariate.push_back(std::move(row));
  }

  // multivariate model over the bivariate-significant factors
  std::vector<std::string> col_names;
  std::vector<std::function<double(const CohortRecord&)>> col_values;
  std::vector<double> col_scales;
  for (const auto& factor : categorical_factors()) {
    if (std::find(significant_categorical.begin(), significant_categorical.end(), factor.name) ==
        significant_categorical.end())
      continue;
    for (size_t li = 1; li < factor.levels.size(); ++li) {
      const std::string level = factor.levels[li];
      col_names.push_back(factor.name + "=" + level);
      col_scales.push_back(1.0);
      auto level_of = factor.level_of;
      col_values.push_back([level_of, level](const CohortRecord& r) { return level_of(r) == level ? 1.0 : 0.0; });
    }
  }
  for (const auto& factor : continuous_factors()) {
    if (std::find(significant_continuous.begin(), significant_continuous.end(), factor.name) ==
        significant_continuous.end())
      continue;
    col_names.push_back(factor.name);
    col_scales.push_back(factor.report_scale);
    col_values.push_back(factor.value_of);
  }

  if (!col_names.empty()) {
    Eigen::MatrixXd X(n, static_cast<Eigen::Index>(col_names.size()) + 1);
    X.col(0).setOnes();
    for (size_t j = 0; j < col_values.size(); ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        X(i, static_cast<Eigen::Index>(j) + 1) = col_values[j](deduped[static_cast<size_t>(i)]);
    const auto fit = stats::fit_logistic(X, y);
    for (size_t j = 0; j < col_names.size(); ++j) {
      report::FactorRow row;
      row.factor = col_names[j];
      row.total = n;
      row.non_adherent = static_cast<long long>(y.sum());
      row.adherent = n - row.non_adherent;
      row.inference = stats::wald_inference(fit, static_cast<Eigen::Index>(j) + 1, col_names[j], col_scales[j]);
      rep.multivariate.push_back(std::move(row));
    }
  }
  return rep;
}

std::vector<report::OutcomeRow> run_outcome_ttest(const std::vector<CohortRecord>& records) {
  std::vector<double> na_sys, adh_sys, na_dia, adh_dia;
  for (const auto& r : records) {
    if (!r.adherence) throw InvalidInputError("run_outcome_ttest: unlabeled record");
    if (!r.systolic_reduction || !r.diastolic_reduction) continue;
    if (r.adherence->non_adherent) {
      na_sys.push_back(*r.systolic_reduction);
      na_dia.push_back(*r.diastolic_reduction);
    } else {
      adh_sys.push_back(*r.systolic_reduction);
      adh_dia.push_back(*r.diastolic_reduction);
    }
  }
  std::vector<report::OutcomeRow> rows;
  rows.push_back({"systolic_reduction", stats::welch_t_test(na_sys, adh_sys)});
  rows.push_back({"diastolic_reduction", stats::welch_t_test(na_dia, adh_dia)});
  return rows;
}

// -- config JSON -----------------------------------------------------------

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  nlohmann::json cohort_json;
  synth::to_json(cohort_json, c.cohort);
  j = {{"experiment", c.experiment},
       {"cohort", cohort_json},
       {"train_size", c.train_size},
       {"na_ratios", c.na_ratios},
       {"full_sizes", c.full_sizes},
       {"ablation_ratio", c.ablation_ratio},
       {"n_seeds", c.n_seeds},
       {"base_seed", c.base_seed},
       {"test_size", c.test_size},
       {"models", c.models},
       {"fairness_groups", c.fairness_groups},
       {"max_parallelism", c.max_parallelism}};
  if (c.cohort_file) j["cohort_file"] = *c.cohort_file;
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  j.at("experiment").get_to(c.experiment);
  if (j.contains("cohort")) synth::from_json(j.at("cohort"), c.cohort);
  if (j.contains("cohort_file")) c.cohort_file = j.at("cohort_file").get<std::string>();
  if (j.contains("train_size")) j.at("train_size").get_to(c.train_size);
  if (j.contains("na_ratios")) j.at("na_ratios").get_to(c.na_ratios);
  if (j.contains("full_sizes")) j.at("full_sizes").get_to(c.full_sizes);
  if (j.contains("ablation_ratio")) j.at("ablation_ratio").get_to(c.ablation_ratio);
  if (j.contains("n_seeds")) j.at("n_seeds").get_to(c.n_seeds);
  if (j.contains("base_seed")) j.at("base_seed").get_to(c.base_seed);
  if (j.contains("test_size")) j.at("test_size").get_to(c.test_size);
  if (j.contains("models")) j.at("models").get_to(c.models);
  if (j.contains("fairness_groups")) j.at("fairness_groups").get_to(c.fairness_groups);
  if (j.contains("max_parallelism")) j.at("max_parallelism").get_to(c.max_parallelism);
}

}  // namespace adherence::harness
