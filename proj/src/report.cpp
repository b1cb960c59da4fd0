#include "adherence/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "adherence/common.hpp"
#include "adherence/csv.hpp"

namespace adherence::report {

namespace {

std::string fmt(double v) { return csv::format_double(v); }

std::string opt_fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

void write_lines(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInputError("cannot write file: " + path);
  out << content;
}

}  // namespace

const Aggregate& ExperimentReport::aggregate(const std::string& condition, const std::string& variant,
                                             const std::string& model, const std::string& metric) const {
  for (const auto& a : aggregates)
    if (a.condition == condition && a.variant == variant && a.model == model && a.metric == metric)
      return a;
  throw InvalidInputError("missing aggregate: " + condition + "/" + variant + "/" + model + "/" + metric);
}

void compute_aggregates(ExperimentReport& report) {
  struct Key {
    std::string condition, variant, model, metric;
    double value;
    bool operator<(const Key& o) const {
      return std::tie(condition, variant, model, metric) < std::tie(o.condition, o.variant, o.model, o.metric);
    }
  };
  std::map<Key, std::vector<double>> samples;
  for (const auto& row : report.rows) {
    samples[{row.condition, row.variant, row.model, "auroc", row.condition_value}].push_back(row.auroc);
    for (const auto& [group, gm] : row.fairness) {
      if (gm.dp_diff)
        samples[{row.condition, row.variant, row.model, "dp_diff:" + group, row.condition_value}].push_back(*gm.dp_diff);
      if (gm.tpr_diff)
        samples[{row.condition, row.variant, row.model, "tpr_diff:" + group, row.condition_value}].push_back(*gm.tpr_diff);
      if (gm.fpr_diff)
        samples[{row.condition, row.variant, row.model, "fpr_diff:" + group, row.condition_value}].push_back(*gm.fpr_diff);
    }
  }
  report.aggregates.clear();
  for (const auto& [key, values] : samples) {
    Aggregate a;
    a.condition = key.condition;
    a.condition_value = key.value;
    a.variant = key.variant;
    a.model = key.model;
    a.metric = key.metric;
    a.n = static_cast<int>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
    a.mean = mean;
    a.sem = sd / std::sqrt(static_cast<double>(values.size()));
    report.aggregates.push_back(a);
  }
}

void write_experiment_csv(const std::string& dir, const ExperimentReport& report) {
  std::filesystem::create_directories(dir);

  std::set<std::string> groups;
  for (const auto& row : report.rows)
    for (const auto& [g, _] : row.fairness) groups.insert(g);

  std::vector<std::string> header = {"experiment", "condition", "condition_value",
                                     "variant",    "model",     "seed_index", "auroc"};
  for (const auto& g : groups)
    for (const char* m : {"dp_diff", "tpr_diff", "fpr_diff"})
      header.push_back(std::string(m) + ":" + g);

  std::vector<std::vector<std::string>> rows;
  for (const auto& row : report.rows) {
    std::vector<std::string> r = {report.experiment, row.condition, fmt(row.condition_value),
                                  row.variant,       row.model,     std::to_string(row.seed_index),
                                  fmt(row.auroc)};
    for (const auto& g : groups) {
      const auto it = row.fairness.find(g);
      if (it == row.fairness.end()) {
        r.insert(r.end(), {"", "", ""});
      } else {
        r.push_back(opt_fmt(it->second.dp_diff));
        r.push_back(opt_fmt(it->second.tpr_diff));
        r.push_back(opt_fmt(it->second.fpr_diff));
      }
    }
    rows.push_back(std::move(r));
  }
  csv::write_file(dir + "/rows.csv", header, rows);

  std::vector<std::vector<std::string>> agg;
  for (const auto& a : report.aggregates)
    agg.push_back({report.experiment, a.condition, fmt(a.condition_value), a.variant, a.model, a.metric,
                   fmt(a.mean), fmt(a.sem), std::to_string(a.n)});
  csv::write_file(dir + "/aggregates.csv",
                  {"experiment", "condition", "condition_value", "variant", "model", "metric", "mean",
                   "sem", "n"},
                  agg);
}

namespace {

nlohmann::json metrics_json(const GroupMetrics& gm) {
  nlohmann::json j = nlohmann::json::object();
  if (gm.dp_diff) j["dp_diff"] = *gm.dp_diff;
  if (gm.tpr_diff) j["tpr_diff"] = *gm.tpr_diff;
  if (gm.fpr_diff) j["fpr_diff"] = *gm.fpr_diff;
  return j;
}

GroupMetrics metrics_from_json(const nlohmann::json& j) {
  GroupMetrics gm;
  if (j.contains("dp_diff")) gm.dp_diff = j["dp_diff"].get<double>();
  if (j.contains("tpr_diff")) gm.tpr_diff = j["tpr_diff"].get<double>();
  if (j.contains("fpr_diff")) gm.fpr_diff = j["fpr_diff"].get<double>();
  return gm;
}

}  // namespace

void write_experiment_json(const std::string& path, const ExperimentReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.rows) {
    nlohmann::json fairness = nlohmann::json::object();
    for (const auto& [g, gm] : row.fairness) fairness[g] = metrics_json(gm);
    rows.push_back({{"condition", row.condition},
                    {"condition_value", row.condition_value},
                    {"variant", row.variant},
                    {"model", row.model},
                    {"seed_index", row.seed_index},
                    {"auroc", row.auroc},
                    {"fairness", fairness}});
  }
  nlohmann::json aggregates = nlohmann::json::array();
  for (const auto& a : report.aggregates)
    aggregates.push_back({{"condition", a.condition},
                          {"condition_value", a.condition_value},
                          {"variant", a.variant},
                          {"model", a.model},
                          {"metric", a.metric},
                          {"mean", a.mean},
                          {"sem", a.sem},
                          {"n", a.n}});
  const nlohmann::json j = {{"experiment", report.experiment}, {"rows", rows}, {"aggregates", aggregates}};
  write_lines(path, j.dump(2) + "\n");
}

ExperimentReport read_experiment_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open report file: " + path);
  nlohmann::json j;
  in >> j;
  ExperimentReport report;
  report.experiment = j.at("experiment");
  for (const auto& r : j.at("rows")) {
    ExperimentRow row;
    row.condition = r.at("condition");
    row.condition_value = r.at("condition_value");
    row.variant = r.at("variant");
    row.model = r.at("model");
    row.seed_index = r.at("seed_index");
    row.auroc = r.at("auroc");
    for (const auto& [g, gm] : r.at("fairness").items()) row.fairness[g] = metrics_from_json(gm);
    report.rows.push_back(std::move(row));
  }
  for (const auto& a : j.at("aggregates")) {
    Aggregate agg;
    agg.condition = a.at("condition");
    agg.condition_value = a.at("condition_value");
    agg.variant = a.at("variant");
    agg.model = a.at("model");
    agg.metric = a.at("metric");
    agg.mean = a.at("mean");
    agg.sem = a.at("sem");
    agg.n = a.at("n");
    report.aggregates.push_back(std::move(agg));
  }
  return report;
}

void write_experiment_svg(const std::string& path, const ExperimentReport& report) {
  // panels: auroc plus the black-group disparity metrics when present
  std::vector<std::string> metrics = {"auroc"};
  for (const char* m : {"dp_diff:black", "tpr_diff:black", "fpr_diff:black"})
    for (const auto& a : report.aggregates)
      if (a.metric == m) {
        metrics.push_back(m);
        break;
      }

  struct SeriesKey {
    std::string model, variant;
    bool operator<(const SeriesKey& o) const { return std::tie(model, variant) < std::tie(o.model, o.variant); }
  };

  const int panel_w = 320, panel_h = 240, margin = 48;
  const int width = panel_w * static_cast<int>(metrics.size()) + margin;
  const int height = panel_h + 2 * margin;
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"};

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
         std::to_string(height) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (size_t mi = 0; mi < metrics.size(); ++mi) {
    const std::string& metric = metrics[mi];
    std::map<SeriesKey, std::vector<const Aggregate*>> series;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& a : report.aggregates) {
      if (a.metric != metric) continue;
      series[{a.model, a.variant}].push_back(&a);
      xmin = std::min(xmin, a.condition_value);
      xmax = std::max(xmax, a.condition_value);
      ymin = std::min(ymin, a.mean - 2 * a.sem);
      ymax = std::max(ymax, a.mean + 2 * a.sem);
    }
    if (series.empty()) continue;
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1e-6;
    const double x0 = margin + static_cast<double>(mi) * panel_w, y0 = margin;
    const double plot_w = panel_w - 70, plot_h = panel_h - 40;
    auto sx = [&](double v) { return x0 + (v - xmin) / (xmax - xmin) * plot_w; };
    auto sy = [&](double v) { return y0 + plot_h - (v - ymin) / (ymax - ymin) * plot_h; };

    svg += "<text x=\"" + fmt(x0 + plot_w / 2) + "\" y=\"" + fmt(y0 - 12) +
           "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">" + metric + "</text>\n";
    svg += "<line x1=\"" + fmt(x0) + "\" y1=\"" + fmt(y0 + plot_h) + "\" x2=\"" + fmt(x0 + plot_w) +
           "\" y2=\"" + fmt(y0 + plot_h) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + fmt(x0) + "\" y1=\"" + fmt(y0) + "\" x2=\"" + fmt(x0) + "\" y2=\"" +
           fmt(y0 + plot_h) + "\" stroke=\"black\"/>\n";
    for (double frac : {0.0, 0.5, 1.0}) {
      const double yv = ymin + frac * (ymax - ymin);
      svg += "<text x=\"" + fmt(x0 - 4) + "\" y=\"" + fmt(sy(yv) + 4) +
             "\" text-anchor=\"end\" font-size=\"9\" font-family=\"sans-serif\">" + csv::format_double(yv, 3) +
             "</text>\n";
      const double xv = xmin + frac * (xmax - xmin);
      svg += "<text x=\"" + fmt(sx(xv)) + "\" y=\"" + fmt(y0 + plot_h + 14) +
             "\" text-anchor=\"middle\" font-size=\"9\" font-family=\"sans-serif\">" +
             csv::format_double(xv, 3) + "</text>\n";
    }

    int color_idx = 0;
    double legend_y = y0 + 8;
    for (auto& [key, points] : series) {
      auto sorted = points;
      std::sort(sorted.begin(), sorted.end(), [](const Aggregate* a, const Aggregate* b) {
        return a->condition_value < b->condition_value;
      });
      const std::string color = kColors[color_idx % 5];
      std::string poly = "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\" points=\"";
      for (const auto* a : sorted) poly += fmt(sx(a->condition_value)) + "," + fmt(sy(a->mean)) + " ";
      svg += poly + "\"/>\n";
      for (const auto* a : sorted) {
        const double x = sx(a->condition_value);
        svg += "<line x1=\"" + fmt(x) + "\" y1=\"" + fmt(sy(a->mean - a->sem)) + "\" x2=\"" + fmt(x) +
               "\" y2=\"" + fmt(sy(a->mean + a->sem)) + "\" stroke=\"" + color + "\"/>\n";
        svg += "<circle cx=\"" + fmt(x) + "\" cy=\"" + fmt(sy(a->mean)) + "\" r=\"2.2\" fill=\"" + color +
               "\"/>\n";
      }
      const std::string label = key.model + (key.variant.empty() ? "" : " (" + key.variant + ")");
      svg += "<text x=\"" + fmt(x0 + plot_w - 4) + "\" y=\"" + fmt(legend_y) +
             "\" text-anchor=\"end\" font-size=\"10\" font-family=\"sans-serif\" fill=\"" + color + "\">" +
             label + "</text>\n";
      legend_y += 12;
      ++color_idx;
    }
  }
  svg += "</svg>\n";
  write_lines(path, svg);
}

// -- factor analysis -----------------------------------------------------

namespace {
std::vector<std::string> factor_row_csv(const FactorRow& r) {
  std::vector<std::string> row = {r.factor,
                                  r.level,
                                  std::to_string(r.total),
                                  std::to_string(r.non_adherent),
                                  std::to_string(r.adherent)};
  if (r.reference) {
    row.insert(row.end(), {"ref", "", "", ""});
  } else if (r.inference) {
    row.insert(row.end(), {fmt(r.inference->odds_ratio), fmt(r.inference->ci_low),
                           fmt(r.inference->ci_high), fmt(r.inference->p_value)});
  } else {
    row.insert(row.end(), {"", "", "", ""});
  }
  return row;
}

nlohmann::json factor_row_json(const FactorRow& r) {
  nlohmann::json j = {{"factor", r.factor},       {"level", r.level},
                      {"total", r.total},         {"non_adherent", r.non_adherent},
                      {"adherent", r.adherent},   {"reference", r.reference}};
  if (r.inference) {
    j["odds_ratio"] = r.inference->odds_ratio;
    j["ci_low"] = r.inference->ci_low;
    j["ci_high"] = r.inference->ci_high;
    j["p_value"] = r.inference->p_value;
  }
  return j;
}
}  // namespace

void write_factor_csv(const std::string& dir, const FactorAnalysisReport& report) {
  std::filesystem::create_directories(dir);
  const std::vector<std::string> header = {"factor", "level",   "total", "non_adherent", "adherent",
                                           "or",     "ci_low",  "ci_high", "p_value"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : report.bivariate) rows.push_back(factor_row_csv(r));
  csv::write_file(dir + "/factors_bivariate.csv", header, rows);
  rows.clear();
  for (const auto& r : report.multivariate) rows.push_back(factor_row_csv(r));
  csv::write_file(dir + "/factors_multivariate.csv", header, rows);
}

void write_factor_json(const std::string& path, const FactorAnalysisReport& report) {
  nlohmann::json biv = nlohmann::json::array(), mult = nlohmann::json::array();
  for (const auto& r : report.bivariate) biv.push_back(factor_row_json(r));
  for (const auto& r : report.multivariate) mult.push_back(factor_row_json(r));
  write_lines(path, nlohmann::json({{"bivariate", biv}, {"multivariate", mult}}).dump(2) + "\n");
}

void write_outcome_csv(const std::string& path, const std::vector<OutcomeRow>& rows) {
  std::vector<std::vector<std::string>> out;
  for (const auto& r : rows)
    out.push_back({r.outcome, fmt(r.test.mean_difference), fmt(r.test.ci_low), fmt(r.test.ci_high),
                   fmt(r.test.t_statistic), fmt(r.test.dof), fmt(r.test.p_value)});
  csv::write_file(path, {"outcome", "mean_difference", "ci_low", "ci_high", "t", "dof", "p_value"}, out);
}

void write_outcome_json(const std::string& path, const std::vector<OutcomeRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows)
    j.push_back({{"outcome", r.outcome},
                 {"mean_difference", r.test.mean_difference},
                 {"ci_low", r.test.ci_low},
                 {"ci_high", r.test.ci_high},
                 {"t", r.test.t_statistic},
                 {"dof", r.test.dof},
                 {"p_value", r.test.p_value}});
  write_lines(path, j.dump(2) + "\n");
}

void write_ate_csv(const std::string& path, const causal::AteReport& report) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : report.cells)
    rows.push_back({c.estimator, c.outcome, c.dataset, fmt(c.ate)});
  csv::write_file(path, {"estimator", "outcome", "dataset", "ate_mmhg"}, rows);
}

void write_ate_json(const std::string& path, const causal::AteReport& report) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : report.cells)
    j.push_back({{"estimator", c.estimator}, {"outcome", c.outcome}, {"dataset", c.dataset}, {"ate_mmhg", c.ate}});
  write_lines(path, j.dump(2) + "\n");
}

}  // namespace adherence::report
