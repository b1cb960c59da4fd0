#include "adherence/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "adherence/common.hpp"
#include "adherence/rng.hpp"

namespace adherence::learners {

namespace {

using cohort::CohortRecord;

std::string medication_of(const CohortRecord& r) {
  // first canonical medication at the first visit, lowercased
  for (const auto& p : r.pair.first.prescriptions) {
    std::string v = p;
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    for (const auto& med : cohort::canonical_medications())
      if (v == med) return med;
  }
  return "none";
}

std::vector<std::string> observed_levels(const std::vector<CohortRecord>& records,
                                         const std::string& field) {
  std::vector<std::string> levels;
  auto add = [&](const std::string& v) {
    if (std::find(levels.begin(), levels.end(), v) == levels.end()) levels.push_back(v);
  };
  for (const auto& r : records) {
    if (field == "sex") add(cohort::to_string(r.sex));
    else if (field == "race") add(cohort::to_string(r.race));
    else if (field == "marital") add(cohort::to_string(r.marital));
    else add(medication_of(r));
  }
  std::sort(levels.begin(), levels.end());
  return levels;
}

}  // namespace

FeatureMatrix encode(const std::vector<CohortRecord>& records,
                     const std::optional<EncodingMetadata>& metadata) {
  if (records.empty()) throw InvalidInputError("encode: no records");

  static const std::vector<std::string> kCategoricalFields = {"sex", "race", "marital", "medication"};
  static const std::vector<std::string> kContinuousFields = {
      "age", "eci_count", "cci_count", "htn_duration_years",
      "primary_visits_prior_year", "first_systolic", "first_diastolic"};

  FeatureMatrix fm;
  if (metadata) {
    fm.metadata = *metadata;
  } else {
    for (const auto& f : kCategoricalFields) fm.metadata.levels[f] = observed_levels(records, f);
  }

  auto level_of = [&](const CohortRecord& r, const std::string& field) -> std::string {
    if (field == "sex") return cohort::to_string(r.sex);
    if (field == "race") return cohort::to_string(r.race);
    if (field == "marital") return cohort::to_string(r.marital);
    return medication_of(r);
  };

  auto continuous_of = [](const CohortRecord& r, const std::string& field) -> double {
    if (field == "age") return r.age;
    if (field == "eci_count") return r.eci_count;
    if (field == "cci_count") return r.cci_count;
    if (field == "htn_duration_years") return r.htn_duration_years;
    if (field == "primary_visits_prior_year") return r.primary_visits_prior_year;
    if (field == "first_systolic") {
      if (!r.pair.first.systolic) throw InvalidInputError("encode: record lacks first-visit systolic");
      return *r.pair.first.systolic;
    }
    if (!r.pair.first.diastolic) throw InvalidInputError("encode: record lacks first-visit diastolic");
    return *r.pair.first.diastolic;
  };

  // column layout: categorical indicators (reference level skipped), then continuous
  std::vector<std::string> names;
  for (const auto& field : kCategoricalFields) {
    const auto& levels = fm.metadata.levels.at(field);
    for (size_t i = 1; i < levels.size(); ++i) names.push_back(field + "=" + levels[i]);
  }
  for (const auto& f : kContinuousFields) names.push_back(f);

  const Eigen::Index n = static_cast<Eigen::Index>(records.size());
  const Eigen::Index p = static_cast<Eigen::Index>(names.size());
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, p);

  for (Eigen::Index row = 0; row < n; ++row) {
    const auto& r = records[row];
    Eigen::Index col = 0;
    for (const auto& field : kCategoricalFields) {
      const auto& levels = fm.metadata.levels.at(field);
      const std::string v = level_of(r, field);
      const auto it = std::find(levels.begin(), levels.end(), v);
      if (it == levels.end())
        throw InvalidInputError("encode: unseen " + field + " level: " + v);
      const size_t idx = static_cast<size_t>(it - levels.begin());
      for (size_t i = 1; i < levels.size(); ++i, ++col)
        if (idx == i) X(row, col) = 1.0;
    }
    for (const auto& f : kContinuousFields) X(row, col++) = continuous_of(r, f);
  }

  // standardize continuous columns with train-time statistics
  const Eigen::Index first_cont = p - static_cast<Eigen::Index>(kContinuousFields.size());
  for (size_t k = 0; k < kContinuousFields.size(); ++k) {
    const Eigen::Index j = first_cont + static_cast<Eigen::Index>(k);
    double center, scale;
    if (metadata) {
      const auto it = fm.metadata.scaling.find(kContinuousFields[k]);
      if (it == fm.metadata.scaling.end())
        throw InvalidInputError("encode: metadata lacks scaling for " + kContinuousFields[k]);
      center = it->second.first;
      scale = it->second.second;
    } else {
      center = X.col(j).mean();
      const double var = (X.col(j).array() - center).square().sum() / static_cast<double>(n);
      scale = var > 0.0 ? std::sqrt(var) : 1.0;
      fm.metadata.scaling[kContinuousFields[k]] = {center, scale};
    }
    X.col(j) = (X.col(j).array() - center) / scale;
  }

  fm.X = std::move(X);
  fm.column_names = std::move(names);
  return fm;
}

// -- forest ------------------------------------------------------------

double DecisionTree::predict(const Eigen::RowVectorXd& x) const {
  int idx = 0;
  while (nodes[idx].feature >= 0)
    idx = (x(nodes[idx].feature) <= nodes[idx].threshold) ? nodes[idx].left : nodes[idx].right;
  return nodes[idx].value;
}

namespace {

struct TreeBuilder {
  const Eigen::MatrixXd& X;
  const Eigen::VectorXd& y;
  bool classification;
  int min_leaf;
  int mtry;
  Rng& rng;
  std::vector<TreeNode> nodes;
  std::vector<int> work;  // row indices, partitioned in place

  // impurity decrease surrogate: for Gini and variance alike, maximizing
  // sum over children of (sum y)^2 / count is equivalent
  static double score(double sum, double count) { return count > 0 ? sum * sum / count : 0.0; }

  int build(int begin, int end) {
    const int node_id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    const int count = end - begin;
    double sum = 0.0;
    for (int i = begin; i < end; ++i) sum += y(work[i]);
    const double mean = sum / count;

    bool pure = true;
    for (int i = begin; i < end && pure; ++i)
      if (y(work[i]) != y(work[begin])) pure = false;

    if (pure || count < 2 * min_leaf) {
      nodes[node_id].value = mean;
      return node_id;
    }

    const double parent = score(sum, count);
    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;

    const auto features = rng.sample_without_replacement(static_cast<size_t>(X.cols()),
                                                         static_cast<size_t>(mtry));
    std::vector<std::pair<double, double>> vals(static_cast<size_t>(count));
    for (size_t f = 0; f < features.size(); ++f) {
      const int feature = static_cast<int>(features[f]);
      for (int i = begin; i < end; ++i)
        vals[static_cast<size_t>(i - begin)] = {X(work[i], feature), y(work[i])};
      std::sort(vals.begin(), vals.end());
      double left_sum = 0.0;
      for (int i = 0; i + 1 < count; ++i) {
        left_sum += vals[static_cast<size_t>(i)].second;
        const int left_n = i + 1;
        if (left_n < min_leaf || count - left_n < min_leaf) continue;
        if (vals[static_cast<size_t>(i)].first == vals[static_cast<size_t>(i + 1)].first) continue;
        const double gain = score(left_sum, left_n) + score(sum - left_sum, count - left_n) - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = feature;
          best_threshold = 0.5 * (vals[static_cast<size_t>(i)].first + vals[static_cast<size_t>(i + 1)].first);
        }
      }
    }

    if (best_feature < 0) {
      nodes[node_id].value = mean;
      return node_id;
    }

    const auto mid = std::partition(work.begin() + begin, work.begin() + end,
                                    [&](int row) { return X(row, best_feature) <= best_threshold; });
    const int split = static_cast<int>(mid - work.begin());
    if (split == begin || split == end) {  // numeric ties collapsed the split
      nodes[node_id].value = mean;
      return node_id;
    }
    nodes[node_id].feature = best_feature;
    nodes[node_id].threshold = best_threshold;
    const int left = build(begin, split);
    const int right = build(split, end);
    nodes[node_id].left = left;
    nodes[node_id].right = right;
    return node_id;
  }
};

/// Canonical row order: lexicographic by feature vector then label, so
/// fits are independent of caller row order.
std::vector<int> canonical_order(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  std::vector<int> order(static_cast<size_t>(X.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (X(a, j) != X(b, j)) return X(a, j) < X(b, j);
    }
    return y(a) < y(b);
  });
  return order;
}

}  // namespace

ForestModel ForestModel::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Task task,
                             const ForestConfig& config) {
  const Eigen::Index n = X.rows();
  if (n != y.size()) throw InvalidInputError("forest: X and y sizes differ");
  if (n < 2) throw InvalidInputError("forest: need at least two rows");
  if (task == Task::kClassification) {
    bool has0 = false, has1 = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (y(i) == 0.0) has0 = true;
      else if (y(i) == 1.0) has1 = true;
      else throw InvalidInputError("forest: classification labels must be binary");
    }
    if (!has0 || !has1) throw InvalidInputError("forest: single-class labels");
  }

  ForestModel model;
  model.task_ = task;
  model.config_ = config;
  if (model.config_.features_per_split <= 0)
    model.config_.features_per_split =
        static_cast<int>(std::ceil(std::sqrt(static_cast<double>(X.cols()))));
  model.config_.features_per_split =
      std::min<int>(model.config_.features_per_split, static_cast<int>(X.cols()));

  const std::vector<int> order = canonical_order(X, y);
  model.trees_.resize(static_cast<size_t>(model.config_.n_trees));
  for (int t = 0; t < model.config_.n_trees; ++t) {
    Rng rng(Rng::mix(config.seed, static_cast<uint64_t>(t)));
    TreeBuilder builder{X, y, task == Task::kClassification, model.config_.min_leaf,
                        model.config_.features_per_split, rng, {}, {}};
    builder.work.resize(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      builder.work[static_cast<size_t>(i)] = order[rng.uniform_int(static_cast<uint64_t>(n))];
    builder.build(0, static_cast<int>(n));
    model.trees_[static_cast<size_t>(t)].nodes = std::move(builder.nodes);
  }
  return model;
}

Eigen::VectorXd ForestModel::predict(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Eigen::RowVectorXd row = X.row(i);
    double acc = 0.0;
    for (const auto& tree : trees_) acc += tree.predict(row);
    out(i) = acc / static_cast<double>(trees_.size());
  }
  return out;
}

std::string ForestModel::to_text() const {
  nlohmann::json j;
  j["task"] = task_ == Task::kClassification ? "classification" : "regression";
  j["n_trees"] = config_.n_trees;
  j["min_leaf"] = config_.min_leaf;
  j["features_per_split"] = config_.features_per_split;
  j["seed"] = config_.seed;
  auto& trees = j["trees"] = nlohmann::json::array();
  for (const auto& tree : trees_) {
    nlohmann::json t = nlohmann::json::array();
    for (const auto& n : tree.nodes)
      t.push_back({n.feature, n.threshold, n.left, n.right, n.value});
    trees.push_back(std::move(t));
  }
  return j.dump();
}

ForestModel ForestModel::from_text(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ForestModel model;
  model.task_ = j.at("task") == "classification" ? Task::kClassification : Task::kRegression;
  model.config_.n_trees = j.at("n_trees");
  model.config_.min_leaf = j.at("min_leaf");
  model.config_.features_per_split = j.at("features_per_split");
  model.config_.seed = j.at("seed");
  for (const auto& t : j.at("trees")) {
    DecisionTree tree;
    for (const auto& n : t) {
      TreeNode node;
      node.feature = n.at(0);
      node.threshold = n.at(1);
      node.left = n.at(2);
      node.right = n.at(3);
      node.value = n.at(4);
      tree.nodes.push_back(node);
    }
    model.trees_.push_back(std::move(tree));
  }
  return model;
}

// -- scoring ----------------------------------------------------------------

double auroc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
  const Eigen::Index n = scores.size();
  if (n != labels.size()) throw InvalidInputError("auroc: size mismatch");
  Eigen::Index n_pos = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (labels(i) != 0.0 && labels(i) != 1.0) throw InvalidInputError("auroc: labels must be binary");
    if (labels(i) == 1.0) ++n_pos;
  }
  const Eigen::Index n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw InvalidInputError("auroc: both classes required");

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return scores(a) < scores(b); });

  // midranks over tie groups; rank sum of positives gives the U statistic
  double rank_sum_pos = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t jj = i;
    while (jj + 1 < order.size() && scores(order[jj + 1]) == scores(order[i])) ++jj;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(jj + 1));
    for (size_t k = i; k <= jj; ++k)
      if (labels(order[k]) == 1.0) rank_sum_pos += midrank;
    i = jj + 1;
  }
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

Eigen::VectorXd classify(const Eigen::VectorXd& scores, double threshold) {
  Eigen::VectorXd out(scores.size());
  for (Eigen::Index i = 0; i < scores.size(); ++i) out(i) = scores(i) >= threshold ? 1.0 : 0.0;
  return out;
}

LogisticClassifier LogisticClassifier::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Eigen::MatrixXd Xi(X.rows(), X.cols() + 1);
  Xi.col(0).setOnes();
  Xi.rightCols(X.cols()) = X;
  LogisticClassifier clf;
  try {
    clf.coefficients_ = stats::fit_logistic(Xi, y).coefficients;
  } catch (const stats::SeparationError& e) {
    clf.coefficients_ = e.last_iterate;
  }
  return clf;
}

Eigen::VectorXd LogisticClassifier::predict_proba(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd Xi(X.rows(), X.cols() + 1);
  Xi.col(0).setOnes();
  Xi.rightCols(X.cols()) = X;
  const Eigen::VectorXd eta = Xi * coefficients_;
  Eigen::VectorXd out(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) out(i) = 1.0 / (1.0 + std::exp(-eta(i)));
  return out;
}

}  // namespace adherence::learners
