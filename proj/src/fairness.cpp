#include "adherence/fairness.hpp"

#include <cmath>

#include "adherence/common.hpp"

namespace adherence::fairness {

namespace {

void validate(const GroupOutcomes& o) {
  if (o.group.size() != o.y_true.size() || o.group.size() != o.y_pred.size())
    throw InvalidInputError("fairness: group/label vectors must align");
  if (o.group.empty()) throw InvalidInputError("fairness: no records");
  for (size_t i = 0; i < o.group.size(); ++i)
    if ((o.group[i] & ~1) || (o.y_true[i] & ~1) || (o.y_pred[i] & ~1))
      throw InvalidInputError("fairness: entries must be binary");
}

/// P(pred=1) within the subset selected by `keep`; absent if empty.
std::optional<double> positive_rate(const GroupOutcomes& o, auto keep) {
  long long n = 0, pos = 0;
  for (size_t i = 0; i < o.group.size(); ++i) {
    if (!keep(i)) continue;
    ++n;
    pos += o.y_pred[i];
  }
  if (n == 0) return std::nullopt;
  return static_cast<double>(pos) / static_cast<double>(n);
}

}  // namespace

double demographic_parity_diff(const GroupOutcomes& outcomes) {
  validate(outcomes);
  const auto p1 = positive_rate(outcomes, [&](size_t i) { return outcomes.group[i] == 1; });
  const auto p0 = positive_rate(outcomes, [&](size_t i) { return outcomes.group[i] == 0; });
  if (!p1 || !p0) throw InvalidInputError("demographic_parity_diff: empty group");
  return std::fabs(*p1 - *p0);
}

EqualizedOddsDiffs equalized_odds_diffs(const GroupOutcomes& outcomes) {
  validate(outcomes);
  EqualizedOddsDiffs diffs;
  for (int label : {1, 0}) {
    const auto r1 = positive_rate(outcomes, [&](size_t i) {
      return outcomes.group[i] == 1 && outcomes.y_true[i] == label;
    });
    const auto r0 = positive_rate(outcomes, [&](size_t i) {
      return outcomes.group[i] == 0 && outcomes.y_true[i] == label;
    });
    if (r1 && r0) {
      if (label == 1) diffs.tpr_diff = std::fabs(*r1 - *r0);
      else diffs.fpr_diff = std::fabs(*r1 - *r0);
    }
  }
  return diffs;
}

}  // namespace adherence::fairness
