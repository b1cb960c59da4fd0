#pragma once

#include <optional>
#include <vector>

namespace adherence::fairness {

/// Binary group membership, true label, and predicted label per record.
struct GroupOutcomes {
  std::vector<int> group;      // 1 = focal group
  std::vector<int> y_true;
  std::vector<int> y_pred;
};

/// |P(pred=1 | group=1) - P(pred=1 | group=0)|; both groups must be nonempty.
double demographic_parity_diff(const GroupOutcomes& outcomes);

struct EqualizedOddsDiffs {
  // absent when a (group, label) stratum is empty; never reported as zero
  std::optional<double> tpr_diff;
  std::optional<double> fpr_diff;
};

EqualizedOddsDiffs equalized_odds_diffs(const GroupOutcomes& outcomes);

}  // namespace adherence::fairness
