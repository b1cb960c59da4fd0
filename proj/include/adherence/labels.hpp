#pragma once

#include <set>
#include <string>
#include <vector>

namespace adherence {

enum class NonAdherenceType { kMissed, kDifferentDose, kDifferentMedication, kDifferentTiming };

inline const char* to_string(NonAdherenceType t) {
  switch (t) {
    case NonAdherenceType::kMissed: return "missed";
    case NonAdherenceType::kDifferentDose: return "different_dose";
    case NonAdherenceType::kDifferentMedication: return "different_medication";
    case NonAdherenceType::kDifferentTiming: return "different_timing";
  }
  return "?";
}

enum class LabelSource { kLlm, kMock, kAnnotation };

inline const char* to_string(LabelSource s) {
  switch (s) {
    case LabelSource::kLlm: return "llm";
    case LabelSource::kMock: return "mock";
    case LabelSource::kAnnotation: return "annotation";
  }
  return "?";
}

/// Adherence determination for one visit pair.
/// Invariant: an adherent label carries no types and no evidence, and
/// every evidence excerpt is a verbatim substring of the source note.
struct AdherenceLabel {
  bool non_adherent = false;
  std::set<NonAdherenceType> types;
  std::vector<std::string> evidence;
  LabelSource source = LabelSource::kMock;

  bool invariants_hold(const std::string& note) const {
    if (!non_adherent && (!types.empty() || !evidence.empty())) return false;
    for (const auto& e : evidence)
      if (note.find(e) == std::string::npos) return false;
    return true;
  }
};

}  // namespace adherence
