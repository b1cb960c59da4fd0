#pragma once

#include <map>
#include <string>
#include <vector>

namespace adherence::topics {

/// Lowercases, splits on non-alphanumeric characters, and drops short
/// tokens (< 3 chars) and stop words.
std::vector<std::string> tokenize(const std::string& text);

/// Excerpts with externally supplied cluster assignments; -1 marks noise
/// and is excluded from scoring.
struct ClusteredCorpus {
  std::vector<std::string> documents;
  std::vector<int> cluster_of;
};

struct ScoredTerm {
  std::string term;
  double score = 0.0;
};

struct ClusterSummary {
  int cluster_id = 0;
  std::size_t n_documents = 0;
  double share = 0.0;  // fraction of clustered (non-noise) documents
  std::vector<ScoredTerm> top_terms;
};

/// Class-based TF-IDF: W(t,c) = tf(t,c) * ln(1 + A / f(t)) with A the
/// average term count per cluster and f(t) the corpus-wide count of t.
/// Returns per-cluster top-k terms, ties broken lexicographically.
std::vector<ClusterSummary> ctfidf_top_terms(const ClusteredCorpus& corpus, std::size_t k);

}  // namespace adherence::topics
