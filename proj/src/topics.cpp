#include "adherence/topics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "adherence/common.hpp"

namespace adherence::topics {

namespace {

const std::set<std::string>& stop_words() {
  static const std::set<std::string> kStop = {
      "the", "and", "for", "with", "that", "this", "was", "were", "has", "have",
      "had", "not", "but", "are", "she", "him", "her", "his", "they", "them",
      "their", "been", "from", "will", "would", "there", "what", "when", "which",
      "while", "about", "after", "before", "does", "did", "also", "than", "then",
      "into", "over", "under", "very", "your", "yours", "because", "being", "its"};
  return kStop;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> terms;
  std::string cur;
  auto flush = [&]() {
    if (cur.size() >= 3 && !stop_words().count(cur)) terms.push_back(cur);
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isalnum(c)) cur.push_back(static_cast<char>(std::tolower(c)));
    else flush();
  }
  flush();
  return terms;
}

std::vector<ClusterSummary> ctfidf_top_terms(const ClusteredCorpus& corpus, std::size_t k) {
  if (k < 1) throw InvalidInputError("ctfidf_top_terms: k must be at least 1");
  if (corpus.documents.size() != corpus.cluster_of.size())
    throw InvalidInputError("ctfidf_top_terms: documents and cluster ids must align");

  std::map<int, std::map<std::string, double>> tf;  // cluster -> term counts
  std::map<int, std::size_t> doc_counts;
  std::map<std::string, double> corpus_tf;
  double total_terms = 0.0;

  for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
    const int c = corpus.cluster_of[i];
    if (c < 0) continue;  // noise
    ++doc_counts[c];
    for (const auto& term : tokenize(corpus.documents[i])) {
      tf[c][term] += 1.0;
      corpus_tf[term] += 1.0;
      total_terms += 1.0;
    }
  }
  if (doc_counts.empty()) throw InvalidInputError("ctfidf_top_terms: no non-noise cluster");
  for (const auto& [c, n] : doc_counts)
    if (tf.find(c) == tf.end() || tf.at(c).empty())
      throw InvalidInputError("ctfidf_top_terms: cluster with no terms: " + std::to_string(c));

  const double avg_terms_per_cluster = total_terms / static_cast<double>(tf.size());
  std::size_t clustered_docs = 0;
  for (const auto& [c, n] : doc_counts) clustered_docs += n;

  std::vector<ClusterSummary> out;
  for (const auto& [c, counts] : tf) {
    ClusterSummary summary;
    summary.cluster_id = c;
    summary.n_documents = doc_counts.at(c);
    summary.share = static_cast<double>(doc_counts.at(c)) / static_cast<double>(clustered_docs);
    std::vector<ScoredTerm> scored;
    scored.reserve(counts.size());
    for (const auto& [term, count] : counts) {
      const double w = count * std::log(1.0 + avg_terms_per_cluster / corpus_tf.at(term));
      scored.push_back({term, w});
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredTerm& a, const ScoredTerm& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.term < b.term;
    });
    if (scored.size() > k) scored.resize(k);
    summary.top_terms = std::move(scored);
    out.push_back(std::move(summary));
  }
  return out;
}

}  // namespace adherence::topics
