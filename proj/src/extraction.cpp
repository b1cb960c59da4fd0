#include "adherence/extraction.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <mutex>
#include <sstream>
#include <thread>

#include "adherence/common.hpp"

namespace adherence::extraction {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

struct Rule {
  const char* phrase;
  NonAdherenceType type;
};

constexpr Rule kRules[] = {
    {"ran out", NonAdherenceType::kMissed},
    {"did not refill", NonAdherenceType::kMissed},
    {"stopped taking", NonAdherenceType::kMissed},
    {"has not been taking", NonAdherenceType::kMissed},
    {"took half", NonAdherenceType::kDifferentDose},
    {"half the prescribed dose", NonAdherenceType::kDifferentDose},
    {"doubled the dose", NonAdherenceType::kDifferentDose},
    {"switched to", NonAdherenceType::kDifferentMedication},
    {"at night instead", NonAdherenceType::kDifferentTiming},
    {"instead of the morning", NonAdherenceType::kDifferentTiming},
};

/// Sentence containing position `pos` (split on '.', newline).
std::string sentence_around(const std::string& text, size_t pos) {
  size_t begin = 0;
  for (size_t i = pos; i > 0; --i) {
    if (text[i - 1] == '.' || text[i - 1] == '\n') {
      begin = i;
      break;
    }
  }
  size_t end = text.size();
  for (size_t i = pos; i < text.size(); ++i) {
    if (text[i] == '.' || text[i] == '\n') {
      end = i;
      break;
    }
  }
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  return text.substr(begin, end - begin);
}

const std::string kNoteMarker = "CLINICAL NOTE:\n";
const std::string kEndMarker = "\nEND OF NOTE";

/// The mock backend re-derives the note from the prompt text.
std::string note_from_prompt(const std::string& prompt) {
  const size_t begin = prompt.find(kNoteMarker);
  if (begin == std::string::npos) return "";
  const size_t start = begin + kNoteMarker.size();
  const size_t end = prompt.find(kEndMarker, start);
  if (end == std::string::npos) return prompt.substr(start);
  return prompt.substr(start, end - start);
}

AdherenceLabel apply_rules(const std::string& note) {
  AdherenceLabel label;
  label.source = LabelSource::kMock;
  const std::string folded = lower(note);
  for (const auto& rule : kRules) {
    const size_t pos = folded.find(rule.phrase);
    if (pos == std::string::npos) continue;
    label.non_adherent = true;
    label.types.insert(rule.type);
    const std::string evidence = sentence_around(note, pos);
    if (std::find(label.evidence.begin(), label.evidence.end(), evidence) == label.evidence.end())
      label.evidence.push_back(evidence);
  }
  return label;
}

}  // namespace

std::string render_system_message() {
  return "You review primary-care notes for medication adherence. "
         "Answer only in the exact key-value format requested.";
}

std::string render_prompt(const ExtractionRequest& request) {
  if (request.prescription_text.empty())
    throw InvalidInputError("render_prompt: empty prescription text");
  if (request.note_text.empty()) throw InvalidInputError("render_prompt: empty note text");
  std::ostringstream out;
  out << "A patient was prescribed the following at their previous visit:\n"
      << "PRESCRIPTION: " << request.prescription_text << "\n\n"
      << "Below is the clinical note from the follow-up visit.\n"
      << kNoteMarker << request.note_text << kEndMarker << "\n\n"
      << "Determine whether the note documents non-adherence to the prescription. "
      << "Non-adherence categories: missed, different_dose, different_medication, different_timing.\n"
      << "Report verbatim excerpts from the note that support your determination.\n\n"
      << "Answer in exactly this format (no other text):\n"
      << "NON_ADHERENT: yes|no\n"
      << "TYPES: comma-separated categories, or none\n"
      << "EVIDENCE: one verbatim excerpt per EVIDENCE line, omit if adherent\n";
  return out.str();
}

std::string render_verification_prompt(const ExtractionRequest& request, const std::string& first_reply) {
  std::ostringstream out;
  out << render_prompt(request) << "\nYour previous answer was:\n"
      << first_reply << "\n"
      << "Double-check this answer against the note. Correct any category or excerpt "
      << "that is not supported verbatim, then answer again in the same format.\n";
  return out.str();
}

std::string format_reply(const AdherenceLabel& label) {
  std::ostringstream out;
  out << "NON_ADHERENT: " << (label.non_adherent ? "yes" : "no") << "\n";
  out << "TYPES: ";
  if (label.types.empty()) {
    out << "none";
  } else {
    bool first = true;
    for (const auto t : label.types) {
      if (!first) out << ", ";
      out << to_string(t);
      first = false;
    }
  }
  out << "\n";
  for (const auto& e : label.evidence) out << "EVIDENCE: " << e << "\n";
  return out.str();
}

std::string MockBackend::complete(const std::string& /*system_message*/, const std::string& user_message) {
  const bool is_verification = user_message.find("Double-check this answer") != std::string::npos;
  if (is_verification) {
    if (forced_verify_reply) {
      const std::string reply = *forced_verify_reply;
      forced_verify_reply.reset();
      return reply;
    }
    AdherenceLabel label = apply_rules(note_from_prompt(user_message));
    if (flip_on_verify) {
      label.non_adherent = !label.non_adherent;
      label.types.clear();
      label.evidence.clear();
    }
    return format_reply(label);
  }
  if (forced_reply) {
    const std::string reply = *forced_reply;
    forced_reply.reset();
    return reply;
  }
  return format_reply(apply_rules(note_from_prompt(user_message)));
}

AdherenceLabel parse_reply(const std::string& reply, const std::string& note_text, LabelSource source) {
  AdherenceLabel label;
  label.source = source;
  bool saw_flag = false, saw_types = false;
  std::istringstream in(reply);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("NON_ADHERENT:", 0) == 0) {
      const std::string v = lower(line.substr(13));
      if (v.find("yes") != std::string::npos) label.non_adherent = true;
      else if (v.find("no") != std::string::npos) label.non_adherent = false;
      else throw ExtractionError("unparseable NON_ADHERENT value", reply);
      saw_flag = true;
    } else if (line.rfind("TYPES:", 0) == 0) {
      saw_types = true;
      std::string rest = line.substr(6);
      std::replace(rest.begin(), rest.end(), ',', ' ');
      std::istringstream ts(rest);
      std::string tok;
      while (ts >> tok) {
        const std::string t = lower(tok);
        if (t == "none") continue;
        if (t == "missed") label.types.insert(NonAdherenceType::kMissed);
        else if (t == "different_dose") label.types.insert(NonAdherenceType::kDifferentDose);
        else if (t == "different_medication") label.types.insert(NonAdherenceType::kDifferentMedication);
        else if (t == "different_timing") label.types.insert(NonAdherenceType::kDifferentTiming);
        else throw ExtractionError("unknown non-adherence type: " + tok, reply);
      }
    } else if (line.rfind("EVIDENCE:", 0) == 0) {
      std::string e = line.substr(9);
      while (!e.empty() && std::isspace(static_cast<unsigned char>(e.front()))) e.erase(e.begin());
      if (!e.empty()) label.evidence.push_back(e);
    }
  }
  if (!saw_flag || !saw_types) throw ExtractionError("reply missing required lines", reply);
  for (const auto& e : label.evidence)
    if (note_text.find(e) == std::string::npos)
      throw ExtractionError("evidence excerpt not found in note: " + e, reply);
  if (!label.non_adherent) {
    // adherent labels carry no types and no evidence
    if (!label.types.empty()) throw ExtractionError("adherent reply lists types", reply);
    label.evidence.clear();
  }
  return label;
}

AdherenceLabel extract_adherence(const ExtractionRequest& request, ChatBackend& backend) {
  const std::string prompt = render_prompt(request);
  const std::string system = render_system_message();
  std::string reply = backend.complete(system, prompt);
  try {
    return parse_reply(reply, request.note_text, LabelSource::kLlm);
  } catch (const ExtractionError&) {
    // one repair retry with an explicit format reminder
    const std::string retry_prompt =
        prompt + "\nYour previous reply did not follow the format. Answer again using only the "
                 "NON_ADHERENT / TYPES / EVIDENCE lines.\n";
    reply = backend.complete(system, retry_prompt);
    return parse_reply(reply, request.note_text, LabelSource::kLlm);
  }
}

ExtractionOutcome verify_round_two(const ExtractionRequest& request, const AdherenceLabel& first_label,
                                   ChatBackend& backend) {
  ExtractionOutcome outcome;
  outcome.raw_first_reply = format_reply(first_label);
  const std::string prompt = render_verification_prompt(request, outcome.raw_first_reply);
  outcome.raw_second_reply = backend.complete(render_system_message(), prompt);
  try {
    outcome.label = parse_reply(outcome.raw_second_reply, request.note_text, first_label.source);
    outcome.verified = true;
  } catch (const ExtractionError&) {
    outcome.label = first_label;  // keep round one, flagged as unverified
    outcome.verified = false;
  }
  return outcome;
}

std::vector<std::pair<std::string, ExtractionOutcome>> extract_all(
    const std::vector<ExtractionRequest>& requests,
    const std::function<std::unique_ptr<ChatBackend>()>& backend_factory, int max_in_flight) {
  if (max_in_flight < 1) throw InvalidInputError("extract_all: max_in_flight must be positive");
  std::vector<std::pair<std::string, ExtractionOutcome>> results(requests.size());
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    auto backend = backend_factory();
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= requests.size() || failed.load()) return;
      try {
        const AdherenceLabel first = extract_adherence(requests[i], *backend);
        results[i] = {requests[i].pair_id, verify_round_two(requests[i], first, *backend)};
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) first_error = e.what();
        return;
      }
    }
  };

  const int n_threads = std::min<int>(max_in_flight, static_cast<int>(requests.size()));
  std::vector<std::thread> threads;
  for (int i = 0; i < std::max(1, n_threads); ++i) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failed.load()) throw ExtractionError("extraction failed: " + first_error, "");
  return results;
}

ValidationMetrics score_against_annotations(const std::vector<AdherenceLabel>& predicted,
                                            const std::vector<AdherenceLabel>& gold) {
  if (predicted.size() != gold.size())
    throw InvalidInputError("score_against_annotations: length mismatch");
  ValidationMetrics m;
  for (size_t i = 0; i < predicted.size(); ++i) {
    const bool p = predicted[i].non_adherent;
    const bool g = gold[i].non_adherent;
    if (p && g) ++m.tp;
    else if (p && !g) ++m.fp;
    else if (!p && g) ++m.fn;
    else ++m.tn;
  }
  const long long total = m.tp + m.fp + m.fn + m.tn;
  if (total > 0) m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(total);
  if (m.tp + m.fp > 0) m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
  if (m.tp + m.fn > 0) m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  return m;
}

}  // namespace adherence::extraction
