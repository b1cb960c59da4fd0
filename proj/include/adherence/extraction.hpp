#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "adherence/labels.hpp"

namespace adherence::extraction {

class ExtractionError : public std::runtime_error {
 public:
  ExtractionError(const std::string& what, std::string raw_reply)
      : std::runtime_error(what), raw_reply(std::move(raw_reply)) {}
  std::string raw_reply;
};

class TransportError : public std::runtime_error {
 public:
  TransportError(const std::string& what, int attempts)
      : std::runtime_error(what), attempts(attempts) {}
  int attempts;
};

struct ExtractionRequest {
  std::string prescription_text;
  std::string note_text;
  std::string pair_id;
};

/// Chat-completion backend: system + user message in, reply text out.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const std::string& system_message, const std::string& user_message) = 0;
};

/// Deterministic offline backend driven by a phrase rule table:
///   "ran out" / "did not refill" / "stopped taking" / "has not been taking"
///       -> missed
///   "took half" / "half the prescribed dose" / "doubled the dose"
///       -> different_dose
///   "switched to"                      -> different_medication
///   "at night instead" / "instead of the morning" -> different_timing
/// Anything else is adherent. Evidence is the sentence containing the
/// matched phrase.
class MockBackend : public ChatBackend {
 public:
  std::string complete(const std::string& system_message, const std::string& user_message) override;

  /// Test hooks: force the next first-round reply, or make the
  /// verification round flip the non-adherence flag.
  std::optional<std::string> forced_reply;
  bool flip_on_verify = false;
  std::optional<std::string> forced_verify_reply;
};

/// HTTP chat-completion client (bearer token read from the environment
/// variable named by `token_env`). Retries transport failures with
/// exponential backoff starting at one second.
struct HttpBackendConfig {
  std::string base_url;            // e.g. https://host:443
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-4o";
  std::string token_env = "ADHERENCE_API_TOKEN";
  double temperature = 0.0;
  int max_attempts = 3;
  int backoff_initial_ms = 1000;
};

std::unique_ptr<ChatBackend> make_http_backend(const HttpBackendConfig& config);

/// Deterministic prompt: prescription record, note, the four type names,
/// and the machine-parseable reply schema.
std::string render_prompt(const ExtractionRequest& request);

std::string render_system_message();

/// Second-round instruction wrapping the first answer.
std::string render_verification_prompt(const ExtractionRequest& request, const std::string& first_reply);

/// Serialize a label into the reply schema (used for round-two payloads).
std::string format_reply(const AdherenceLabel& label);

/// Parse a NON_ADHERENT / TYPES / EVIDENCE reply block. Evidence lines
/// that are not substrings of the note are rejected.
AdherenceLabel parse_reply(const std::string& reply, const std::string& note_text, LabelSource source);

struct ExtractionOutcome {
  AdherenceLabel label;
  std::string raw_first_reply;
  std::string raw_second_reply;
  bool verified = false;  // false when round two failed and round one stands
};

/// One extraction round with a single repair retry on parse failure.
AdherenceLabel extract_adherence(const ExtractionRequest& request, ChatBackend& backend);

/// Round-two validation: feeds the first answer back with a double-check
/// instruction; the returned label is the pipeline's final label. When
/// the second reply cannot be parsed, the first label is preserved and
/// `verified` stays false.
ExtractionOutcome verify_round_two(const ExtractionRequest& request, const AdherenceLabel& first_label,
                                   ChatBackend& backend);

/// Full pipeline (round one + round two) over many requests with a
/// bounded number of in-flight requests; results keyed by pair id.
std::vector<std::pair<std::string, ExtractionOutcome>> extract_all(
    const std::vector<ExtractionRequest>& requests, const std::function<std::unique_ptr<ChatBackend>()>& backend_factory,
    int max_in_flight = 4);

struct ValidationMetrics {
  long long tp = 0, fp = 0, fn = 0, tn = 0;
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
};

/// Confusion counts against annotator labels, aligned by position
/// (callers align by pair id). Positive class is non-adherent.
ValidationMetrics score_against_annotations(const std::vector<AdherenceLabel>& predicted,
                                            const std::vector<AdherenceLabel>& gold);

}  // namespace adherence::extraction
