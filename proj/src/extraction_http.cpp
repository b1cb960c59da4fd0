#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "adherence/extraction.hpp"

namespace adherence::extraction {

namespace {

/// OpenAI-compatible chat endpoint client with bearer auth and
/// exponential backoff on transport errors and rate limits.
class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpBackendConfig config) : config_(std::move(config)) {
    const char* token = std::getenv(config_.token_env.c_str());
    token_ = token ? token : "";
  }

  std::string complete(const std::string& system_message, const std::string& user_message) override {
    const nlohmann::json payload = {
        {"model", config_.model},
        {"temperature", config_.temperature},
        {"messages",
         {{{"role", "system"}, {"content", system_message}},
          {{"role", "user"}, {"content", user_message}}}}};

    httplib::Client client(config_.base_url);
    client.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

    int backoff_ms = config_.backoff_initial_ms;
    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
      auto res = client.Post(config_.path, headers, payload.dump(), "application/json");
      if (res && res->status == 200) {
        const auto body = nlohmann::json::parse(res->body, nullptr, false);
        if (body.is_discarded() || !body.contains("choices") || body["choices"].empty())
          throw ExtractionError("malformed chat-completion response", res->body);
        return body["choices"][0]["message"]["content"].get<std::string>();
      }
      if (res && res->status != 429 && res->status < 500)
        throw ExtractionError("chat-completion request rejected (status " +
                                  std::to_string(res->status) + ")",
                              res->body);
      last_error = res ? "status " + std::to_string(res->status)
                       : "transport error " + httplib::to_string(res.error());
      if (attempt < config_.max_attempts) {
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
        backoff_ms *= 2;
      }
    }
    throw TransportError("backend unreachable after retries: " + last_error, config_.max_attempts);
  }

 private:
  HttpBackendConfig config_;
  std::string token_;
};

}  // namespace

std::unique_ptr<ChatBackend> make_http_backend(const HttpBackendConfig& config) {
  return std::make_unique<HttpChatBackend>(config);
}

}  // namespace adherence::extraction
