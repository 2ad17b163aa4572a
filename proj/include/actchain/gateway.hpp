#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "actchain/domain.hpp"
#include "actchain/feedback.hpp"
#include "actchain/household.hpp"
#include "actchain/prompt.hpp"
#include "actchain/stats.hpp"

namespace actchain {

// ---- remote backend (OpenAI-compatible chat completions) ----

struct BackendConfig {
  std::string endpoint_url;  // base URL; requests go to {endpoint_url}/chat/completions
  std::string model_name;
  double temperature = 1.0;
  int max_retries = 3;
  std::chrono::milliseconds timeout{60'000};
  // Environment variable holding the bearer token; empty when the endpoint needs none.
  std::string api_key_env;
  double requests_per_second = 0.0;  // process-wide admission rate, 0 = unlimited
  std::chrono::milliseconds backoff_base{1'000};
  double backoff_factor = 2.0;

  // Throws GatewayError(configuration) on invalid values.
  void validate() const;
};

struct TokenUsage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct RawCompletion {
  std::string text;
  std::optional<TokenUsage> usage;
  std::chrono::milliseconds latency{0};
  int attempts = 1;
};

enum class GatewayErrorKind { configuration, auth, http_status, transport, timeout_exhausted, malformed_envelope };
std::string_view gateway_error_kind_name(GatewayErrorKind kind);

struct GatewayError : std::runtime_error {
  GatewayErrorKind kind;
  int status = 0;
  int attempts = 0;
  GatewayError(GatewayErrorKind kind_, const std::string& message, int status_ = 0, int attempts_ = 0)
      : std::runtime_error(message), kind(kind_), status(status_), attempts(attempts_) {}
};

// 408, 429 and 5xx are retried; any other 4xx is final.
bool is_retryable_status(int status);

// Spaces request admissions at a fixed rate. Thread safe.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second = 0.0) { set_rate(requests_per_second); }
  void set_rate(double requests_per_second);
  void acquire();

  static RateLimiter& process_wide();

 private:
  std::mutex mutex_;
  std::chrono::steady_clock::duration interval_{0};
  std::chrono::steady_clock::time_point next_{};
};

// Sends the system and user messages and returns the first choice's content.
// Retries transport failures and retryable statuses with exponential backoff
// plus jitter, up to max_retries extra attempts. Admission goes through the
// process-wide rate limiter.
RawCompletion complete(const BackendConfig& config, const PromptBundle& bundle);

// Request body for the chat-completions endpoint.
nlohmann::json chat_request_body(const BackendConfig& config, const PromptBundle& bundle);

// ---- deterministic mock backend ----

struct MockConfig {
  std::uint64_t seed = 0;
  // Probability that a reply to an agreed joint activity misses its counterpart.
  double hallucination_rate = 0.0;
  // Probability that a length named by guidance is followed.
  double guidance_compliance = 1.0;
  // Overrides the reference length distribution (13 bins: 1..12 and 13+).
  std::optional<Distribution> length_bias;

  void validate() const;
};

// Samples a wire-format chain from the reference statistics. Deterministic in
// (seed, agent_id, attempt). Agreed joint activities from the context are
// reproduced unless the reply is made phantom (shifted or retyped).
RawCompletion mock_complete(const MockConfig& mock, const ReferenceStats& stats, const SocioProfile& profile,
                            const std::optional<Guidance>& guidance, const HouseholdContext* household_context,
                            int attempt = 0);

// ---- reply parsing ----

struct ParseFailure : std::runtime_error {
  // Stable machine-readable reason: empty_reply, no_json_array, invalid_json,
  // empty_chain, missing_field, bad_field_type, code_out_of_range,
  // bad_time_format, unknown_participant, semantic_violation:<kind>.
  std::string code;
  ParseFailure(std::string code_, const std::string& detail) : std::runtime_error(detail), code(std::move(code_)) {}
};

// First well-formed, non-empty JSON array of objects in the text (code fences
// and surrounding prose are ignored; trailing commas and smart quotes are
// repaired). Throws ParseFailure when there is none.
nlohmann::json extract_chain_array(std::string_view text);

// Parses the wire schema into a validated chain for `owner`. Participants are
// resolved by id, case-insensitive id, or a unique relationship name; the
// owner listing themself is dropped. Throws ParseFailure.
ActivityChain parse_completion(const RawCompletion& raw, const Household& household, std::string_view owner);

// ---- backends behind one interface ----

struct GenerationRequest {
  const PromptBundle& bundle;
  const SocioProfile& profile;
  const std::optional<Guidance>& guidance;
  const HouseholdContext* context = nullptr;
  // Distinguishes retries and regenerations for the same agent.
  int attempt = 0;
};

class ChainBackend {
 public:
  virtual ~ChainBackend() = default;
  virtual RawCompletion generate(const GenerationRequest& request) = 0;
};

class HttpBackend final : public ChainBackend {
 public:
  explicit HttpBackend(BackendConfig config);
  RawCompletion generate(const GenerationRequest& request) override;

 private:
  BackendConfig config_;
};

class MockBackend final : public ChainBackend {
 public:
  MockBackend(MockConfig config, const ReferenceStats& stats);
  RawCompletion generate(const GenerationRequest& request) override;

 private:
  MockConfig config_;
  const ReferenceStats& stats_;
};

}  // namespace actchain
