#include "actchain/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include <httplib.h>

namespace actchain {
namespace {

struct Endpoint {
  std::string scheme_host_port;
  std::string path_prefix;
};

Endpoint split_endpoint(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw GatewayError(GatewayErrorKind::configuration, "endpoint_url must start with http:// or https://: " + url);
  }
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw GatewayError(GatewayErrorKind::configuration, "unsupported endpoint scheme " + scheme);
  }
  auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  e.scheme_host_port = url.substr(0, path_start);
  e.path_prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!e.path_prefix.empty() && e.path_prefix.back() == '/') e.path_prefix.pop_back();
  return e;
}

std::chrono::milliseconds backoff_delay(const BackendConfig& config, int retry) {
  thread_local std::mt19937_64 jitter_rng{std::random_device{}()};
  std::uniform_real_distribution<double> jitter(0.0, 0.25);
  const double base = static_cast<double>(config.backoff_base.count()) * std::pow(config.backoff_factor, retry - 1);
  return std::chrono::milliseconds(static_cast<long long>(base * (1.0 + jitter(jitter_rng))));
}

std::string body_excerpt(const std::string& body) { return body.size() > 200 ? body.substr(0, 200) + "..." : body; }

}  // namespace

std::string_view gateway_error_kind_name(GatewayErrorKind kind) {
  switch (kind) {
    case GatewayErrorKind::configuration: return "configuration";
    case GatewayErrorKind::auth: return "auth";
    case GatewayErrorKind::http_status: return "http_status";
    case GatewayErrorKind::transport: return "transport";
    case GatewayErrorKind::timeout_exhausted: return "timeout_exhausted";
    case GatewayErrorKind::malformed_envelope: return "malformed_envelope";
  }
  return "unknown";
}

void BackendConfig::validate() const {
  auto fail = [](const std::string& msg) { throw GatewayError(GatewayErrorKind::configuration, msg); };
  if (endpoint_url.empty()) fail("endpoint_url is required for the http backend");
  split_endpoint(endpoint_url);
  if (model_name.empty()) fail("model name is required for the http backend");
  if (!(temperature >= 0.0)) fail("temperature must be >= 0");
  if (max_retries < 0) fail("max_retries must be >= 0");
  if (timeout.count() <= 0) fail("timeout must be positive");
  if (requests_per_second < 0.0) fail("requests_per_second must be >= 0");
  if (backoff_base.count() < 0 || backoff_factor < 1.0) fail("backoff must be non-negative and non-shrinking");
}

bool is_retryable_status(int status) { return status == 408 || status == 429 || (status >= 500 && status <= 599); }

void RateLimiter::set_rate(double requests_per_second) {
  std::lock_guard lock(mutex_);
  interval_ = requests_per_second > 0.0
                  ? std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                        std::chrono::duration<double>(1.0 / requests_per_second))
                  : std::chrono::steady_clock::duration::zero();
}

void RateLimiter::acquire() {
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mutex_);
    if (interval_ == std::chrono::steady_clock::duration::zero()) return;
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

RateLimiter& RateLimiter::process_wide() {
  static RateLimiter limiter;
  return limiter;
}

nlohmann::json chat_request_body(const BackendConfig& config, const PromptBundle& bundle) {
  return {{"model", config.model_name},
          {"temperature", config.temperature},
          {"messages",
           nlohmann::json::array({{{"role", "system"}, {"content", bundle.system_text}},
                                  {{"role", "user"}, {"content", bundle.user_text}}})}};
}

RawCompletion complete(const BackendConfig& config, const PromptBundle& bundle) {
  config.validate();
  std::string api_key;
  if (!config.api_key_env.empty()) {
    const char* key = std::getenv(config.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw GatewayError(GatewayErrorKind::configuration,
                         "environment variable " + config.api_key_env + " holding the API key is not set");
    }
    api_key = key;
  }

  const auto endpoint = split_endpoint(config.endpoint_url);
  const auto path = endpoint.path_prefix + "/chat/completions";
  const auto body = chat_request_body(config, bundle).dump();

  httplib::Client client(endpoint.scheme_host_port);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());
  httplib::Headers headers;
  if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

  const auto started = std::chrono::steady_clock::now();
  std::string last_error;
  bool last_was_timeout = false;
  int last_status = 0;
  const int max_attempts = config.max_retries + 1;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    if (attempt > 1) std::this_thread::sleep_for(backoff_delay(config, attempt - 1));
    RateLimiter::process_wide().acquire();

    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      const auto err = res.error();
      last_was_timeout = err == httplib::Error::Read || err == httplib::Error::Write ||
                         err == httplib::Error::ConnectionTimeout;
      last_error = "transport error: " + httplib::to_string(err);
      last_status = 0;
      continue;
    }
    if (res->status == 401 || res->status == 403) {
      throw GatewayError(GatewayErrorKind::auth, "endpoint rejected credentials (HTTP " +
                                                     std::to_string(res->status) + ")",
                         res->status, attempt);
    }
    if (res->status < 200 || res->status >= 300) {
      last_status = res->status;
      last_error = "HTTP " + std::to_string(res->status) + ": " + body_excerpt(res->body);
      last_was_timeout = false;
      if (is_retryable_status(res->status)) continue;
      throw GatewayError(GatewayErrorKind::http_status, last_error, res->status, attempt);
    }

    auto j = nlohmann::json::parse(res->body, nullptr, false);
    const nlohmann::json* content = nullptr;
    if (!j.is_discarded() && j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
      const auto& choice = j["choices"][0];
      if (choice.is_object() && choice.contains("message") && choice["message"].is_object()) {
        auto it = choice["message"].find("content");
        if (it != choice["message"].end() && it->is_string()) content = &*it;
      }
    }
    if (content == nullptr || content->get_ref<const std::string&>().empty()) {
      throw GatewayError(GatewayErrorKind::malformed_envelope,
                         "chat completion response has no message content: " + body_excerpt(res->body), res->status,
                         attempt);
    }
    RawCompletion out;
    out.text = content->get<std::string>();
    out.attempts = attempt;
    out.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
    if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
      out.usage = TokenUsage{u->value("prompt_tokens", 0), u->value("completion_tokens", 0)};
    }
    return out;
  }
  const auto kind = last_status != 0 ? GatewayErrorKind::http_status
                                     : (last_was_timeout ? GatewayErrorKind::timeout_exhausted
                                                         : GatewayErrorKind::transport);
  throw GatewayError(kind, "gave up after " + std::to_string(max_attempts) + " attempts: " + last_error, last_status,
                     max_attempts);
}

HttpBackend::HttpBackend(BackendConfig config) : config_(std::move(config)) { config_.validate(); }

RawCompletion HttpBackend::generate(const GenerationRequest& request) { return complete(config_, request.bundle); }

MockBackend::MockBackend(MockConfig config, const ReferenceStats& stats) : config_(std::move(config)), stats_(stats) {
  config_.validate();
}

RawCompletion MockBackend::generate(const GenerationRequest& request) {
  return mock_complete(config_, stats_, request.profile, request.guidance, request.context, request.attempt);
}

}  // namespace actchain
