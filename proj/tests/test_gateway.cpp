#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>

#include "actchain/gateway.hpp"
#include "stub_server.hpp"
#include "test_support.hpp"

using namespace actchain;
using namespace actchain::testing;
using namespace std::chrono_literals;

namespace {

BackendConfig config_for(const StubServer& s) {
  BackendConfig c;
  c.endpoint_url = s.url();
  c.model_name = "stub-model";
  c.temperature = 0.7;
  c.max_retries = 3;
  c.timeout = 2000ms;
  c.api_key_env = "ACTCHAIN_TEST_KEY";
  c.backoff_base = 1ms;
  return c;
}

PromptBundle bundle() {
  PromptBundle b;
  b.system_text = "sys";
  b.user_text = "usr";
  return b;
}

struct KeyGuard {
  KeyGuard() { ::setenv("ACTCHAIN_TEST_KEY", "sk-test", 1); }
  ~KeyGuard() { ::unsetenv("ACTCHAIN_TEST_KEY"); }
};

GatewayError expect_error(const BackendConfig& c) {
  try {
    complete(c, bundle());
  } catch (const GatewayError& e) {
    return e;
  }
  FAIL("complete() did not throw");
  return GatewayError(GatewayErrorKind::configuration, "");
}

}  // namespace

TEST_CASE("retryable statuses") {
  for (int s : {408, 429, 500, 502, 503, 599}) CHECK(is_retryable_status(s));
  for (int s : {200, 400, 401, 403, 404, 422}) CHECK_FALSE(is_retryable_status(s));
}

TEST_CASE("request body") {
  BackendConfig c;
  c.model_name = "m";
  c.temperature = 0.5;
  const auto j = chat_request_body(c, bundle());
  CHECK(j["model"] == "m");
  CHECK(j["temperature"] == 0.5);
  CHECK(j["messages"][0]["role"] == "system");
  CHECK(j["messages"][0]["content"] == "sys");
  CHECK(j["messages"][1]["role"] == "user");
}

TEST_CASE("config validation") {
  BackendConfig c;
  c.model_name = "m";
  c.endpoint_url = "ftp://x";
  CHECK_THROWS_AS(c.validate(), GatewayError);
  c.endpoint_url = "localhost:8000";
  CHECK_THROWS_AS(c.validate(), GatewayError);
  c.endpoint_url = "http://localhost:8000/v1";
  CHECK_NOTHROW(c.validate());
  c.max_retries = -1;
  CHECK_THROWS_AS(c.validate(), GatewayError);
}

TEST_CASE("429 twice then 200 takes three attempts") {
  KeyGuard key;
  StubServer s({{429, "{}"}, {429, "{}"}, {200, StubServer::envelope("[]")}});
  const auto r = complete(config_for(s), bundle());
  CHECK(r.attempts == 3);
  CHECK(r.text == "[]");
  REQUIRE(r.usage);
  CHECK(r.usage->prompt_tokens == 11);
  const auto seen = s.seen();
  REQUIRE(seen.size() == 3);
  CHECK(seen[0].path == "/v1/chat/completions");
  CHECK(seen[0].authorization == "Bearer sk-test");
  CHECK(seen[0].body["model"] == "stub-model");
}

TEST_CASE("5xx and 408 are retried until the budget runs out") {
  KeyGuard key;
  StubServer s({{503, "busy"}});
  auto c = config_for(s);
  c.max_retries = 2;
  const auto e = expect_error(c);
  CHECK(e.kind == GatewayErrorKind::http_status);
  CHECK(e.status == 503);
  CHECK(s.seen().size() == 3);
}

TEST_CASE("other 4xx are final") {
  KeyGuard key;
  for (int status : {400, 404, 422}) {
    StubServer s({{status, "{\"error\":\"no\"}"}, {200, StubServer::envelope("[]")}});
    const auto e = expect_error(config_for(s));
    CHECK(e.kind == GatewayErrorKind::http_status);
    CHECK(e.status == status);
    CHECK(s.seen().size() == 1);
  }
}

TEST_CASE("401 and 403 raise auth errors immediately") {
  KeyGuard key;
  for (int status : {401, 403}) {
    StubServer s({{status, ""}});
    const auto e = expect_error(config_for(s));
    CHECK(e.kind == GatewayErrorKind::auth);
    CHECK(s.seen().size() == 1);
  }
}

TEST_CASE("missing key is a configuration error before any request") {
  ::unsetenv("ACTCHAIN_TEST_KEY");
  StubServer s({{200, StubServer::envelope("[]")}});
  const auto e = expect_error(config_for(s));
  CHECK(e.kind == GatewayErrorKind::configuration);
  CHECK(s.seen().empty());
}

TEST_CASE("no key needed when api_key_env is empty") {
  StubServer s({{200, StubServer::envelope("[1]")}});
  auto c = config_for(s);
  c.api_key_env.clear();
  CHECK(complete(c, bundle()).text == "[1]");
  CHECK(s.seen()[0].authorization.empty());
}

TEST_CASE("malformed envelopes") {
  KeyGuard key;
  for (const std::string body : {"not json", "{}", R"({"choices":[]})", R"({"choices":[{"message":{}}]})",
                                 R"({"choices":[{"message":{"content":""}}]})",
                                 R"({"choices":[{"message":{"content":5}}]})"}) {
    StubServer s({{200, body}});
    const auto e = expect_error(config_for(s));
    CHECK(e.kind == GatewayErrorKind::malformed_envelope);
    CHECK(s.seen().size() == 1);
  }
}

TEST_CASE("unreachable endpoint exhausts retries as a transport error") {
  KeyGuard key;
  BackendConfig c;
  c.endpoint_url = "http://127.0.0.1:1/v1";
  c.model_name = "m";
  c.api_key_env = "ACTCHAIN_TEST_KEY";
  c.max_retries = 1;
  c.backoff_base = 1ms;
  c.timeout = 500ms;
  const auto e = expect_error(c);
  CHECK((e.kind == GatewayErrorKind::transport || e.kind == GatewayErrorKind::timeout_exhausted));
  CHECK(e.attempts == 2);
}

TEST_CASE("rate limiter spaces admissions") {
  RateLimiter limiter(100.0);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 6; ++i) limiter.acquire();
  CHECK(std::chrono::steady_clock::now() - start >= 45ms);
  RateLimiter unlimited;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 1000; ++i) unlimited.acquire();
  CHECK(std::chrono::steady_clock::now() - t0 < 50ms);
}

TEST_CASE("http backend goes through complete()") {
  StubServer s({{200, StubServer::envelope("[{\"type\":1}]")}});
  auto c = config_for(s);
  c.api_key_env.clear();
  HttpBackend backend(c);
  const auto profile = make_profile("p1", Relationship::head);
  const std::optional<Guidance> guidance;
  const auto b = bundle();
  CHECK(backend.generate(GenerationRequest{b, profile, guidance}).text == "[{\"type\":1}]");
}
