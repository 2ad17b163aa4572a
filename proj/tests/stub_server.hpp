#pragma once

#include <deque>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace actchain::testing {

// Chat-completions endpoint replaying scripted responses in order; the last
// one repeats once the script runs out.
class StubServer {
 public:
  struct Reply {
    int status = 200;
    std::string body;
  };
  struct Seen {
    std::string path;
    std::string authorization;
    nlohmann::json body;
  };

  static std::string envelope(const std::string& content) {
    return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}},
                          {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 7}}}}
        .dump();
  }

  explicit StubServer(std::vector<Reply> script) : script_(script.begin(), script.end()) {
    server_.Post(R"(.*/chat/completions)", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mutex_);
      seen_.push_back({req.path, req.get_header_value("Authorization"), nlohmann::json::parse(req.body, nullptr, false)});
      Reply r = script_.front();
      if (script_.size() > 1) script_.pop_front();
      res.status = r.status;
      res.set_content(r.body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string url(const std::string& prefix = "/v1") const {
    return "http://127.0.0.1:" + std::to_string(port_) + prefix;
  }
  std::vector<Seen> seen() const {
    std::lock_guard lock(mutex_);
    return seen_;
  }

 private:
  httplib::Server server_;
  mutable std::mutex mutex_;
  std::deque<Reply> script_;
  std::vector<Seen> seen_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace actchain::testing
