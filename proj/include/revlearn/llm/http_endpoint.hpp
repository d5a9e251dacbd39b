#pragma once

// OpenAI-compatible chat-completions client. HTTPS needs the including
// target to define CPPHTTPLIB_OPENSSL_SUPPORT and link OpenSSL.

#include <cstdlib>
#include <memory>
#include <regex>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "revlearn/llm/gateway.hpp"

namespace revlearn::llm {

struct ParsedUrl {
  std::string scheme_host_port;  // e.g. https://api.example.com:443
  std::string path;              // prefix without trailing slash
};

inline ParsedUrl parse_base_url(const std::string& url) {
  static const std::regex re(R"(^(https?)://([^/:]+)(:\d+)?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw ConfigError("malformed base url '" + url + "'");
  ParsedUrl p;
  p.scheme_host_port = m[1].str() + "://" + m[2].str() + m[3].str();
  p.path = m[4].str();
  while (!p.path.empty() && p.path.back() == '/') p.path.pop_back();
  return p;
}

inline nlohmann::json chat_request_body(const LlmEndpointConfig& cfg, const std::vector<ChatMessage>& messages) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", cfg.model}, {"messages", msgs}, {"temperature", cfg.temperature}, {"top_p", cfg.top_p}};
}

class HttpChatEndpoint : public ChatEndpoint {
 public:
  explicit HttpChatEndpoint(LlmEndpointConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const ParsedUrl url = parse_base_url(cfg_.base_url);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (url.scheme_host_port.rfind("https", 0) == 0)
      throw ConfigError("this build has no TLS support; use an http:// base url");
#endif
    path_ = url.path + "/chat/completions";
    client_ = std::make_unique<httplib::Client>(url.scheme_host_port);
    const auto secs = static_cast<time_t>(cfg_.timeout_s);
    const auto usecs = static_cast<time_t>((cfg_.timeout_s - static_cast<double>(secs)) * 1e6);
    client_->set_connection_timeout(secs, usecs);
    client_->set_read_timeout(secs, usecs);
    client_->set_write_timeout(secs, usecs);
    if (!cfg_.api_key_env.empty()) {
      const char* key = std::getenv(cfg_.api_key_env.c_str());
      if (key && *key) client_->set_bearer_token_auth(key);
    }
  }

  std::string complete(const std::vector<ChatMessage>& messages) override {
    const std::string body = chat_request_body(cfg_, messages).dump();
    auto res = client_->Post(path_, body, "application/json");
    if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    try {
      const auto j = nlohmann::json::parse(res->body);
      const auto& content = j.at("choices").at(0).at("message").at("content");
      return content.is_null() ? std::string() : content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("unexpected response body: ") + e.what());
    }
  }

  std::string model_id() const override { return cfg_.model; }

 private:
  LlmEndpointConfig cfg_;
  std::string path_;
  std::unique_ptr<httplib::Client> client_;
};

}  // namespace revlearn::llm
