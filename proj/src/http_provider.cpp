// Chat-completion client over cpp-httplib: POST {base_url}/chat/completions.

#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "narrshift/llm_gateway.hpp"

namespace narrshift {
namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix, no trailing slash
};

Endpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint e;
  e.origin = url.substr(0, path_start);
  e.path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!e.path.empty() && e.path.back() == '/') e.path.pop_back();
  return e;
}

class HttpProvider : public Provider {
 public:
  explicit HttpProvider(ProviderConfig config)
      : config_(std::move(config)), endpoint_(split_url(config_.base_url)) {}

  std::string name() const override { return "http"; }

  ChatResponse complete(const ChatRequest& request) override {
    httplib::Client client(endpoint_.origin);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_write_timeout(config_.timeout_seconds, 0);

    httplib::Headers headers;
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key != nullptr && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    nlohmann::json body;
    body["model"] = request.model;
    body["temperature"] = request.temperature;
    body["messages"] = nlohmann::json::array();
    for (const auto& m : request.messages) {
      body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    }

    auto res = client.Post(endpoint_.path + "/chat/completions", headers, body.dump(),
                           "application/json");
    if (!res) {
      throw ProviderFailure(ProviderFailure::Kind::transient,
                            "request failed: " + httplib::to_string(res.error()));
    }
    const int status = res->status;
    if (status == 401 || status == 403) {
      throw ProviderFailure(ProviderFailure::Kind::auth, "HTTP " + std::to_string(status));
    }
    if (status == 408 || status == 429 || status >= 500) {
      throw ProviderFailure(ProviderFailure::Kind::transient, "HTTP " + std::to_string(status));
    }
    if (status < 200 || status >= 300) {
      throw ProviderFailure(ProviderFailure::Kind::fatal,
                            "HTTP " + std::to_string(status) + ": " + res->body.substr(0, 200));
    }

    ChatResponse out;
    try {
      const auto j = nlohmann::json::parse(res->body);
      out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
      if (j.contains("usage") && j["usage"].is_object()) {
        const auto& u = j["usage"];
        out.usage = Usage{u.value("prompt_tokens", 0L), u.value("completion_tokens", 0L)};
      }
    } catch (const nlohmann::json::exception& e) {
      throw ProviderFailure(ProviderFailure::Kind::transient,
                            std::string("malformed completion body: ") + e.what());
    }
    return out;
  }

 private:
  ProviderConfig config_;
  Endpoint endpoint_;
};

}  // namespace

std::shared_ptr<Provider> make_http_provider(const ProviderConfig& config) {
  return std::make_shared<HttpProvider>(config);
}

}  // namespace narrshift
