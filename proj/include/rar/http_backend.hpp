#pragma once

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <memory>
#include <string>

#include <json.hpp>

#include "rar/error.hpp"
#include "rar/judge.hpp"

namespace rar {

// OpenAI-style chat-completions client: POST {endpoint}/chat/completions with
// bearer-token auth. Transport failures throw rar::Error so the gateway's
// retry/backoff policy applies.
class RemoteTransport : public JudgeTransport {
 public:
  RemoteTransport(std::string endpoint, std::string model_id, double temperature,
                  std::string api_key)
      : model_id_(std::move(model_id)), temperature_(temperature), api_key_(std::move(api_key)) {
    split_endpoint(endpoint);
  }

  std::string complete(const RenderedPrompt& prompt) override {
    json messages = json::array();
    if (!prompt.system.empty()) {
      messages.push_back(json{{"role", "system"}, {"content", prompt.system}});
    }
    messages.push_back(json{{"role", "user"}, {"content", prompt.user}});
    const json body{{"model", model_id_},
                    {"temperature", temperature_},
                    {"messages", std::move(messages)}};

    httplib::Client client(base_url_);
    client.set_connection_timeout(30);
    client.set_read_timeout(120);
    httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};
    auto result = client.Post(path_prefix_ + "/chat/completions", headers, body.dump(),
                              "application/json");
    if (!result) {
      throw Error("remote judge: " + httplib::to_string(result.error()));
    }
    if (result->status != 200) {
      throw Error("remote judge: HTTP " + std::to_string(result->status) + ": " + result->body);
    }
    try {
      const json response = json::parse(result->body);
      return response.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(std::string("remote judge: unexpected response shape: ") + e.what());
    }
  }

 private:
  void split_endpoint(const std::string& endpoint) {
    const std::size_t scheme = endpoint.find("://");
    if (scheme == std::string::npos) {
      throw ConfigError("remote endpoint must include a scheme: " + endpoint);
    }
    std::size_t path = endpoint.find('/', scheme + 3);
    if (path == std::string::npos) {
      base_url_ = endpoint;
      path_prefix_.clear();
    } else {
      base_url_ = endpoint.substr(0, path);
      path_prefix_ = endpoint.substr(path);
      while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    }
  }

  std::string base_url_;
  std::string path_prefix_;
  std::string model_id_;
  double temperature_;
  std::string api_key_;
};

}  // namespace rar
