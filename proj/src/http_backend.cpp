// SPDX-License-Identifier: Apache-2.0
#include <httplib.h>

#include <thread>

#include "april/errors.hpp"
#include "april/llm_backend.hpp"

namespace april {

using nlohmann::json;

namespace {

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint URL '" + url + "' lacks a scheme");
  auto path_begin = url.find('/', scheme_end + 3);
  if (path_begin == std::string::npos) return {url, "/"};
  return {url.substr(0, path_begin), url.substr(path_begin)};
}

bool retryable_status(int status) { return status >= 500 || status == 429 || status == 408; }

}  // namespace

HttpBackend::HttpBackend(HttpBackendConfig config, Sleeper sleeper)
    : ChatBackend(config.max_in_flight), config_(std::move(config)), sleeper_(std::move(sleeper)) {
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  split_url(config_.url);
}

json HttpBackend::request_body(const HttpBackendConfig& config, const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
  }
  json body = {{"model", config.model},
               {"messages", messages},
               {"temperature", request.params.temperature},
               {"top_p", request.params.top_p},
               {"max_tokens", request.params.max_output_tokens}};
  if (request.params.seed) body["seed"] = *request.params.seed;
  return body;
}

ChatResponse HttpBackend::do_complete(const ChatRequest& request) {
  SplitUrl url = split_url(config_.url);
  httplib::Client client(url.base);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  std::string body = request_body(config_, request).dump();

  std::string last_error;
  for (int attempt = 0; attempt <= config_.retry.max_retries; ++attempt) {
    if (attempt > 0) sleeper_(config_.retry.delay_before_retry(attempt - 1));
    auto started = std::chrono::steady_clock::now();
    auto res = client.Post(url.path, headers, body, "application/json");
    auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
    if (!res) {
      last_error = "transport failure: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      if (retryable_status(res->status)) continue;
      throw TransportError(last_error + " from " + config_.url);
    }

    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw TransportError(std::string("malformed completion body: ") + e.what());
    }
    std::string content;
    try {
      content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
      throw BackendRefusal("completion carries no message content");
    }
    if (trim(content).empty()) throw BackendRefusal("completion content is empty");

    ChatResponse out{std::move(content), id(), latency, std::nullopt};
    if (reply.contains("usage")) {
      const json& u = reply.at("usage");
      out.token_usage = TokenUsage{u.value("prompt_tokens", std::size_t{0}), u.value("completion_tokens", std::size_t{0})};
    }
    return out;
  }
  throw TransportError(last_error + " after " + std::to_string(config_.retry.max_retries) + " retries");
}

}  // namespace april
