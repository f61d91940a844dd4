#include <fmt/format.h>

#include <atomic>

#include "cbforge/errors.hpp"
#include "cbforge/llm_gateway.hpp"
#include "httplib.h"
#include "json.hpp"

namespace cbforge {
namespace {

std::atomic<std::size_t> g_instances{0};

}  // namespace

HttpBackend::HttpBackend(std::string endpoint, std::string api_key, std::chrono::seconds timeout)
    : endpoint_(std::move(endpoint)), api_key_(std::move(api_key)), timeout_(timeout) {
  g_instances.fetch_add(1);
  const auto scheme_end = endpoint_.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError(fmt::format("endpoint '{}' needs an http:// or https:// scheme", endpoint_));
  }
  const auto path_start = endpoint_.find('/', scheme_end + 3);
  scheme_host_ = endpoint_.substr(0, path_start);
  path_ = path_start == std::string::npos ? "" : endpoint_.substr(path_start);
  while (!path_.empty() && path_.back() == '/') path_.pop_back();
  path_ += "/chat/completions";
}

HttpBackend::~HttpBackend() = default;

std::size_t HttpBackend::instances() { return g_instances.load(); }

BackendReply HttpBackend::send(const ChatRequest& req) {
  nlohmann::json body;
  body["model"] = req.model;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", req.prompt}}});
  body["temperature"] = req.temperature;
  body["max_tokens"] = req.max_tokens;
  if (req.seed_hint) body["seed"] = *req.seed_hint;

  httplib::Client client(scheme_host_);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(timeout_);
  client.set_write_timeout(std::chrono::seconds(30));
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  BackendReply reply;
  auto res = client.Post(path_, headers, body.dump(), "application/json");
  if (!res) {
    reply.status = 0;
    reply.error = httplib::to_string(res.error());
    return reply;
  }
  reply.status = res->status;
  if (res->status < 200 || res->status >= 300) {
    reply.error = res->body.substr(0, 500);
    return reply;
  }
  try {
    const auto j = nlohmann::json::parse(res->body);
    const auto& choice = j.at("choices").at(0);
    const auto& message = choice.at("message");
    if (auto c = message.find("content"); c != message.end() && c->is_string()) {
      reply.text = c->get<std::string>();
    }
    if (auto r = message.find("refusal"); r != message.end() && r->is_string()) {
      reply.finish_reason = FinishReason::Refusal;
      if (reply.text.empty()) reply.text = r->get<std::string>();
    } else if (auto f = choice.find("finish_reason"); f != choice.end() && f->is_string()) {
      reply.finish_reason = parse_finish_reason(f->get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    // A 2xx with an unreadable body is treated as a server fault.
    reply.status = 502;
    reply.error = fmt::format("unparseable completion body: {}", e.what());
  }
  return reply;
}

}  // namespace cbforge
