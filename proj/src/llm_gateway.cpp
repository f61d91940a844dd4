#include "cbforge/llm_gateway.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <thread>

#include "cbforge/digest.hpp"
#include "cbforge/errors.hpp"
#include "json.hpp"

namespace cbforge {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(FinishReason r) {
  switch (r) {
    case FinishReason::Stop: return "stop";
    case FinishReason::Length: return "length";
    case FinishReason::Refusal: return "refusal";
    case FinishReason::Error: return "error";
  }
  return "error";
}

std::optional<FinishReason> parse_finish_reason(std::string_view s) {
  if (s == "stop") return FinishReason::Stop;
  if (s == "length") return FinishReason::Length;
  if (s == "refusal" || s == "content_filter") return FinishReason::Refusal;
  if (s == "error") return FinishReason::Error;
  return std::nullopt;
}

std::string cache_key(const ChatRequest& req) {
  ordered_json j;
  j["model"] = req.model;
  j["prompt"] = req.prompt;
  j["temperature"] = req.temperature;
  j["max_tokens"] = req.max_tokens;
  if (req.seed_hint) j["seed_hint"] = *req.seed_hint;
  return sha256_hex(j.dump());
}

LlmGateway::LlmGateway(std::shared_ptr<ChatBackend> backend, GatewayOptions options)
    : backend_(std::move(backend)),
      opts_(std::move(options)),
      refusal_re_(opts_.refusal_pattern.empty() ? std::string("$^") : opts_.refusal_pattern,
                  std::regex::ECMAScript | std::regex::icase),
      slots_(std::clamp(opts_.max_in_flight, 1, 1024)) {
  if (!backend_) throw ConfigError("gateway needs a backend");
  if (opts_.max_in_flight < 1 || opts_.max_in_flight > 1024) {
    throw ConfigError("max_in_flight must be in [1, 1024]");
  }
  if (opts_.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (!opts_.sleep) {
    opts_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  if (!opts_.cache_dir.empty()) std::filesystem::create_directories(opts_.cache_dir);
}

FinishReason LlmGateway::classify(const BackendReply& reply) const {
  if (reply.finish_reason == FinishReason::Refusal) return FinishReason::Refusal;
  if (std::regex_search(reply.text, refusal_re_)) return FinishReason::Refusal;
  return reply.finish_reason.value_or(FinishReason::Stop);
}

ChatResponse LlmGateway::issue(const ChatRequest& req) {
  if (req.prompt.empty()) throw PreconditionError("chat request prompt is empty");

  slots_.acquire();
  const int now = in_flight_.fetch_add(1) + 1;
  int seen = max_in_flight_.load();
  while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
  }
  struct Release {
    LlmGateway* g;
    ~Release() {
      g->in_flight_.fetch_sub(1);
      g->slots_.release();
    }
  } release{this};

  const auto start = std::chrono::steady_clock::now();
  auto backoff = opts_.initial_backoff;
  const int total = 1 + opts_.max_retries;
  std::string last_error;
  for (int attempt = 1; attempt <= total; ++attempt) {
    BackendReply reply = backend_->send(req);
    attempts_.fetch_add(1);
    const bool ok = reply.status >= 200 && reply.status < 300;
    if (ok) {
      ChatResponse resp;
      resp.finish_reason = classify(reply);
      resp.text = std::move(reply.text);
      resp.attempts = static_cast<std::size_t>(attempt);
      if (resp.text.empty() && resp.finish_reason != FinishReason::Refusal) {
        last_error = "empty completion";
      } else {
        resp.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - start)
                              .count();
        if (attempt > 1) {
          spdlog::info("{}: request succeeded after {} attempts", backend_->name(), attempt);
        }
        return resp;
      }
    } else if (reply.status == 429 || reply.status >= 500 || reply.status == 0) {
      last_error = fmt::format("status {}{}{}", reply.status, reply.error.empty() ? "" : ": ",
                               reply.error);
    } else {
      throw RequestError(fmt::format("{} rejected request with status {}: {}", backend_->name(),
                                     reply.status, reply.error));
    }
    if (attempt < total) {
      spdlog::debug("{}: attempt {} failed ({}), retrying in {} ms", backend_->name(), attempt,
                    last_error, backoff.count());
      opts_.sleep(backoff);
      backoff = std::min(opts_.max_backoff,
                         std::chrono::milliseconds(static_cast<std::int64_t>(
                             static_cast<double>(backoff.count()) * opts_.backoff_multiplier)));
    }
  }
  throw TransportError(
      fmt::format("{}: giving up after {} attempts ({})", backend_->name(), total, last_error));
}

std::optional<ChatResponse> LlmGateway::cache_lookup(const std::string& key) {
  std::lock_guard lock(cache_mu_);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  if (opts_.cache_dir.empty() || !disk_enabled_) return std::nullopt;
  std::ifstream in(opts_.cache_dir / (key + ".json"), std::ios::binary);
  if (!in) return std::nullopt;
  try {
    json j = json::parse(in);
    ChatResponse r;
    r.text = j.at("text").get<std::string>();
    r.finish_reason =
        parse_finish_reason(j.at("finish_reason").get<std::string>()).value_or(FinishReason::Stop);
    cache_.emplace(key, r);
    return r;
  } catch (const json::exception&) {
    spdlog::warn("ignoring corrupt cache entry {}", key);
    return std::nullopt;
  }
}

void LlmGateway::cache_store(const std::string& key, const ChatResponse& resp) {
  std::lock_guard lock(cache_mu_);
  cache_[key] = resp;
  if (opts_.cache_dir.empty()) return;
  ordered_json j;
  j["text"] = resp.text;
  j["finish_reason"] = to_string(resp.finish_reason);
  const auto final_path = opts_.cache_dir / (key + ".json");
  const auto tmp_path = opts_.cache_dir / (key + ".json.tmp");
  {
    std::ofstream out(tmp_path, std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot write cache entry {}", tmp_path.string()));
    out << j.dump();
  }
  std::filesystem::rename(tmp_path, final_path);
}

ChatResponse LlmGateway::complete(const ChatRequest& req) {
  requests_.fetch_add(1);
  std::string key;
  if (opts_.cache_enabled) {
    key = cache_key(req);
    if (auto hit = cache_lookup(key)) {
      hits_.fetch_add(1);
      hit->cached = true;
      hit->latency_ms = 0;
      hit->attempts = 0;
      return *hit;
    }
  }
  ChatResponse resp = issue(req);
  if (opts_.cache_enabled && resp.finish_reason != FinishReason::Error) {
    ChatResponse stored = resp;
    stored.cached = false;
    cache_store(key, stored);
  }
  return resp;
}

ChatResponse LlmGateway::complete_until_accepted(const ChatRequest& req, int max_regen) {
  if (max_regen < 1) throw PreconditionError("max_regen must be >= 1");
  ChatResponse resp = complete(req);
  std::size_t issued = 1;
  std::size_t round_trips = resp.attempts;
  while (resp.finish_reason == FinishReason::Refusal) {
    if (issued >= static_cast<std::size_t>(max_regen)) {
      throw RefusalError(
          fmt::format("model {} refused {} times", req.model, issued), issued);
    }
    requests_.fetch_add(1);
    resp = issue(req);
    ++issued;
    round_trips += resp.attempts;
  }
  resp.attempts = round_trips;
  return resp;
}

GatewayStats LlmGateway::stats() const {
  GatewayStats s;
  s.requests = requests_.load();
  s.backend_attempts = attempts_.load();
  s.cache_hits = hits_.load();
  s.max_in_flight_observed = max_in_flight_.load();
  return s;
}

void LlmGateway::clear_cache() {
  std::lock_guard lock(cache_mu_);
  cache_.clear();
  disk_enabled_ = false;
}

}  // namespace cbforge
