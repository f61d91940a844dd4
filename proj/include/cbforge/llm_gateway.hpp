#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <semaphore>
#include <string>
#include <unordered_map>

namespace cbforge {

struct ChatRequest {
  std::string model;
  std::string prompt;
  double temperature = 0.0;
  int max_tokens = 512;
  /// Passed to backends that support seeded sampling. Part of the cache key
  /// when set, so repeated generations for one prompt stay distinct.
  std::optional<std::int64_t> seed_hint;
};

enum class FinishReason { Stop, Length, Refusal, Error };
std::string_view to_string(FinishReason r);
std::optional<FinishReason> parse_finish_reason(std::string_view s);

struct ChatResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::Stop;
  std::int64_t latency_ms = 0;
  bool cached = false;
  /// Backend round trips spent on this response (retries included).
  std::size_t attempts = 0;
};

/// One backend round trip. `status` follows HTTP; 0 means the connection
/// itself failed.
struct BackendReply {
  int status = 200;
  std::string text;
  std::optional<FinishReason> finish_reason;
  std::string error;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual BackendReply send(const ChatRequest& req) = 0;
  virtual std::string name() const = 0;
};

/// Hex digest of (model, prompt, temperature, max_tokens[, seed_hint]).
std::string cache_key(const ChatRequest& req);

struct GatewayOptions {
  /// Retries after the first attempt for 429, 5xx and connection failures.
  int max_retries = 4;
  std::chrono::milliseconds initial_backoff{250};
  double backoff_multiplier = 2.0;
  std::chrono::milliseconds max_backoff{8000};
  bool cache_enabled = true;
  /// On-disk cache directory; empty keeps the cache in memory only.
  std::filesystem::path cache_dir;
  int max_in_flight = 4;
  /// Applied to response text when the backend does not flag a refusal.
  std::string refusal_pattern =
      R"((^|\W)(I('m| am) (sorry|unable)|I can('|no)?t (assist|help|comply|create|generate|provide|fulfill)|I won't (assist|help|create|generate)))";
  std::function<void(std::chrono::milliseconds)> sleep;
};

struct GatewayStats {
  std::size_t requests = 0;
  std::size_t backend_attempts = 0;
  std::size_t cache_hits = 0;
  int max_in_flight_observed = 0;
};

/// Chat-completion client shared by every worker. Thread-safe.
class LlmGateway {
 public:
  LlmGateway(std::shared_ptr<ChatBackend> backend, GatewayOptions options = {});

  /// Transient failures are retried with exponential backoff; identical
  /// requests are answered from cache when caching is enabled.
  ChatResponse complete(const ChatRequest& req);

  /// complete(), then re-issue with the cache bypassed while the answer is a
  /// refusal. At most `max_regen` attempts in total.
  ChatResponse complete_until_accepted(const ChatRequest& req, int max_regen);

  GatewayStats stats() const;
  /// Start a new cache epoch: forget in-memory entries and ignore disk.
  void clear_cache();
  const ChatBackend& backend() const { return *backend_; }

 private:
  ChatResponse issue(const ChatRequest& req);
  std::optional<ChatResponse> cache_lookup(const std::string& key);
  void cache_store(const std::string& key, const ChatResponse& resp);
  FinishReason classify(const BackendReply& reply) const;

  std::shared_ptr<ChatBackend> backend_;
  GatewayOptions opts_;
  std::regex refusal_re_;
  std::counting_semaphore<1024> slots_;
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
  std::atomic<std::size_t> requests_{0};
  std::atomic<std::size_t> attempts_{0};
  std::atomic<std::size_t> hits_{0};
  mutable std::mutex cache_mu_;
  std::unordered_map<std::string, ChatResponse> cache_;
  bool disk_enabled_ = true;
};

/// OpenAI-compatible `/chat/completions` over HTTP(S).
class HttpBackend final : public ChatBackend {
 public:
  /// `endpoint` is the API base, e.g. "https://api.openai.com/v1".
  HttpBackend(std::string endpoint, std::string api_key,
              std::chrono::seconds timeout = std::chrono::seconds(120));
  ~HttpBackend() override;
  BackendReply send(const ChatRequest& req) override;
  std::string name() const override { return "http:" + endpoint_; }

  /// Number of HttpBackend objects ever constructed in this process.
  static std::size_t instances();

 private:
  std::string endpoint_;
  std::string api_key_;
  std::chrono::seconds timeout_;
  std::string scheme_host_;
  std::string path_;
};

/// Scripted backend for tests and offline runs.
///
/// Script lines are JSON objects tried in order; the first whose matcher
/// fits the prompt answers:
///   {"contains": "idiot", "response": "Harm"}
///   {"regex": "(?i)ballet", "responses": ["1. VCTM: hi", "..."]}
///   {"contains": "x", "status": 429, "times": 2}
///   {"regex": ".*", "response": "I cannot help", "finish_reason": "refusal"}
/// `times` limits how often an entry may fire. With `responses`, the reply
/// is chosen by seed_hint (mod size) when present, else round-robin.
/// A prompt that matches nothing gets HTTP 404.
class MockBackend final : public ChatBackend {
 public:
  using Responder = std::function<BackendReply(const ChatRequest&)>;

  explicit MockBackend(Responder responder);
  static std::shared_ptr<MockBackend> from_script_text(std::string_view jsonl);
  static std::shared_ptr<MockBackend> from_script_file(const std::filesystem::path& path);

  BackendReply send(const ChatRequest& req) override;
  std::string name() const override { return "mock"; }
  std::size_t calls() const { return calls_.load(); }

 private:
  Responder responder_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace cbforge
