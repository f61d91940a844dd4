#include "cbforge/config.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "cbforge/digest.hpp"
#include "cbforge/errors.hpp"
#include "toml.hpp"

namespace cbforge {
namespace {

template <typename T>
T get_or(const toml::table& t, std::string_view key, T fallback) {
  const toml::node* n = t.get(key);
  if (!n) return fallback;
  if (auto v = n->value<T>()) return *v;
  throw ConfigError(fmt::format("key \"{}\" has the wrong type", key));
}

std::vector<std::string> string_list(const toml::table& t, std::string_view key) {
  std::vector<std::string> out;
  const toml::node* n = t.get(key);
  if (!n) return out;
  if (auto s = n->value<std::string>()) return {*s};
  const toml::array* arr = n->as_array();
  if (!arr) throw ConfigError(fmt::format("key \"{}\" must be a string or a list of strings", key));
  for (const auto& el : *arr) {
    auto s = el.value<std::string>();
    if (!s) throw ConfigError(fmt::format("key \"{}\" must list strings", key));
    out.push_back(*s);
  }
  return out;
}

std::vector<int> int_list(const toml::table& t, std::string_view key, std::vector<int> fallback) {
  const toml::node* n = t.get(key);
  if (!n) return fallback;
  const toml::array* arr = n->as_array();
  if (!arr) throw ConfigError(fmt::format("key \"{}\" must be a list of integers", key));
  std::vector<int> out;
  for (const auto& el : *arr) {
    auto v = el.value<std::int64_t>();
    if (!v || *v <= 0) throw ConfigError(fmt::format("key \"{}\" must list positive integers", key));
    out.push_back(static_cast<int>(*v));
  }
  if (out.empty()) throw ConfigError(fmt::format("key \"{}\" is empty", key));
  return out;
}

const toml::table& section(const toml::table& root, std::string_view name) {
  static const toml::table empty;
  const toml::node* n = root.get(name);
  if (!n) return empty;
  if (const toml::table* t = n->as_table()) return *t;
  throw ConfigError(fmt::format("[{}] must be a table", name));
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

void require_exists(const std::filesystem::path& p, std::string_view what) {
  if (!std::filesystem::exists(p)) {
    throw ConfigError(fmt::format("{} \"{}\" does not exist", what, p.string()));
  }
}

}  // namespace

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config \"" + path.string() + "\"");
  std::stringstream ss;
  ss << in.rdbuf();
  Config cfg = parse(ss.str(), path.parent_path().empty() ? "." : path.parent_path());
  cfg.source = path;
  return cfg;
}

Config Config::parse(std::string_view text, const std::filesystem::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw ConfigError(fmt::format("config line {}: {}", e.source().begin.line, e.description()));
  }

  Config cfg;
  cfg.digest = sha256_hex(text);

  const auto& be = section(root, "backend");
  cfg.backend.kind = get_or<std::string>(be, "kind", cfg.backend.kind);
  cfg.backend.endpoint = get_or<std::string>(be, "endpoint", cfg.backend.endpoint);
  cfg.backend.endpoint_env = get_or<std::string>(be, "endpoint_env", cfg.backend.endpoint_env);
  cfg.backend.api_key_env = get_or<std::string>(be, "api_key_env", cfg.backend.api_key_env);
  cfg.backend.mock_script = resolve(base_dir, get_or<std::string>(be, "mock_script", ""));
  cfg.backend.max_retries = static_cast<int>(get_or<std::int64_t>(be, "max_retries", cfg.backend.max_retries));
  cfg.backend.max_in_flight =
      static_cast<int>(get_or<std::int64_t>(be, "max_in_flight", cfg.backend.max_in_flight));
  cfg.backend.parallelism = static_cast<int>(get_or<std::int64_t>(be, "parallelism", 0));
  cfg.backend.cache = get_or<bool>(be, "cache", true);
  cfg.backend.cache_dir = resolve(base_dir, get_or<std::string>(be, "cache_dir", ""));
  cfg.backend.timeout_seconds =
      static_cast<int>(get_or<std::int64_t>(be, "timeout_seconds", cfg.backend.timeout_seconds));
  if (be.contains("api_key")) {
    throw ConfigError("api keys do not belong in the config; set backend.api_key_env instead");
  }
  if (cfg.backend.kind == "mock") {
    if (cfg.backend.mock_script.empty()) throw ConfigError("mock backend needs backend.mock_script");
    require_exists(cfg.backend.mock_script, "mock script");
  } else if (cfg.backend.kind != "http") {
    throw ConfigError("backend.kind must be \"mock\" or \"http\", got \"" + cfg.backend.kind + "\"");
  }
  if (cfg.backend.max_retries < 0 || cfg.backend.max_in_flight < 1 || cfg.backend.parallelism < 0) {
    throw ConfigError("backend limits must be non-negative (max_in_flight at least 1)");
  }

  const auto& models = section(root, "models");
  cfg.models.classifiers = string_list(models, "classifiers");
  cfg.models.generators = string_list(models, "generators");
  cfg.models.annotators = string_list(models, "annotators");
  cfg.models.synthetic_labeler = get_or<std::string>(models, "synthetic_labeler", "");

  const auto& data = section(root, "data");
  cfg.data.corpus = resolve(base_dir, get_or<std::string>(data, "corpus", ""));
  if (cfg.data.corpus.empty()) throw ConfigError("data.corpus is required");
  require_exists(cfg.data.corpus, "corpus");
  cfg.data.pool = resolve(base_dir, get_or<std::string>(data, "pool", ""));
  if (!cfg.data.pool.empty()) require_exists(cfg.data.pool, "synthetic pool");
  cfg.data.split = get_or<std::string>(data, "split", cfg.data.split);
  if (cfg.data.split != "tags" && cfg.data.split != "conversation" && cfg.data.split != "message") {
    throw ConfigError("data.split must be \"tags\", \"conversation\" or \"message\"");
  }
  cfg.data.train_percent = static_cast<int>(get_or<std::int64_t>(data, "train_percent", 60));
  cfg.data.validation_percent = static_cast<int>(get_or<std::int64_t>(data, "validation_percent", 20));
  if (cfg.data.train_percent <= 0 || cfg.data.validation_percent <= 0 ||
      cfg.data.train_percent + cfg.data.validation_percent >= 100) {
    throw ConfigError("data.train_percent + data.validation_percent must leave room for test");
  }
  if (data.contains("base_counts")) {
    auto counts = int_list(data, "base_counts", {});
    if (counts.size() != 4) throw ConfigError("data.base_counts needs four entries (A, B, C, D)");
    for (std::size_t i = 0; i < 4; ++i) cfg.data.base_counts.counts[i] = static_cast<std::size_t>(counts[i]);
  }

  const auto& prompts = section(root, "prompts");
  cfg.prompts_dir = resolve(base_dir, get_or<std::string>(prompts, "dir", "prompts"));
  require_exists(cfg.prompts_dir, "prompts directory");

  const auto& ex = section(root, "experiment");
  auto& e = cfg.experiment;
  e.repetitions = static_cast<int>(get_or<std::int64_t>(ex, "repetitions", e.repetitions));
  if (e.repetitions < 1) throw ConfigError("experiment.repetitions must be at least 1");
  std::int64_t seed = get_or<std::int64_t>(ex, "base_seed", 0);
  if (seed < 0) throw ConfigError("experiment.base_seed must be non-negative");
  e.base_seed = static_cast<std::uint64_t>(seed);
  e.baseline_percents = int_list(ex, "baseline_percents", e.baseline_percents);
  e.synthetic_percents = int_list(ex, "synthetic_percents", e.synthetic_percents);
  e.label_percents = int_list(ex, "label_percents", e.label_percents);
  for (const auto* list : {&e.baseline_percents, &e.label_percents}) {
    for (int p : *list) {
      if (p > 100) throw ConfigError(fmt::format("authentic subsampling percent {} exceeds 100", p));
    }
  }
  if (ex.contains("sampling")) {
    e.sampling.clear();
    for (const auto& s : string_list(ex, "sampling")) {
      auto v = parse_sampling(s);
      if (!v) throw ConfigError("unknown sampling strategy \"" + s + "\"");
      e.sampling.push_back(*v);
    }
  }
  auto policy = [&](std::string_view key, LabelPolicy fallback) {
    std::string s = get_or<std::string>(ex, key, std::string(to_string(fallback)));
    auto p = parse_label_policy(s);
    if (!p) throw ConfigError(fmt::format("experiment.{}: unknown policy \"{}\"", key, s));
    return *p;
  };
  e.classifier_policy = policy("classifier_policy", e.classifier_policy);
  e.annotation_policy = policy("annotation_policy", e.annotation_policy);
  std::string mode = get_or<std::string>(ex, "annotation_mode", "GE");
  auto m = parse_prompt_mode(mode);
  if (!m) throw ConfigError("experiment.annotation_mode must be GE or GF");
  e.annotation_mode = *m;
  e.synthetic_labels = get_or<std::string>(ex, "synthetic_labels", e.synthetic_labels);
  if (e.synthetic_labels != "llm" && e.synthetic_labels != "heuristic") {
    throw ConfigError("experiment.synthetic_labels must be \"llm\" or \"heuristic\"");
  }
  e.min_messages = static_cast<std::size_t>(get_or<std::int64_t>(ex, "min_messages", 20));
  e.max_regen = static_cast<int>(get_or<std::int64_t>(ex, "max_regen", e.max_regen));

  const auto& tr = section(root, "trainer");
  auto& t = cfg.trainer;
  t.epochs_max = static_cast<int>(get_or<std::int64_t>(tr, "epochs_max", t.epochs_max));
  t.learning_rate = get_or<double>(tr, "learning_rate", t.learning_rate);
  t.l2 = get_or<double>(tr, "l2", t.l2);
  t.early_stop_patience =
      static_cast<int>(get_or<std::int64_t>(tr, "early_stop_patience", t.early_stop_patience));
  t.features.buckets_log2 =
      static_cast<int>(get_or<std::int64_t>(tr, "buckets_log2", t.features.buckets_log2));
  t.features.word_bigrams = get_or<bool>(tr, "word_bigrams", t.features.word_bigrams);
  t.features.char_min = static_cast<int>(get_or<std::int64_t>(tr, "char_min", t.features.char_min));
  t.features.char_max = static_cast<int>(get_or<std::int64_t>(tr, "char_max", t.features.char_max));
  try {
    t.validate();
  } catch (const Error& err) {
    throw ConfigError(std::string("[trainer] ") + err.what());
  }
  return cfg;
}

int Config::effective_parallelism() const {
  int p = backend.parallelism;
  if (p == 0) p = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return std::min(p, backend.max_in_flight);
}

std::optional<HashSplitRule> Config::split_rule() const {
  if (data.split == "tags") return std::nullopt;
  HashSplitRule rule;
  rule.granularity = data.split == "message" ? HashSplitRule::Granularity::Message
                                             : HashSplitRule::Granularity::Conversation;
  rule.train_percent = data.train_percent;
  rule.validation_percent = data.validation_percent;
  return rule;
}

GatewayOptions Config::gateway_options() const {
  GatewayOptions o;
  o.max_retries = backend.max_retries;
  o.max_in_flight = backend.max_in_flight;
  o.cache_enabled = backend.cache;
  o.cache_dir = backend.cache_dir;
  return o;
}

std::shared_ptr<ChatBackend> Config::make_backend() const {
  if (backend.kind == "mock") return MockBackend::from_script_file(backend.mock_script);
  const char* key = std::getenv(backend.api_key_env.c_str());
  if (!key || !*key) {
    throw ConfigError("environment variable " + backend.api_key_env + " is not set");
  }
  std::string endpoint = backend.endpoint;
  if (const char* env = std::getenv(backend.endpoint_env.c_str()); env && *env) endpoint = env;
  return std::make_shared<HttpBackend>(endpoint, key,
                                       std::chrono::seconds(backend.timeout_seconds));
}

}  // namespace cbforge
