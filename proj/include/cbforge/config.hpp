#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cbforge/annotator.hpp"
#include "cbforge/llm_gateway.hpp"
#include "cbforge/sampler.hpp"
#include "cbforge/trainer.hpp"

namespace cbforge {

struct BackendConfig {
  std::string kind = "mock";  ///< "mock" or "http"
  std::string endpoint = "https://api.openai.com/v1";
  /// When this environment variable is set it overrides `endpoint`.
  std::string endpoint_env = "CBFORGE_ENDPOINT";
  /// Name of the environment variable holding the API key. The key itself
  /// is read at backend construction and never stored.
  std::string api_key_env = "OPENAI_API_KEY";
  std::filesystem::path mock_script;
  int max_retries = 4;
  int max_in_flight = 4;
  /// Worker threads for annotation; 0 means logical processors, capped by
  /// max_in_flight.
  int parallelism = 0;
  bool cache = true;
  std::filesystem::path cache_dir;
  int timeout_seconds = 120;
};

struct ModelsConfig {
  std::vector<std::string> classifiers;  ///< LLM-as-classifier runs
  std::vector<std::string> generators;   ///< synthetic conversation writers
  std::vector<std::string> annotators;   ///< label authentic train/validation
  /// Labels the synthetic pool; empty means each generator labels its own.
  std::string synthetic_labeler;
};

struct DataConfig {
  std::filesystem::path corpus;
  /// Optional existing synthetic pool (JSONL) that generation extends.
  std::filesystem::path pool;
  /// "tags", "conversation" or "message".
  std::string split = "tags";
  int train_percent = 60;
  int validation_percent = 20;
  /// Per-case message counts at 100%; defaults to the WhatsApp constants.
  CaseBaseCounts base_counts = CaseBaseCounts::whatsapp();
};

struct ExperimentConfig {
  int repetitions = 45;
  std::uint64_t base_seed = 0;
  std::vector<int> baseline_percents{20, 50, 80, 100};
  std::vector<int> synthetic_percents{100, 120, 140, 160, 180, 200};
  std::vector<int> label_percents{20, 50, 80, 100};
  std::vector<Sampling> sampling{Sampling::None};
  LabelPolicy classifier_policy = LabelPolicy::D0;
  LabelPolicy annotation_policy = LabelPolicy::D0;
  PromptMode annotation_mode = PromptMode::GE;
  /// "llm" or "heuristic".
  std::string synthetic_labels = "llm";
  std::size_t min_messages = 20;
  int max_regen = 5;
};

struct Config {
  std::filesystem::path source;
  /// SHA-256 of the config text.
  std::string digest;
  BackendConfig backend;
  ModelsConfig models;
  DataConfig data;
  std::filesystem::path prompts_dir;
  ExperimentConfig experiment;
  ClassifierConfig trainer;

  /// Relative paths resolve against the config file's directory. Referenced
  /// inputs must exist.
  static Config load(const std::filesystem::path& path);
  static Config parse(std::string_view text, const std::filesystem::path& base_dir);

  int effective_parallelism() const;
  std::optional<HashSplitRule> split_rule() const;
  GatewayOptions gateway_options() const;
  /// Mock backends come from the script; HTTP backends read the key from
  /// the configured environment variable.
  std::shared_ptr<ChatBackend> make_backend() const;
};

}  // namespace cbforge
