#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cbforge/annotator.hpp"
#include "cbforge/config.hpp"
#include "cbforge/corpus.hpp"
#include "cbforge/evaluator.hpp"
#include "cbforge/llm_gateway.hpp"
#include "cbforge/prompt_kit.hpp"
#include "cbforge/sampler.hpp"
#include "cbforge/trainer.hpp"

namespace cbforge {

enum class ScenarioId {
  S1_baseline,
  S2_llm_classifier,
  S3_fully_synthetic,
  S4_synthetic_labels,
};
std::string_view to_string(ScenarioId id);
/// Accepts "s1".."s4" and the full names ("s3_fully_synthetic").
std::optional<ScenarioId> parse_scenario(std::string_view s);

struct ScenarioSpec {
  ScenarioId id = ScenarioId::S1_baseline;
  /// S2: classifier LLMs. S3: generators. S4: annotators. Unused by S1.
  std::vector<std::string> models;
  PromptMode prompt_mode = PromptMode::GE;
  LabelPolicy policy = LabelPolicy::D0;
  std::vector<int> percents;
  std::vector<Sampling> sampling{Sampling::None};
  RepetitionPlan plan;

  static ScenarioSpec from_config(ScenarioId id, const Config& cfg);
};

/// Everything a run reads. The gateway may be null for S1.
struct ScenarioInputs {
  CorpusPtr corpus;
  std::optional<HashSplitRule> split_rule;
  std::shared_ptr<const PromptKit> kit;
  std::shared_ptr<LlmGateway> gateway;
  std::shared_ptr<const Learner> learner;
  CaseBaseCounts base_counts = CaseBaseCounts::whatsapp();
  /// Existing synthetic pool to extend (S3).
  CorpusPtr pool;
  std::string synthetic_labeler;
  bool heuristic_synthetic_labels = false;
  std::size_t min_messages = 20;
  int max_regen = 5;
  int parallelism = 4;
  std::string config_digest;
  /// Annotation runs, pools and raw generations go here when set.
  std::filesystem::path artifact_dir;
};

/// One mechanically checked availability rule.
struct ContractCheck {
  std::string name;
  std::size_t observed = 0;
  bool ok() const { return observed == 0; }
};

struct RunReport {
  ScenarioId id = ScenarioId::S1_baseline;
  ResultTable table;
  /// Extra lines printed under the table.
  std::vector<std::string> notes;
  /// Row label -> per-seed CSV.
  std::map<std::string, std::string> per_seed;
  std::vector<ContractCheck> contracts;
  /// Pretty-printed JSON.
  std::string manifest;
};

/// Higher dev accuracy wins; an exact tie goes to GE.
PromptMode select_prompt_mode(double ge_dev_accuracy, double gf_dev_accuracy);

/// Run one scenario. A broken availability contract is a ContractViolation;
/// other errors keep their kind and gain the scenario as context.
RunReport run_scenario(const ScenarioSpec& spec, const ScenarioInputs& in);

/// Load corpus, prompts and backend as configured and run `id`. Artifacts
/// go under `out_dir`.
RunReport run_scenario_from_config(ScenarioId id, const Config& cfg,
                                   const std::filesystem::path& out_dir);

/// report.txt, report.csv, manifest.json and per_seed/<row>.csv.
void write_report(const RunReport& report, const std::filesystem::path& out_dir);

}  // namespace cbforge
