#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cbforge/corpus.hpp"
#include "cbforge/evaluator.hpp"
#include "cbforge/llm_gateway.hpp"
#include "cbforge/prompt_kit.hpp"

namespace cbforge {

enum class ParsedLabel { Harm, NoHarm, Missing };

/// Case-insensitive search of an LLM reply. A negated form ("no harm",
/// "No-Harm", "not harmful", "non-harmful", "harmless") wins over "harm";
/// a reply containing neither is Missing.
ParsedLabel parse_label(std::string_view raw);

/// What to do with replies that carry no label.
enum class LabelPolicy {
  D0,  ///< default to NoHarm
  FU,  ///< drop the message from downstream training
};
std::string_view to_string(LabelPolicy p);
std::optional<LabelPolicy> parse_label_policy(std::string_view s);

enum class ParseStatus { Parsed, Missing };

/// Raw outcome for one message. A Missing assignment has no label.
struct LabelAssignment {
  std::string message_id;
  std::optional<Label> label;
  std::string source;
  ParseStatus parse_status = ParseStatus::Missing;
};

/// Label after the run's policy has been applied.
struct EffectiveLabel {
  std::string message_id;
  Label label = Label::NoHarm;
  bool defaulted = false;  ///< D0 filled in a Missing reply
};

struct AnnotationRun {
  std::string model;
  PromptMode prompt_mode = PromptMode::GE;
  LabelPolicy policy = LabelPolicy::D0;
  /// One entry per annotated message, in slice order.
  std::vector<LabelAssignment> records;
  std::size_t unparsed_count = 0;

  std::string source() const;
  /// D0: one label per record. FU: parsed records only.
  std::vector<EffectiveLabel> assignments() const;
  /// Messages FU removes (empty under D0).
  std::vector<std::string> dropped() const;
  /// Policy-applied labels as a view; dropped messages are not visible.
  std::shared_ptr<const AssignedView> view() const;
};

struct AnnotateOptions {
  std::string model;
  PromptMode prompt_mode = PromptMode::GE;
  LabelPolicy policy = LabelPolicy::D0;
  double temperature = 0.0;
  int max_tokens = 64;
  int parallelism = 4;
  /// Persist assignments.jsonl + manifest.json here (also on failure).
  std::filesystem::path out_dir;
  std::string config_digest;
};

/// One request per message, built from that message's text alone. Requests
/// run concurrently; records are assembled in slice order.
AnnotationRun annotate_slice(const DatasetSlice& slice, LlmGateway& gateway, const PromptKit& kit,
                             const AnnotateOptions& opts);

struct AnnotationScore {
  Metrics metrics;
  std::size_t scored = 0;
  std::size_t excluded = 0;
};

/// Score the policy-applied labels against `gold`. FU-dropped messages are
/// excluded; under D0 they count as NoHarm.
AnnotationScore score_against_gold(const AnnotationRun& run, const Corpus& corpus,
                                   const LabelView& gold);

void write_annotation_run(const AnnotationRun& run, const std::filesystem::path& dir,
                          bool complete, const std::string& config_digest = {});
AnnotationRun read_annotation_run(const std::filesystem::path& dir);

}  // namespace cbforge
