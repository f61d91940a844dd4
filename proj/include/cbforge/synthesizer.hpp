#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "cbforge/annotator.hpp"
#include "cbforge/corpus.hpp"
#include "cbforge/errors.hpp"
#include "cbforge/llm_gateway.hpp"
#include "cbforge/prompt_kit.hpp"

namespace cbforge {

struct TranscriptLine {
  int seq = 0;
  Role role = Role::UNKNOWN;
  std::string text;
  bool operator==(const TranscriptLine&) const = default;
};

struct ParsedTranscript {
  std::vector<TranscriptLine> lines;
  std::size_t skipped_lines = 0;  ///< non-blank lines that did not match
};

/// Accepts "<n>. <ROLE>: <text>" and "<n>) <ROLE>: <text>", tolerating
/// markdown emphasis around the number and role ("**3. BULLY1:** ...").
/// Unknown role tokens become UNKNOWN. Lines that do not match, have empty
/// text or do not increase the sequence number are skipped and counted.
/// Throws ParseError when no line matches.
ParsedTranscript parse_conversation(std::string_view raw);

/// Inverse of parse_conversation for accepted lines: "<n>. <ROLE>: <text>".
std::string format_transcript(const std::vector<TranscriptLine>& lines);

/// A reply that yielded no transcript lines; the raw text is kept for audit.
class TranscriptParseError : public ParseError {
 public:
  TranscriptParseError(const std::string& what, std::string raw)
      : ParseError(what), raw_(std::move(raw)) {}
  const std::string& raw_text() const { return raw_; }

 private:
  std::string raw_;
};

struct GeneratedConversation {
  Case case_id = Case::A;
  std::string model;
  std::string raw_text;
  std::vector<TranscriptLine> messages;
  int generation_index = 0;
  std::size_t skipped_lines = 0;
  /// Replies discarded for having fewer than min_messages lines.
  int rejected = 0;
};

struct GenerationOptions {
  std::string model;
  double temperature = 1.0;
  int max_tokens = 8192;
  /// Attempts allowed per request while the model refuses.
  int max_regen = 5;
  std::size_t min_messages = 20;
  /// Short replies tolerated before giving up on one conversation.
  int max_rejections = 5;
  /// Archive of raw replies, `<dir>/<model>_<case>_<index>[_r<k>].txt`.
  std::filesystem::path raw_dir;
};

/// Render the generation prompt for `card`, call the model until it stops
/// refusing and parse the transcript. Short transcripts are regenerated.
GeneratedConversation generate_conversation(const CaseCard& card, LlmGateway& gateway,
                                            const PromptKit& kit, const GenerationOptions& opts,
                                            int generation_index);

/// Append-only store of generated conversations. Export order is
/// (case, model, generation_index, seq) whatever the insertion order.
class SyntheticPool {
 public:
  void add(GeneratedConversation conv);
  std::size_t message_count(Case c) const;
  std::size_t message_count(Case c, std::string_view model) const;
  int next_generation_index(Case c, std::string_view model) const;
  std::size_t conversations() const { return convs_.size(); }

  /// Messages with provenance synthetic(model), ids "syn:<model>:<case>:<index>:<seq>".
  CorpusPtr to_corpus() const;

  /// Rebuild from a persisted pool corpus. Authentic messages are refused.
  static SyntheticPool from_corpus(const Corpus& corpus);

 private:
  std::map<std::tuple<Case, std::string, int>, GeneratedConversation> convs_;
};

/// Generate conversations for every listed case until each case holds at
/// least targets[case] messages from `opts.model`. Cases run concurrently.
void grow_pool(SyntheticPool& pool, const std::vector<Case>& cases,
               const std::array<std::size_t, 4>& targets, LlmGateway& gateway,
               const PromptKit& kit, const GenerationOptions& opts, int max_conversations = 1000);

/// Label every pool message through the annotator with policy FU.
AnnotationRun label_synthetic_pool(const CorpusPtr& pool, LlmGateway& gateway,
                                   const PromptKit& kit, const std::string& labeling_model,
                                   PromptMode mode = PromptMode::GE, int parallelism = 4,
                                   const std::filesystem::path& out_dir = {});

/// Alternative, non-LLM labels: bully and bully-support turns are Harm,
/// everything else NoHarm.
std::shared_ptr<const AssignedView> role_heuristic_view(const Corpus& pool);

/// Every row of the pool whose label is visible under `view`.
DatasetSlice pool_slice(const CorpusPtr& pool, std::shared_ptr<const LabelView> view);

}  // namespace cbforge
