#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cbforge/label_view.hpp"
#include "cbforge/types.hpp"

namespace cbforge {

/// One chat turn.
struct Message {
  std::string id;
  std::string conversation_id;
  Case case_id = Case::A;
  Role role = Role::UNKNOWN;
  int seq = 1;
  std::string text;
  Provenance provenance;
  /// Absent means "not annotated", which binarizes to NoHarm.
  std::optional<FineCategory> fine_category;
  /// Explicit split tag from the input file, if any.
  std::optional<Split> split;
};

/// Collapse a fine-grained category into the binary harm label. The
/// speaker's role is deliberately ignored: a victim's insult is still harm.
Label binarize(FineCategory fine, Role speaker_role);

/// Immutable, id-indexed message collection. Safe for concurrent reads.
class Corpus {
 public:
  /// Validates id uniqueness, non-empty text and strictly increasing seq
  /// within each conversation (in input order).
  static std::shared_ptr<const Corpus> from_messages(std::vector<Message> messages);

  std::size_t size() const { return messages_.size(); }
  bool empty() const { return messages_.empty(); }
  const Message& at(std::size_t row) const { return messages_.at(row); }
  std::span<const Message> messages() const { return messages_; }
  std::optional<std::size_t> find(std::string_view id) const;

  /// Shared gold view over this corpus; its access counter is the
  /// instrumentation point for label-hygiene checks.
  std::shared_ptr<const GoldView> gold_view() const { return gold_; }

 private:
  Corpus() = default;
  std::vector<Message> messages_;
  std::unordered_map<std::string, std::size_t> index_;
  std::shared_ptr<const GoldView> gold_;
};

using CorpusPtr = std::shared_ptr<const Corpus>;

/// Parse a JSONL corpus. Errors name the 1-based line number.
CorpusPtr ingest_corpus(const std::filesystem::path& path);
CorpusPtr ingest_corpus_text(std::string_view jsonl);

/// Canonical JSONL form: fixed key order, UTF-8 verbatim, one object per
/// line, trailing newline after every line.
std::string serialize_corpus(const Corpus& corpus);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);

/// An ordered view of corpus rows plus the label view a stage may read.
struct DatasetSlice {
  CorpusPtr corpus;
  std::vector<std::size_t> rows;
  Split split = Split::Train;
  std::shared_ptr<const LabelView> view;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
  const Message& message(std::size_t i) const { return corpus->at(rows[i]); }
  std::optional<Label> label(std::size_t i) const { return view->label(message(i)); }
  std::vector<std::string> ids() const;
  bool has_unique_ids() const;
  /// Same rows, different label view.
  DatasetSlice with_view(std::shared_ptr<const LabelView> v) const;
};

struct SliceStats {
  std::size_t size = 0;
  std::size_t labeled = 0;
  std::size_t harm = 0;
  /// harm / labeled, or 0 when nothing is labeled.
  double harm_fraction() const {
    return labeled == 0 ? 0.0 : static_cast<double>(harm) / static_cast<double>(labeled);
  }
};
SliceStats slice_stats(const DatasetSlice& slice);

/// Deterministic hash split used when the input carries no split tags.
struct HashSplitRule {
  enum class Granularity { Conversation, Message };
  Granularity granularity = Granularity::Conversation;
  int train_percent = 60;
  int validation_percent = 20;
};

struct SplitSet {
  DatasetSlice train;
  DatasetSlice validation;
  DatasetSlice test;
  const DatasetSlice& get(Split s) const;
};

/// Explicit split tags win when every message carries one. Untagged corpora
/// fall back to `rule`; with no rule that is a ConfigError. A corpus with
/// only some messages tagged is rejected.
SplitSet canonical_splits(const CorpusPtr& corpus,
                          std::optional<HashSplitRule> rule = HashSplitRule{});

/// Same ids and order, gold labels hidden. The corpus keeps its gold view.
DatasetSlice strip_gold_labels(const DatasetSlice& slice);

/// Count of messages per case among `rows`.
std::array<std::size_t, 4> per_case_counts(const DatasetSlice& slice);

}  // namespace cbforge
