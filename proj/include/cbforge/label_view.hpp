#pragma once

#include <atomic>
#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>

#include "cbforge/types.hpp"

namespace cbforge {

struct Message;

/// Which labels a pipeline stage is allowed to see. A view answers
/// "what is the label of this message?" or "not visible" (nullopt).
class LabelView {
 public:
  virtual ~LabelView() = default;
  virtual std::optional<Label> label(const Message& m) const = 0;
  /// Short descriptor recorded in manifests: "gold", "stripped",
  /// "llm:<model>:<GE|GF>", "heuristic:role".
  virtual std::string describe() const = 0;
  virtual bool is_gold() const { return false; }
};

/// Gold labels derived from the fine-grained annotation. Every lookup is
/// counted so tests can assert that a stage never touched gold labels.
class GoldView final : public LabelView {
 public:
  std::optional<Label> label(const Message& m) const override;
  std::string describe() const override { return "gold"; }
  bool is_gold() const override { return true; }

  std::size_t access_count() const { return accesses_.load(); }

 private:
  mutable std::atomic<std::size_t> accesses_{0};
};

/// A view with every label hidden.
class StrippedView final : public LabelView {
 public:
  std::optional<Label> label(const Message&) const override { return std::nullopt; }
  std::string describe() const override { return "stripped"; }
};

/// Labels assigned by an external source (an LLM run or a heuristic),
/// keyed by message id. Messages without an entry are not visible.
class AssignedView final : public LabelView {
 public:
  AssignedView(std::string source, std::unordered_map<std::string, Label> labels)
      : source_(std::move(source)), labels_(std::move(labels)) {}

  std::optional<Label> label(const Message& m) const override;
  std::string describe() const override { return source_; }
  std::size_t size() const { return labels_.size(); }

 private:
  std::string source_;
  std::unordered_map<std::string, Label> labels_;
};

}  // namespace cbforge
