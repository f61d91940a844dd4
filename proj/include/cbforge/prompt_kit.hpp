#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "cbforge/types.hpp"

namespace cbforge {

/// A prompt body with `{Name}` placeholders. Names may contain spaces and
/// hyphens ("{Type of Problem}", "{Annotation-guideline}").
class PromptTemplate {
 public:
  PromptTemplate() = default;
  PromptTemplate(std::string name, std::string body);

  const std::string& name() const { return name_; }
  const std::string& body() const { return body_; }
  const std::vector<std::string>& placeholders() const { return placeholders_; }

  /// Single-pass substitution; bound values are inserted verbatim and never
  /// re-scanned. Every placeholder must be bound (ConfigError otherwise).
  std::string render(const std::map<std::string, std::string, std::less<>>& bindings) const;

 private:
  std::string name_;
  std::string body_;
  std::vector<std::string> placeholders_;
};

struct CaseCard {
  Case case_id = Case::A;
  std::string description;
  std::string problem_type;
};

/// The prompt files of a `prompts/` directory: the two label prompts, the
/// generation prompt, the annotation guideline and the four case cards.
class PromptKit {
 public:
  static PromptKit load(const std::filesystem::path& dir);

  /// `text` must be non-empty. GE prepends the shipped guideline.
  std::string render_label_prompt(PromptMode mode, std::string_view text) const;
  /// Same, with an explicit guideline (GE requires it to be non-empty).
  std::string render_label_prompt(PromptMode mode, std::string_view text,
                                  std::string_view guideline) const;
  std::string render_generation_prompt(const CaseCard& card) const;

  const std::string& guideline_text() const { return guideline_; }
  const CaseCard& card(Case c) const { return cards_[static_cast<std::size_t>(c)]; }
  const std::array<CaseCard, 4>& cards() const { return cards_; }

  /// Digest over every template file, recorded in run manifests.
  std::string digest() const;

 private:
  PromptTemplate ge_;
  PromptTemplate gf_;
  PromptTemplate synth_;
  std::string guideline_;
  std::array<CaseCard, 4> cards_;
};

}  // namespace cbforge
