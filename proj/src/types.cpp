#include "cbforge/types.hpp"

#include <algorithm>
#include <cctype>

namespace cbforge {
namespace {

constexpr std::array<std::string_view, 12> kRoleNames{
    "VCTM",  "BULLY1", "BULLY2", "VSUP1", "VSUP2", "VSUP3",
    "VSUP4", "BSUP1",  "BSUP2",  "BSUP3", "BSUP4", "UNKNOWN"};

constexpr std::array<std::string_view, 9> kFineNames{
    "Threat/Blackmail", "Insult",  "Curse/Exclusion",
    "Defamation",       "SexualTalk", "Defense",
    "EncouragementToHarasser", "BodyShame", "None"};

// Lowercased, with spaces, hyphens and underscores removed.
std::string fold(std::string_view s) {
  std::string out;
  for (unsigned char c : s) {
    if (c == ' ' || c == '-' || c == '_') continue;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

}  // namespace

std::string_view to_string(Case c) {
  static constexpr std::array<std::string_view, 4> names{"A", "B", "C", "D"};
  return names[static_cast<std::size_t>(c)];
}

std::string_view to_string(Role r) { return kRoleNames[static_cast<std::size_t>(r)]; }

std::string_view to_string(Label l) { return l == Label::Harm ? "Harm" : "NoHarm"; }

std::string_view to_string(FineCategory f) {
  return kFineNames[static_cast<std::size_t>(f)];
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

std::string_view to_string(PromptMode m) { return m == PromptMode::GE ? "GE" : "GF"; }

std::optional<Case> parse_case(std::string_view s) {
  if (s.size() != 1) return std::nullopt;
  switch (std::toupper(static_cast<unsigned char>(s[0]))) {
    case 'A': return Case::A;
    case 'B': return Case::B;
    case 'C': return Case::C;
    case 'D': return Case::D;
    default: return std::nullopt;
  }
}

std::optional<Role> parse_role(std::string_view s) {
  for (std::size_t i = 0; i < kRoleNames.size(); ++i) {
    if (kRoleNames[i] == s) return static_cast<Role>(i);
  }
  return std::nullopt;
}

std::optional<Label> parse_label_token(std::string_view s) {
  const std::string f = fold(s);
  if (f == "harm") return Label::Harm;
  if (f == "noharm") return Label::NoHarm;
  return std::nullopt;
}

std::optional<FineCategory> parse_fine_category(std::string_view s) {
  std::string f = fold(s);
  std::erase(f, '/');
  if (f == "threatblackmail") return FineCategory::ThreatBlackmail;
  if (f == "insult") return FineCategory::Insult;
  if (f == "curseexclusion") return FineCategory::CurseExclusion;
  if (f == "defamation") return FineCategory::Defamation;
  if (f == "sexualtalk") return FineCategory::SexualTalk;
  if (f == "defense") return FineCategory::Defense;
  if (f == "encouragementtoharasser" || f == "encouragementtotheharasser")
    return FineCategory::EncouragementToHarasser;
  if (f == "bodyshame") return FineCategory::BodyShame;
  if (f == "none") return FineCategory::None;
  return std::nullopt;
}

std::optional<Split> parse_split(std::string_view s) {
  const std::string f = fold(s);
  if (f == "train" || f == "training") return Split::Train;
  if (f == "validation" || f == "dev" || f == "val") return Split::Validation;
  if (f == "test") return Split::Test;
  return std::nullopt;
}

std::optional<PromptMode> parse_prompt_mode(std::string_view s) {
  const std::string f = fold(s);
  if (f == "ge") return PromptMode::GE;
  if (f == "gf") return PromptMode::GF;
  return std::nullopt;
}

}  // namespace cbforge
