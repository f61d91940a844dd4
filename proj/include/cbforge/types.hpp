#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace cbforge {

enum class Case : std::uint8_t { A, B, C, D };
inline constexpr std::array<Case, 4> kAllCases{Case::A, Case::B, Case::C, Case::D};

enum class Role : std::uint8_t {
  VCTM,
  BULLY1,
  BULLY2,
  VSUP1,
  VSUP2,
  VSUP3,
  VSUP4,
  BSUP1,
  BSUP2,
  BSUP3,
  BSUP4,
  UNKNOWN,
};
/// The eleven participant roles of a role-play group (UNKNOWN excluded).
inline constexpr std::array<Role, 11> kRoster{
    Role::VCTM,  Role::BULLY1, Role::BULLY2, Role::VSUP1,
    Role::VSUP2, Role::VSUP3,  Role::VSUP4,  Role::BSUP1,
    Role::BSUP2, Role::BSUP3,  Role::BSUP4};

enum class Label : std::uint8_t { NoHarm = 0, Harm = 1 };

enum class FineCategory : std::uint8_t {
  ThreatBlackmail,
  Insult,
  CurseExclusion,
  Defamation,
  SexualTalk,
  Defense,
  EncouragementToHarasser,
  BodyShame,
  None,
};
inline constexpr std::array<FineCategory, 9> kAllFineCategories{
    FineCategory::ThreatBlackmail, FineCategory::Insult,
    FineCategory::CurseExclusion,  FineCategory::Defamation,
    FineCategory::SexualTalk,      FineCategory::Defense,
    FineCategory::EncouragementToHarasser, FineCategory::BodyShame,
    FineCategory::None};

enum class Split : std::uint8_t { Train, Validation, Test };
inline constexpr std::array<Split, 3> kAllSplits{Split::Train, Split::Validation,
                                                 Split::Test};

enum class PromptMode : std::uint8_t { GE, GF };

std::string_view to_string(Case c);
std::string_view to_string(Role r);
std::string_view to_string(Label l);
std::string_view to_string(FineCategory f);
std::string_view to_string(Split s);
std::string_view to_string(PromptMode m);

std::optional<Case> parse_case(std::string_view s);
/// Unrecognised tokens yield nullopt; callers decide whether that means
/// UNKNOWN (transcripts) or a hard error (corpus files).
std::optional<Role> parse_role(std::string_view s);
std::optional<Label> parse_label_token(std::string_view s);
/// Accepts the canonical names and the human-readable guideline spellings
/// ("Sexual Talk", "Body Shame", "Encouragement to the Harasser", ...).
std::optional<FineCategory> parse_fine_category(std::string_view s);
std::optional<Split> parse_split(std::string_view s);
std::optional<PromptMode> parse_prompt_mode(std::string_view s);

/// Where a message came from. Synthetic messages carry the generating model.
struct Provenance {
  std::optional<std::string> synthetic_model;

  static Provenance authentic() { return {}; }
  static Provenance synthetic(std::string model) { return {std::move(model)}; }
  bool is_synthetic() const { return synthetic_model.has_value(); }
  bool operator==(const Provenance&) const = default;
};

}  // namespace cbforge
