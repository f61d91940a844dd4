#include "cbforge/prompt_kit.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "cbforge/digest.hpp"
#include "cbforge/errors.hpp"
#include "toml.hpp"

namespace cbforge {
namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read prompt file {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

PromptTemplate::PromptTemplate(std::string name, std::string body)
    : name_(std::move(name)), body_(std::move(body)) {
  std::size_t pos = 0;
  while (pos < body_.size()) {
    const std::size_t open = body_.find_first_of("{}", pos);
    if (open == std::string::npos) break;
    if (body_[open] == '}') {
      throw ConfigError(fmt::format("template {}: stray '}}' at offset {}", name_, open));
    }
    const std::size_t close = body_.find_first_of("{}\n", open + 1);
    if (close == std::string::npos || body_[close] != '}' || close == open + 1) {
      throw ConfigError(fmt::format("template {}: unterminated placeholder at offset {}", name_, open));
    }
    std::string key = body_.substr(open + 1, close - open - 1);
    if (std::find(placeholders_.begin(), placeholders_.end(), key) == placeholders_.end()) {
      placeholders_.push_back(std::move(key));
    }
    pos = close + 1;
  }
}

std::string PromptTemplate::render(
    const std::map<std::string, std::string, std::less<>>& bindings) const {
  for (const auto& key : placeholders_) {
    if (!bindings.contains(key)) {
      throw ConfigError(fmt::format("template {}: no binding for {{{}}}", name_, key));
    }
  }
  std::string out;
  out.reserve(body_.size() + 256);
  std::size_t pos = 0;
  while (pos < body_.size()) {
    const std::size_t open = body_.find('{', pos);
    if (open == std::string::npos) {
      out.append(body_, pos, std::string::npos);
      break;
    }
    out.append(body_, pos, open - pos);
    const std::size_t close = body_.find('}', open);
    const auto key = std::string_view(body_).substr(open + 1, close - open - 1);
    out += bindings.find(key)->second;
    pos = close + 1;
  }
  return out;
}

PromptKit PromptKit::load(const std::filesystem::path& dir) {
  PromptKit kit;
  kit.ge_ = PromptTemplate("ge_label", read_file(dir / "ge_label.txt"));
  kit.gf_ = PromptTemplate("gf_label", read_file(dir / "gf_label.txt"));
  kit.synth_ = PromptTemplate("synth_gen", read_file(dir / "synth_gen.txt"));
  kit.guideline_ = read_file(dir / "guideline.txt");

  const auto cases_path = dir / "cases.toml";
  toml::table tbl;
  try {
    tbl = toml::parse_file(cases_path.string());
  } catch (const toml::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", cases_path.string(), e.description()));
  }
  for (Case c : kAllCases) {
    const auto key = std::string(to_string(c));
    const toml::table* card = tbl[key].as_table();
    if (!card) throw ConfigError(fmt::format("{}: missing case [{}]", cases_path.string(), key));
    CaseCard& out = kit.cards_[static_cast<std::size_t>(c)];
    out.case_id = c;
    out.description = (*card)["description"].value_or(std::string{});
    out.problem_type = (*card)["problem_type"].value_or(std::string{});
    if (out.description.empty() || out.problem_type.empty()) {
      throw ConfigError(fmt::format("{}: case {} needs description and problem_type",
                                    cases_path.string(), key));
    }
  }
  return kit;
}

std::string PromptKit::render_label_prompt(PromptMode mode, std::string_view text) const {
  return render_label_prompt(mode, text, guideline_);
}

std::string PromptKit::render_label_prompt(PromptMode mode, std::string_view text,
                                           std::string_view guideline) const {
  if (blank(text)) throw PreconditionError("label prompt needs non-empty message text");
  if (mode == PromptMode::GF) return gf_.render({{"Text", std::string(text)}});
  if (blank(guideline)) throw ConfigError("GE prompt requires a non-empty guideline");
  return ge_.render({{"Annotation-guideline", std::string(guideline)}, {"Text", std::string(text)}});
}

std::string PromptKit::render_generation_prompt(const CaseCard& card) const {
  if (blank(card.description) || blank(card.problem_type)) {
    throw ConfigError(fmt::format("case card {} is incomplete", to_string(card.case_id)));
  }
  return synth_.render({{"Case", card.description}, {"Type of Problem", card.problem_type}});
}

std::string PromptKit::digest() const {
  std::string all = ge_.body() + '\0' + gf_.body() + '\0' + synth_.body() + '\0' + guideline_;
  for (const auto& c : cards_) all += '\0' + c.description + '\0' + c.problem_type;
  return sha256_hex(all);
}

}  // namespace cbforge
