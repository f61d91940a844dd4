#include "cbforge/annotator.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cctype>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <unordered_map>

#include "cbforge/errors.hpp"
#include "json.hpp"

namespace cbforge {
namespace {

bool word_boundary_before(std::string_view s, std::size_t pos) {
  return pos == 0 || !std::isalnum(static_cast<unsigned char>(s[pos - 1]));
}

// Negated forms: "no<sep>*harm", "not<sep>*harm", "non<sep>*harm" and
// "harmless", where sep is whitespace, '-' or '_'.
bool contains_no_harm(std::string_view lower) {
  for (std::string_view neg : {"no", "not", "non"}) {
    for (std::size_t pos = lower.find(neg); pos != std::string_view::npos;
         pos = lower.find(neg, pos + 1)) {
      if (!word_boundary_before(lower, pos)) continue;
      std::size_t k = pos + neg.size();
      while (k < lower.size() && (std::isspace(static_cast<unsigned char>(lower[k])) ||
                                  lower[k] == '-' || lower[k] == '_')) {
        ++k;
      }
      if (lower.substr(k, 4) == "harm") return true;
    }
  }
  for (std::size_t pos = lower.find("harmless"); pos != std::string_view::npos;
       pos = lower.find("harmless", pos + 1)) {
    if (word_boundary_before(lower, pos)) return true;
  }
  return false;
}

bool contains_harm(std::string_view lower) {
  for (std::size_t pos = lower.find("harm"); pos != std::string_view::npos;
       pos = lower.find("harm", pos + 1)) {
    // "harmful" counts; "pharmacy" does not.
    if (word_boundary_before(lower, pos)) return true;
  }
  return false;
}

std::string_view to_string(ParseStatus s) { return s == ParseStatus::Parsed ? "Parsed" : "Missing"; }

}  // namespace

ParsedLabel parse_label(std::string_view raw) {
  std::string lower(raw);
  for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (contains_no_harm(lower)) return ParsedLabel::NoHarm;
  if (contains_harm(lower)) return ParsedLabel::Harm;
  return ParsedLabel::Missing;
}

std::string_view to_string(LabelPolicy p) { return p == LabelPolicy::D0 ? "D0" : "FU"; }

std::optional<LabelPolicy> parse_label_policy(std::string_view s) {
  if (s == "D0" || s == "d0") return LabelPolicy::D0;
  if (s == "FU" || s == "fu") return LabelPolicy::FU;
  return std::nullopt;
}

std::string AnnotationRun::source() const {
  return fmt::format("llm:{}:{}", model, to_string(prompt_mode));
}

std::vector<EffectiveLabel> AnnotationRun::assignments() const {
  std::vector<EffectiveLabel> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (r.parse_status == ParseStatus::Parsed) {
      out.push_back({r.message_id, *r.label, false});
    } else if (policy == LabelPolicy::D0) {
      out.push_back({r.message_id, Label::NoHarm, true});
    }
  }
  return out;
}

std::vector<std::string> AnnotationRun::dropped() const {
  std::vector<std::string> out;
  if (policy != LabelPolicy::FU) return out;
  for (const auto& r : records) {
    if (r.parse_status == ParseStatus::Missing) out.push_back(r.message_id);
  }
  return out;
}

std::shared_ptr<const AssignedView> AnnotationRun::view() const {
  std::unordered_map<std::string, Label> labels;
  for (const auto& a : assignments()) labels.emplace(a.message_id, a.label);
  return std::make_shared<AssignedView>(source(), std::move(labels));
}

AnnotationRun annotate_slice(const DatasetSlice& slice, LlmGateway& gateway, const PromptKit& kit,
                             const AnnotateOptions& opts) {
  if (slice.empty()) throw PreconditionError("cannot annotate an empty slice");
  if (opts.model.empty()) throw ConfigError("annotation needs a model name");

  AnnotationRun run;
  run.model = opts.model;
  run.prompt_mode = opts.prompt_mode;
  run.policy = opts.policy;
  const std::string source = run.source();

  std::vector<std::optional<LabelAssignment>> done(slice.size());
  std::exception_ptr failure;
  std::mutex failure_mu;
  const auto n = static_cast<std::int64_t>(slice.size());
  const int threads = std::max(1, opts.parallelism);

#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::int64_t i = 0; i < n; ++i) {
    {
      std::lock_guard lock(failure_mu);
      if (failure) continue;
    }
    const Message& m = slice.message(static_cast<std::size_t>(i));
    try {
      ChatRequest req;
      req.model = opts.model;
      req.prompt = kit.render_label_prompt(opts.prompt_mode, m.text);
      req.temperature = opts.temperature;
      req.max_tokens = opts.max_tokens;
      const ChatResponse resp = gateway.complete(req);
      LabelAssignment a;
      a.message_id = m.id;
      a.source = source;
      const ParsedLabel parsed =
          resp.finish_reason == FinishReason::Refusal ? ParsedLabel::Missing : parse_label(resp.text);
      if (parsed != ParsedLabel::Missing) {
        a.parse_status = ParseStatus::Parsed;
        a.label = parsed == ParsedLabel::Harm ? Label::Harm : Label::NoHarm;
      }
      done[static_cast<std::size_t>(i)] = std::move(a);
    } catch (...) {
      std::lock_guard lock(failure_mu);
      if (!failure) failure = std::current_exception();
    }
  }

  for (auto& d : done) {
    if (!d) continue;
    if (d->parse_status == ParseStatus::Missing) ++run.unparsed_count;
    run.records.push_back(std::move(*d));
  }
  if (failure) {
    if (!opts.out_dir.empty()) {
      write_annotation_run(run, opts.out_dir, false, opts.config_digest);
      spdlog::warn("annotation aborted; {} of {} results persisted to {}", run.records.size(),
                   slice.size(), opts.out_dir.string());
    }
    std::rethrow_exception(failure);
  }
  if (!opts.out_dir.empty()) write_annotation_run(run, opts.out_dir, true, opts.config_digest);
  return run;
}

AnnotationScore score_against_gold(const AnnotationRun& run, const Corpus& corpus,
                                   const LabelView& gold) {
  AnnotationScore score;
  ConfusionMatrix cm;
  for (const auto& a : run.assignments()) {
    auto row = corpus.find(a.message_id);
    if (!row) {
      ++score.excluded;
      continue;
    }
    auto g = gold.label(corpus.at(*row));
    if (!g) {
      ++score.excluded;
      continue;
    }
    cm.add(a.label, *g);
  }
  score.excluded += run.dropped().size();
  if (cm.total() == 0) throw ArithmeticError("no annotated message has a gold label");
  score.metrics = metrics_from(cm);
  score.scored = cm.total();
  return score;
}

void write_annotation_run(const AnnotationRun& run, const std::filesystem::path& dir,
                          bool complete, const std::string& config_digest) {
  std::filesystem::create_directories(dir);
  std::unordered_map<std::string, EffectiveLabel> effective;
  for (const auto& a : run.assignments()) effective.emplace(a.message_id, a);
  {
    std::ofstream out(dir / "assignments.jsonl", std::ios::binary);
    if (!out) throw IoError(fmt::format("cannot write {}", (dir / "assignments.jsonl").string()));
    for (const auto& r : run.records) {
      nlohmann::ordered_json j;
      j["message_id"] = r.message_id;
      j["label"] = r.label ? nlohmann::ordered_json(to_string(*r.label)) : nullptr;
      j["source"] = r.source;
      j["parse_status"] = to_string(r.parse_status);
      auto it = effective.find(r.message_id);
      j["effective_label"] =
          it == effective.end() ? nlohmann::ordered_json(nullptr)
                                : nlohmann::ordered_json(to_string(it->second.label));
      out << j.dump() << '\n';
    }
  }
  nlohmann::ordered_json m;
  m["model"] = run.model;
  m["prompt_mode"] = to_string(run.prompt_mode);
  m["policy"] = to_string(run.policy);
  m["complete"] = complete;
  m["messages"] = run.records.size();
  m["parsed"] = run.records.size() - run.unparsed_count;
  m["unparsed_count"] = run.unparsed_count;
  m["dropped"] = run.dropped().size();
  m["assignments"] = run.assignments().size();
  m["config_digest"] = config_digest;
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  out << m.dump(2) << '\n';
}

AnnotationRun read_annotation_run(const std::filesystem::path& dir) {
  std::ifstream min(dir / "manifest.json", std::ios::binary);
  if (!min) throw IoError(fmt::format("no annotation manifest in {}", dir.string()));
  AnnotationRun run;
  try {
    const auto m = nlohmann::json::parse(min);
    run.model = m.at("model").get<std::string>();
    run.prompt_mode = parse_prompt_mode(m.at("prompt_mode").get<std::string>()).value();
    run.policy = parse_label_policy(m.at("policy").get<std::string>()).value();
  } catch (const std::exception& e) {
    throw ParseError(fmt::format("bad annotation manifest: {}", e.what()));
  }
  std::ifstream in(dir / "assignments.jsonl", std::ios::binary);
  if (!in) throw IoError(fmt::format("no assignments.jsonl in {}", dir.string()));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LabelAssignment a;
      a.message_id = j.at("message_id").get<std::string>();
      a.source = j.at("source").get<std::string>();
      a.parse_status =
          j.at("parse_status").get<std::string>() == "Parsed" ? ParseStatus::Parsed : ParseStatus::Missing;
      if (!j.at("label").is_null()) a.label = parse_label_token(j["label"].get<std::string>());
      if (a.parse_status == ParseStatus::Parsed && !a.label) throw ParseError("parsed without label");
      if (a.parse_status == ParseStatus::Missing) {
        a.label.reset();
        ++run.unparsed_count;
      }
      run.records.push_back(std::move(a));
    } catch (const std::exception& e) {
      throw ParseError(fmt::format("assignments.jsonl line {}: {}", line_no, e.what()));
    }
  }
  return run;
}

}  // namespace cbforge
