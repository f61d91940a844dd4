#include "cbforge/synthesizer.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cctype>
#include <exception>
#include <fstream>
#include <mutex>
#include <omp.h>

namespace cbforge {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

void skip(std::string_view s, std::size_t& k, std::string_view chars) {
  while (k < s.size() && (is_space(s[k]) || chars.find(s[k]) != std::string_view::npos)) ++k;
}

std::optional<TranscriptLine> parse_line(std::string_view line) {
  std::size_t k = 0;
  skip(line, k, "*_#>");
  std::size_t digits = k;
  while (k < line.size() && std::isdigit(static_cast<unsigned char>(line[k]))) ++k;
  if (k == digits || k - digits > 6) return std::nullopt;
  int seq = std::stoi(std::string(line.substr(digits, k - digits)));
  if (k >= line.size() || (line[k] != '.' && line[k] != ')')) return std::nullopt;
  ++k;
  skip(line, k, "*_");
  std::size_t role_begin = k;
  while (k < line.size() && (std::isalnum(static_cast<unsigned char>(line[k])) || line[k] == '_')) ++k;
  if (k == role_begin) return std::nullopt;
  std::string token(line.substr(role_begin, k - role_begin));
  skip(line, k, "*_");
  if (k >= line.size() || line[k] != ':') return std::nullopt;
  ++k;
  skip(line, k, "*");
  std::string_view text = trim(line.substr(k));
  if (text.empty()) return std::nullopt;
  for (char& c : token) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return TranscriptLine{seq, parse_role(token).value_or(Role::UNKNOWN), std::string(text)};
}

std::string file_safe(std::string_view s) {
  std::string out;
  for (char c : s) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
  }
  return out;
}

std::string conversation_id(std::string_view model, Case c, int index) {
  return fmt::format("syn:{}:{}:{}", model, to_string(c), index);
}

}  // namespace

ParsedTranscript parse_conversation(std::string_view raw) {
  ParsedTranscript out;
  std::size_t start = 0;
  while (start <= raw.size()) {
    std::size_t end = raw.find('\n', start);
    if (end == std::string_view::npos) end = raw.size();
    std::string_view line = trim(raw.substr(start, end - start));
    start = end + 1;
    if (line.empty()) continue;
    auto parsed = parse_line(line);
    if (!parsed || (!out.lines.empty() && parsed->seq <= out.lines.back().seq)) {
      ++out.skipped_lines;
      continue;
    }
    out.lines.push_back(std::move(*parsed));
  }
  if (out.lines.empty()) throw ParseError("no numbered \"<n>. ROLE: text\" lines in reply");
  return out;
}

std::string format_transcript(const std::vector<TranscriptLine>& lines) {
  std::string out;
  for (const auto& l : lines) out += fmt::format("{}. {}: {}\n", l.seq, to_string(l.role), l.text);
  return out;
}

GeneratedConversation generate_conversation(const CaseCard& card, LlmGateway& gateway,
                                            const PromptKit& kit, const GenerationOptions& opts,
                                            int generation_index) {
  if (opts.model.empty()) throw ConfigError("generation model is not set");
  ChatRequest req;
  req.model = opts.model;
  req.prompt = kit.render_generation_prompt(card);
  req.temperature = opts.temperature;
  req.max_tokens = opts.max_tokens;

  GeneratedConversation conv;
  conv.case_id = card.case_id;
  conv.model = opts.model;
  conv.generation_index = generation_index;
  for (int attempt = 0; attempt <= opts.max_rejections; ++attempt) {
    req.seed_hint = static_cast<std::int64_t>(generation_index) + attempt * 1'000'003LL;
    ChatResponse resp = gateway.complete_until_accepted(req, opts.max_regen);

    std::filesystem::path raw_path;
    if (!opts.raw_dir.empty()) {
      std::filesystem::create_directories(opts.raw_dir);
      std::string stem = fmt::format("{}_{}_{:04d}", file_safe(opts.model), to_string(card.case_id),
                                     generation_index);
      if (attempt > 0) stem += fmt::format("_r{}", attempt);
      raw_path = opts.raw_dir / (stem + ".txt");
      std::ofstream(raw_path, std::ios::binary) << resp.text;
    }

    ParsedTranscript parsed;
    try {
      parsed = parse_conversation(resp.text);
    } catch (const ParseError& e) {
      std::string where = raw_path.empty() ? std::string() : " (raw reply: " + raw_path.string() + ")";
      throw TranscriptParseError(
          fmt::format("case {} generation {}: {}{}", to_string(card.case_id), generation_index,
                      e.what(), where),
          resp.text);
    }
    if (parsed.lines.size() >= opts.min_messages) {
      conv.raw_text = std::move(resp.text);
      conv.messages = std::move(parsed.lines);
      conv.skipped_lines = parsed.skipped_lines;
      return conv;
    }
    ++conv.rejected;
    spdlog::warn("case {} generation {}: {} messages, fewer than {}; regenerating",
                 to_string(card.case_id), generation_index, parsed.lines.size(), opts.min_messages);
  }
  throw GenerationError(fmt::format("case {} generation {}: {} replies shorter than {} messages",
                                    to_string(card.case_id), generation_index, conv.rejected,
                                    opts.min_messages));
}

void SyntheticPool::add(GeneratedConversation conv) {
  auto key = std::make_tuple(conv.case_id, conv.model, conv.generation_index);
  if (convs_.count(key)) {
    throw IntegrityError("duplicate synthetic conversation " +
                         conversation_id(conv.model, conv.case_id, conv.generation_index));
  }
  convs_.emplace(std::move(key), std::move(conv));
}

std::size_t SyntheticPool::message_count(Case c) const {
  std::size_t n = 0;
  for (const auto& [key, conv] : convs_) {
    if (conv.case_id == c) n += conv.messages.size();
  }
  return n;
}

std::size_t SyntheticPool::message_count(Case c, std::string_view model) const {
  std::size_t n = 0;
  for (const auto& [key, conv] : convs_) {
    if (conv.case_id == c && conv.model == model) n += conv.messages.size();
  }
  return n;
}

int SyntheticPool::next_generation_index(Case c, std::string_view model) const {
  int next = 0;
  for (const auto& [key, conv] : convs_) {
    if (conv.case_id == c && conv.model == model) next = std::max(next, conv.generation_index + 1);
  }
  return next;
}

CorpusPtr SyntheticPool::to_corpus() const {
  std::vector<Message> out;
  for (const auto& [key, conv] : convs_) {
    std::string cid = conversation_id(conv.model, conv.case_id, conv.generation_index);
    for (const auto& line : conv.messages) {
      Message m;
      m.id = fmt::format("{}:{}", cid, line.seq);
      m.conversation_id = cid;
      m.case_id = conv.case_id;
      m.role = line.role;
      m.seq = line.seq;
      m.text = line.text;
      m.provenance = Provenance::synthetic(conv.model);
      out.push_back(std::move(m));
    }
  }
  return Corpus::from_messages(std::move(out));
}

SyntheticPool SyntheticPool::from_corpus(const Corpus& corpus) {
  std::map<std::string, GeneratedConversation> by_id;
  for (const auto& m : corpus.messages()) {
    if (!m.provenance.is_synthetic()) {
      throw ContractViolation("message \"" + m.id + "\" in synthetic pool is authentic");
    }
    auto [it, fresh] = by_id.try_emplace(m.conversation_id);
    auto& conv = it->second;
    if (fresh) {
      conv.case_id = m.case_id;
      conv.model = *m.provenance.synthetic_model;
      auto colon = m.conversation_id.rfind(':');
      try {
        conv.generation_index = std::stoi(m.conversation_id.substr(colon + 1));
      } catch (const std::exception&) {
        throw ParseError("synthetic conversation id \"" + m.conversation_id +
                         "\" has no generation index");
      }
    }
    conv.messages.push_back({m.seq, m.role, m.text});
  }
  SyntheticPool pool;
  for (auto& [id, conv] : by_id) {
    conv.raw_text = format_transcript(conv.messages);
    pool.add(std::move(conv));
  }
  return pool;
}

void grow_pool(SyntheticPool& pool, const std::vector<Case>& cases,
               const std::array<std::size_t, 4>& targets, LlmGateway& gateway,
               const PromptKit& kit, const GenerationOptions& opts, int max_conversations) {
  std::mutex mu;
  std::exception_ptr failure;
  const int n = static_cast<int>(cases.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(1, n))
  for (int i = 0; i < n; ++i) {
    Case c = cases[static_cast<std::size_t>(i)];
    try {
      std::size_t target = targets[static_cast<std::size_t>(c)];
      std::size_t have;
      int index;
      {
        std::lock_guard lock(mu);
        have = pool.message_count(c, opts.model);
        index = pool.next_generation_index(c, opts.model);
      }
      int made = 0;
      while (have < target) {
        if (made >= max_conversations) {
          throw GenerationError(fmt::format("case {}: {} messages after {} conversations, need {}",
                                            to_string(c), have, made, target));
        }
        GeneratedConversation conv = generate_conversation(kit.card(c), gateway, kit, opts, index++);
        ++made;
        have += conv.messages.size();
        std::lock_guard lock(mu);
        pool.add(std::move(conv));
      }
    } catch (...) {
      std::lock_guard lock(mu);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

AnnotationRun label_synthetic_pool(const CorpusPtr& pool, LlmGateway& gateway,
                                   const PromptKit& kit, const std::string& labeling_model,
                                   PromptMode mode, int parallelism,
                                   const std::filesystem::path& out_dir) {
  DatasetSlice all{pool, {}, Split::Train, std::make_shared<StrippedView>()};
  all.rows.resize(pool->size());
  for (std::size_t i = 0; i < all.rows.size(); ++i) all.rows[i] = i;
  for (const auto& m : pool->messages()) {
    if (!m.provenance.is_synthetic()) {
      throw ContractViolation("message \"" + m.id + "\" in synthetic pool is authentic");
    }
  }
  AnnotateOptions opts;
  opts.model = labeling_model;
  opts.prompt_mode = mode;
  opts.policy = LabelPolicy::FU;
  opts.parallelism = parallelism;
  opts.out_dir = out_dir;
  return annotate_slice(all, gateway, kit, opts);
}

std::shared_ptr<const AssignedView> role_heuristic_view(const Corpus& pool) {
  std::unordered_map<std::string, Label> labels;
  for (const auto& m : pool.messages()) {
    bool bully = m.role == Role::BULLY1 || m.role == Role::BULLY2 || m.role == Role::BSUP1 ||
                 m.role == Role::BSUP2 || m.role == Role::BSUP3 || m.role == Role::BSUP4;
    labels.emplace(m.id, bully ? Label::Harm : Label::NoHarm);
  }
  return std::make_shared<AssignedView>("heuristic:role", std::move(labels));
}

DatasetSlice pool_slice(const CorpusPtr& pool, std::shared_ptr<const LabelView> view) {
  DatasetSlice out{pool, {}, Split::Train, std::move(view)};
  for (std::size_t i = 0; i < pool->size(); ++i) {
    if (out.view->label(pool->at(i))) out.rows.push_back(i);
  }
  return out;
}

}  // namespace cbforge
