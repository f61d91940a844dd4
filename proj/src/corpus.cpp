#include "cbforge/corpus.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "cbforge/digest.hpp"
#include "cbforge/errors.hpp"
#include "json.hpp"

namespace cbforge {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string required_string(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw ParseError(fmt::format("line {}: field '{}' missing or not a string", line, key));
  }
  return it->get<std::string>();
}

Provenance parse_provenance(const std::string& s, std::size_t line) {
  if (s == "authentic") return Provenance::authentic();
  constexpr std::string_view prefix = "synthetic:";
  if (s.starts_with(prefix) && s.size() > prefix.size()) {
    return Provenance::synthetic(s.substr(prefix.size()));
  }
  throw ParseError(fmt::format("line {}: bad provenance '{}'", line, s));
}

Message parse_message(std::string_view text, std::size_t line) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("line {}: malformed JSON: {}", line, e.what()));
  }
  if (!obj.is_object()) throw ParseError(fmt::format("line {}: not a JSON object", line));

  Message m;
  m.id = required_string(obj, "id", line);
  if (m.id.empty()) throw ParseError(fmt::format("line {}: empty id", line));
  m.conversation_id = required_string(obj, "conversation_id", line);

  const std::string case_str = required_string(obj, "case", line);
  auto c = parse_case(case_str);
  if (!c) throw ParseError(fmt::format("line {}: unknown case '{}'", line, case_str));
  m.case_id = *c;

  const std::string role_str = required_string(obj, "role", line);
  auto r = parse_role(role_str);
  if (!r) throw ParseError(fmt::format("line {}: unknown role '{}'", line, role_str));
  m.role = *r;

  auto seq = obj.find("seq");
  if (seq == obj.end() || !seq->is_number_integer() || seq->get<long long>() < 1) {
    throw ParseError(fmt::format("line {}: field 'seq' must be an integer >= 1", line));
  }
  m.seq = static_cast<int>(seq->get<long long>());

  m.text = required_string(obj, "text", line);

  if (auto f = obj.find("fine_category"); f != obj.end() && !f->is_null()) {
    if (!f->is_string()) throw ParseError(fmt::format("line {}: fine_category not a string", line));
    auto fc = parse_fine_category(f->get<std::string>());
    if (!fc) {
      throw ParseError(
          fmt::format("line {}: unknown fine_category '{}'", line, f->get<std::string>()));
    }
    m.fine_category = *fc;
  }
  if (auto s = obj.find("split"); s != obj.end() && !s->is_null()) {
    if (!s->is_string()) throw ParseError(fmt::format("line {}: split not a string", line));
    auto sp = parse_split(s->get<std::string>());
    if (!sp) throw ParseError(fmt::format("line {}: unknown split '{}'", line, s->get<std::string>()));
    m.split = *sp;
  }
  if (auto p = obj.find("provenance"); p != obj.end() && !p->is_null()) {
    if (!p->is_string()) throw ParseError(fmt::format("line {}: provenance not a string", line));
    m.provenance = parse_provenance(p->get<std::string>(), line);
  }
  return m;
}

}  // namespace

Label binarize(FineCategory fine, Role /*speaker_role*/) {
  switch (fine) {
    case FineCategory::Defense:
    case FineCategory::None:
      return Label::NoHarm;
    default:
      return Label::Harm;
  }
}

std::shared_ptr<const Corpus> Corpus::from_messages(std::vector<Message> messages) {
  std::shared_ptr<Corpus> c(new Corpus());
  c->index_.reserve(messages.size());
  std::unordered_map<std::string, int> last_seq;
  for (std::size_t i = 0; i < messages.size(); ++i) {
    const Message& m = messages[i];
    if (!c->index_.emplace(m.id, i).second) {
      throw IntegrityError(fmt::format("duplicate message id \"{}\"", m.id));
    }
    if (blank(m.text)) {
      throw IntegrityError(fmt::format("message \"{}\" has empty text", m.id));
    }
    auto [it, inserted] = last_seq.emplace(m.conversation_id, m.seq);
    if (!inserted) {
      if (m.seq <= it->second) {
        throw IntegrityError(fmt::format(
            "message \"{}\": seq {} not increasing in conversation \"{}\"", m.id, m.seq,
            m.conversation_id));
      }
      it->second = m.seq;
    }
  }
  c->messages_ = std::move(messages);
  c->gold_ = std::make_shared<GoldView>();
  return c;
}

std::optional<std::size_t> Corpus::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

CorpusPtr ingest_corpus_text(std::string_view jsonl) {
  std::vector<Message> messages;
  std::unordered_map<std::string, std::size_t> first_line;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= jsonl.size()) {
    std::size_t end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    std::string_view line = jsonl.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    if (!blank(line)) {
      Message m = parse_message(line, line_no);
      auto [it, inserted] = first_line.emplace(m.id, line_no);
      if (!inserted) {
        throw IntegrityError(fmt::format("duplicate message id \"{}\" on lines {} and {}",
                                         m.id, it->second, line_no));
      }
      messages.push_back(std::move(m));
    }
    if (end == jsonl.size()) break;
    pos = end + 1;
  }
  return Corpus::from_messages(std::move(messages));
}

CorpusPtr ingest_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open corpus file {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return ingest_corpus_text(buf.str());
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const Message& m : corpus.messages()) {
    ordered_json j;
    j["id"] = m.id;
    j["conversation_id"] = m.conversation_id;
    j["case"] = to_string(m.case_id);
    j["role"] = to_string(m.role);
    j["seq"] = m.seq;
    j["text"] = m.text;
    if (m.fine_category) j["fine_category"] = to_string(*m.fine_category);
    if (m.split) j["split"] = to_string(*m.split);
    if (m.provenance.is_synthetic()) j["provenance"] = "synthetic:" + *m.provenance.synthetic_model;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << serialize_corpus(corpus);
}

std::vector<std::string> DatasetSlice::ids() const {
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(corpus->at(r).id);
  return out;
}

bool DatasetSlice::has_unique_ids() const {
  std::unordered_set<std::size_t> seen(rows.begin(), rows.end());
  return seen.size() == rows.size();
}

DatasetSlice DatasetSlice::with_view(std::shared_ptr<const LabelView> v) const {
  DatasetSlice s = *this;
  s.view = std::move(v);
  return s;
}

SliceStats slice_stats(const DatasetSlice& slice) {
  SliceStats st;
  st.size = slice.size();
  for (std::size_t i = 0; i < slice.size(); ++i) {
    if (auto l = slice.label(i)) {
      ++st.labeled;
      if (*l == Label::Harm) ++st.harm;
    }
  }
  return st;
}

const DatasetSlice& SplitSet::get(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Validation: return validation;
    case Split::Test: return test;
  }
  return test;
}

SplitSet canonical_splits(const CorpusPtr& corpus, std::optional<HashSplitRule> rule) {
  const auto msgs = corpus->messages();
  const auto tagged = static_cast<std::size_t>(
      std::count_if(msgs.begin(), msgs.end(), [](const Message& m) { return m.split.has_value(); }));
  if (tagged != 0 && tagged != msgs.size()) {
    throw ConfigError(fmt::format("{} of {} messages carry split tags; tag all or none",
                                  tagged, msgs.size()));
  }
  if (tagged == 0 && !rule) {
    throw ConfigError("corpus has no split tags and no split rule is configured");
  }
  if (rule && (rule->train_percent < 0 || rule->validation_percent < 0 ||
               rule->train_percent + rule->validation_percent > 100)) {
    throw ConfigError("split rule percentages must be non-negative and sum to at most 100");
  }

  SplitSet out;
  for (Split s : kAllSplits) {
    DatasetSlice& slice = s == Split::Train ? out.train
                          : s == Split::Validation ? out.validation
                                                   : out.test;
    slice.corpus = corpus;
    slice.split = s;
    slice.view = corpus->gold_view();
  }
  for (std::size_t row = 0; row < msgs.size(); ++row) {
    const Message& m = msgs[row];
    Split s;
    if (tagged) {
      s = *m.split;
    } else {
      const std::string_view key =
          rule->granularity == HashSplitRule::Granularity::Conversation ? m.conversation_id : m.id;
      const auto bucket = static_cast<int>(fnv1a64(key) % 100);
      s = bucket < rule->train_percent ? Split::Train
          : bucket < rule->train_percent + rule->validation_percent ? Split::Validation
                                                                    : Split::Test;
    }
    (s == Split::Train ? out.train : s == Split::Validation ? out.validation : out.test)
        .rows.push_back(row);
  }
  return out;
}

DatasetSlice strip_gold_labels(const DatasetSlice& slice) {
  return slice.with_view(std::make_shared<StrippedView>());
}

std::array<std::size_t, 4> per_case_counts(const DatasetSlice& slice) {
  std::array<std::size_t, 4> counts{};
  for (std::size_t i = 0; i < slice.size(); ++i) {
    ++counts[static_cast<std::size_t>(slice.message(i).case_id)];
  }
  return counts;
}

}  // namespace cbforge
