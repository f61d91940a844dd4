#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "cbforge/annotator.hpp"
#include "cbforge/errors.hpp"
#include "test_util.hpp"

using namespace cbforge;

namespace {

std::string unescape(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size() && s[i + 1] == 'n') {
      out += '\n';
      ++i;
    } else {
      out += s[i];
    }
  }
  return out;
}

ParsedLabel expected_label(const std::string& s) {
  if (s == "Harm") return ParsedLabel::Harm;
  if (s == "NoHarm") return ParsedLabel::NoHarm;
  if (s == "Missing") return ParsedLabel::Missing;
  throw std::runtime_error("bad oracle label " + s);
}

std::shared_ptr<const PromptKit> kit() {
  static auto k = std::make_shared<PromptKit>(PromptKit::load(testutil::source_dir() / "prompts"));
  return k;
}

CorpusPtr small_corpus(std::size_t n) {
  std::vector<Message> msgs;
  for (std::size_t i = 0; i < n; ++i) {
    msgs.push_back(testutil::message("m" + std::to_string(i), "c" + std::to_string(i), Case::A, 1,
                                     fmt::format("message number {}", i), i % 3 == 0, Split::Train));
  }
  return Corpus::from_messages(std::move(msgs));
}

DatasetSlice whole(const CorpusPtr& corpus) {
  DatasetSlice s;
  s.corpus = corpus;
  for (std::size_t i = 0; i < corpus->size(); ++i) s.rows.push_back(i);
  s.view = corpus->gold_view();
  return s;
}

}  // namespace

TEST(ParseLabel, MatchesOracleTable) {
  std::istringstream in(testutil::slurp(testutil::source_dir() / "tests/data/parse_label_oracle.tsv"));
  std::string line;
  std::size_t checked = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    ASSERT_NE(tab, std::string::npos) << line;
    const auto reply = unescape(line.substr(tab + 1));
    EXPECT_EQ(parse_label(reply), expected_label(line.substr(0, tab))) << "reply: " << reply;
    ++checked;
  }
  EXPECT_EQ(checked, 50u);
}

TEST(ParseLabel, NegationWinsOverHarm) {
  EXPECT_EQ(parse_label("No Harm"), ParsedLabel::NoHarm);
  EXPECT_EQ(parse_label("no-harm"), ParsedLabel::NoHarm);
  EXPECT_EQ(parse_label("This is harmless banter."), ParsedLabel::NoHarm);
  EXPECT_EQ(parse_label("Label: Harm"), ParsedLabel::Harm);
  EXPECT_EQ(parse_label("I'm not sure."), ParsedLabel::Missing);
  EXPECT_EQ(parse_label(""), ParsedLabel::Missing);
}

TEST(Policy, ParseAndPrint) {
  EXPECT_EQ(parse_label_policy("d0"), LabelPolicy::D0);
  EXPECT_EQ(parse_label_policy("FU"), LabelPolicy::FU);
  EXPECT_FALSE(parse_label_policy("X").has_value());
  EXPECT_EQ(to_string(LabelPolicy::FU), "FU");
}

class PolicyAccounting : public ::testing::TestWithParam<LabelPolicy> {};

TEST_P(PolicyAccounting, RefusalsBecomeMissing) {
  const std::size_t n = 30, k = 7;
  auto corpus = small_corpus(n);
  std::set<std::string> refused;
  for (std::size_t i = 0; i < k; ++i) refused.insert(fmt::format("message number {}", i * 4));
  auto mock = std::make_shared<MockBackend>([refused](const ChatRequest& req) {
    auto text = testutil::prompt_text(req.prompt);
    if (!text.empty() && text.back() == '.') text.pop_back();
    if (refused.count(text)) return BackendReply{200, "I'm sorry, I can't help with that.", std::nullopt, ""};
    return BackendReply{200, "Harm", std::nullopt, ""};
  });
  LlmGateway g(mock);
  AnnotateOptions o;
  o.model = "m";
  o.policy = GetParam();
  o.parallelism = 4;
  auto run = annotate_slice(whole(corpus), g, *kit(), o);
  ASSERT_EQ(run.records.size(), n);
  EXPECT_EQ(run.unparsed_count, k);
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(run.records[i].message_id, corpus->at(i).id);

  const auto eff = run.assignments();
  if (GetParam() == LabelPolicy::D0) {
    EXPECT_EQ(eff.size(), n);
    EXPECT_TRUE(run.dropped().empty());
    std::size_t defaulted = 0, noharm = 0;
    for (const auto& e : eff) {
      defaulted += e.defaulted;
      noharm += e.label == Label::NoHarm;
    }
    EXPECT_EQ(defaulted, k);
    EXPECT_EQ(noharm, k);
    EXPECT_EQ(run.view()->size(), n);
  } else {
    EXPECT_EQ(eff.size(), n - k);
    EXPECT_EQ(run.dropped().size(), k);
    EXPECT_EQ(run.view()->size(), n - k);
    for (const auto& id : run.dropped()) {
      EXPECT_FALSE(run.view()->label(corpus->at(*corpus->find(id))).has_value());
    }
  }
  // Raw records keep the Missing status regardless of policy.
  std::size_t missing = 0;
  for (const auto& r : run.records) missing += r.parse_status == ParseStatus::Missing && !r.label;
  EXPECT_EQ(missing, k);
}

INSTANTIATE_TEST_SUITE_P(BothPolicies, PolicyAccounting,
                         ::testing::Values(LabelPolicy::D0, LabelPolicy::FU));

TEST(Annotate, OneRequestPerMessageWithoutGold) {
  auto corpus = small_corpus(12);
  auto slice = strip_gold_labels(whole(corpus));
  std::atomic<int> seen{0};
  auto mock = std::make_shared<MockBackend>([&](const ChatRequest& req) {
    ++seen;
    EXPECT_NE(req.prompt.find("message number"), std::string::npos);
    return BackendReply{200, "No Harm", std::nullopt, ""};
  });
  GatewayOptions go;
  go.cache_enabled = false;
  LlmGateway g(mock, go);
  const auto before = corpus->gold_view()->access_count();
  AnnotateOptions o;
  o.model = "m";
  o.prompt_mode = PromptMode::GF;
  auto run = annotate_slice(slice, g, *kit(), o);
  EXPECT_EQ(seen.load(), 12);
  EXPECT_EQ(corpus->gold_view()->access_count(), before);
  EXPECT_EQ(run.source(), "llm:m:GF");
}

TEST(Annotate, GatewayFailurePersistsPartialRun) {
  auto corpus = small_corpus(6);
  auto mock = MockBackend::from_script_text(R"({"contains": "number 1", "response": "Harm"})");
  LlmGateway g(mock);
  auto dir = testutil::temp_dir("annot_fail");
  AnnotateOptions o;
  o.model = "m";
  o.parallelism = 1;
  o.out_dir = dir;
  EXPECT_THROW(annotate_slice(whole(corpus), g, *kit(), o), RequestError);
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.json"));
  EXPECT_NE(testutil::slurp(dir / "manifest.json").find("\"complete\": false"), std::string::npos);
}

TEST(Annotate, PersistenceRoundTrip) {
  auto corpus = small_corpus(10);
  auto mock = MockBackend::from_script_text(R"({"contains": "number 3", "response": "unsure"}
{"contains": "number 1", "response": "Harm"}
{"regex": ".*", "response": "No Harm"})");
  LlmGateway g(mock);
  auto dir = testutil::temp_dir("annot_rt");
  AnnotateOptions o;
  o.model = "mock-llama";
  o.policy = LabelPolicy::FU;
  o.out_dir = dir;
  auto run = annotate_slice(whole(corpus), g, *kit(), o);
  auto back = read_annotation_run(dir);
  EXPECT_EQ(back.model, run.model);
  EXPECT_EQ(back.prompt_mode, run.prompt_mode);
  EXPECT_EQ(back.policy, run.policy);
  EXPECT_EQ(back.unparsed_count, 1u);
  ASSERT_EQ(back.records.size(), run.records.size());
  for (std::size_t i = 0; i < run.records.size(); ++i) {
    EXPECT_EQ(back.records[i].message_id, run.records[i].message_id);
    EXPECT_EQ(back.records[i].label, run.records[i].label);
    EXPECT_EQ(back.records[i].parse_status, run.records[i].parse_status);
  }
}

TEST(Annotate, ScoreAgainstGold) {
  auto corpus = small_corpus(9);  // m0, m3, m6 are Harm
  AnnotationRun run;
  run.model = "m";
  run.policy = LabelPolicy::FU;
  auto rec = [](std::string id, std::optional<Label> l) {
    return LabelAssignment{std::move(id), l, "llm:m:GE", l ? ParseStatus::Parsed : ParseStatus::Missing};
  };
  run.records = {rec("m0", Label::Harm),   rec("m1", Label::Harm),   rec("m2", Label::NoHarm),
                 rec("m3", std::nullopt),  rec("m4", Label::NoHarm), rec("m5", Label::NoHarm),
                 rec("m6", Label::NoHarm), rec("m7", std::nullopt),  rec("m8", Label::NoHarm)};
  run.unparsed_count = 2;
  auto s = score_against_gold(run, *corpus, *corpus->gold_view());
  EXPECT_EQ(s.scored, 7u);
  EXPECT_EQ(s.excluded, 2u);
  EXPECT_EQ(s.metrics.cm, (ConfusionMatrix{1, 1, 1, 4}));

  run.policy = LabelPolicy::D0;
  s = score_against_gold(run, *corpus, *corpus->gold_view());
  EXPECT_EQ(s.scored, 9u);
  EXPECT_EQ(s.excluded, 0u);
  EXPECT_EQ(s.metrics.cm, (ConfusionMatrix{1, 1, 2, 5}));
}
