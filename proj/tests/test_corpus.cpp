#include <gtest/gtest.h>

#include <fmt/format.h>

#include <map>
#include <set>

#include "cbforge/corpus.hpp"
#include "cbforge/errors.hpp"
#include "test_util.hpp"

using namespace cbforge;

namespace {

std::string line(const std::string& id, const std::string& conv, int seq, const std::string& extra = "") {
  return R"({"id":")" + id + R"(","conversation_id":")" + conv + R"(","case":"A","role":"BULLY1","seq":)" +
         std::to_string(seq) + R"(,"text":"hello )" + id + "\"" + extra + "}\n";
}

}  // namespace

TEST(Binarize, DefenseAndNoneAreNoHarmForEveryRole) {
  for (Role r : kRoster) {
    for (FineCategory f : kAllFineCategories) {
      const bool harm = f != FineCategory::Defense && f != FineCategory::None;
      EXPECT_EQ(binarize(f, r), harm ? Label::Harm : Label::NoHarm) << to_string(f) << " " << to_string(r);
    }
  }
  EXPECT_EQ(binarize(FineCategory::Insult, Role::BULLY1), Label::Harm);
  EXPECT_EQ(binarize(FineCategory::Defense, Role::VSUP2), Label::NoHarm);
  EXPECT_EQ(binarize(FineCategory::BodyShame, Role::VCTM), Label::Harm);
}

TEST(Ingest, CountsValidLines) {
  std::string text;
  for (int i = 1; i <= 12; ++i) text += line("m" + std::to_string(i), "c", i);
  EXPECT_EQ(ingest_corpus_text(text)->size(), 12u);
}

TEST(Ingest, DuplicateIdNamesBothLines) {
  std::string text;
  for (int i = 1; i <= 9; ++i) text += line(i == 9 ? "m3" : "m" + std::to_string(i), "c" + std::to_string(i), 1);
  try {
    ingest_corpus_text(text);
    FAIL() << "expected IntegrityError";
  } catch (const IntegrityError& e) {
    std::string what = e.what();
    EXPECT_NE(what.find("\"m3\""), std::string::npos);
    EXPECT_NE(what.find("lines 3 and 9"), std::string::npos) << what;
  }
}

TEST(Ingest, MalformedLineNamesLineNumber) {
  std::string text = line("m1", "c", 1) + "{not json\n";
  try {
    ingest_corpus_text(text);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("line 2:", 0), 0u) << e.what();
  }
  EXPECT_THROW(ingest_corpus_text(R"({"id":"x","conversation_id":"c","case":"E","role":"VCTM","seq":1,"text":"t"})"),
               ParseError);
  EXPECT_THROW(ingest_corpus_text(R"({"id":"x","conversation_id":"c","case":"A","role":"VCTM","seq":0,"text":"t"})"),
               ParseError);
}

TEST(Ingest, RejectsBlankTextAndNonIncreasingSeq) {
  EXPECT_THROW(ingest_corpus_text(R"({"id":"x","conversation_id":"c","case":"A","role":"VCTM","seq":1,"text":"  "})"),
               IntegrityError);
  EXPECT_THROW(ingest_corpus_text(line("a", "c", 2) + line("b", "c", 2)), IntegrityError);
  EXPECT_NO_THROW(ingest_corpus_text(line("a", "c", 2) + line("b", "d", 1)));
}

TEST(Ingest, SerializeRoundTripIsByteIdentical) {
  auto corpus = ingest_corpus(testutil::source_dir() / "fixtures/wa_like.jsonl");
  std::string once = serialize_corpus(*corpus);
  std::string twice = serialize_corpus(*ingest_corpus_text(once));
  EXPECT_EQ(once, twice);

  std::string emoji = line("e1", "c", 1);
  emoji.replace(emoji.find("hello e1"), 8, "hi \xF0\x9F\x98\x82 caf\xC3\xA9");
  auto e = ingest_corpus_text(emoji);
  EXPECT_EQ(e->at(0).text, "hi \xF0\x9F\x98\x82 caf\xC3\xA9");
  EXPECT_EQ(serialize_corpus(*ingest_corpus_text(serialize_corpus(*e))), serialize_corpus(*e));
}

TEST(Ingest, SyntheticProvenanceSurvives) {
  auto c = ingest_corpus_text(line("s1", "c", 1, R"(,"provenance":"synthetic:gpt-4o")"));
  ASSERT_TRUE(c->at(0).provenance.is_synthetic());
  EXPECT_EQ(*c->at(0).provenance.synthetic_model, "gpt-4o");
  EXPECT_NE(serialize_corpus(*c).find("synthetic:gpt-4o"), std::string::npos);
  EXPECT_FALSE(c->gold_view()->label(c->at(0)).has_value());
}

TEST(Splits, ExplicitTagsAreUsedExactly) {
  std::vector<Message> msgs;
  const Split tags[] = {Split::Train, Split::Train, Split::Test, Split::Validation, Split::Train,
                        Split::Test, Split::Train, Split::Validation, Split::Train, Split::Test};
  for (int i = 0; i < 10; ++i) {
    msgs.push_back(testutil::message("m" + std::to_string(i), "c" + std::to_string(i), Case::A, 1, "t", i % 3 == 0, tags[i]));
  }
  auto corpus = Corpus::from_messages(msgs);
  auto s = canonical_splits(corpus);
  for (Split sp : kAllSplits) {
    const auto& slice = s.get(sp);
    for (std::size_t i = 0; i < slice.size(); ++i) EXPECT_EQ(*slice.message(i).split, sp);
  }
  EXPECT_EQ(s.train.size() + s.validation.size() + s.test.size(), 10u);
  EXPECT_EQ(s.train.size(), 5u);
}

TEST(Splits, PartialTagsAndMissingRuleAreConfigErrors) {
  std::vector<Message> msgs{testutil::message("a", "c1", Case::A, 1, "t", false, Split::Train),
                            testutil::message("b", "c2", Case::A, 1, "t", false)};
  EXPECT_THROW(canonical_splits(Corpus::from_messages(msgs)), ConfigError);
  msgs[0].split.reset();
  EXPECT_THROW(canonical_splits(Corpus::from_messages(msgs), std::nullopt), ConfigError);
}

TEST(Splits, HashRuleIsDisjointAndCovering) {
  for (auto g : {HashSplitRule::Granularity::Conversation, HashSplitRule::Granularity::Message}) {
    std::vector<Message> msgs;
    for (int c = 0; c < 100; ++c) {
      for (int k = 1; k <= 5; ++k) {
        msgs.push_back(testutil::message(fmt::format("m{}-{}", c, k), fmt::format("c{}", c), Case::B, k, "x", k == 2));
      }
    }
    auto corpus = Corpus::from_messages(msgs);
    HashSplitRule rule;
    rule.granularity = g;
    auto s = canonical_splits(corpus, rule);
    std::set<std::string> seen;
    for (Split sp : kAllSplits) {
      for (const auto& id : s.get(sp).ids()) EXPECT_TRUE(seen.insert(id).second) << id;
    }
    EXPECT_EQ(seen.size(), corpus->size());
    EXPECT_GT(s.train.size(), s.validation.size());
    EXPECT_GT(s.validation.size(), 0u);
    EXPECT_GT(s.test.size(), 0u);
    if (g == HashSplitRule::Granularity::Conversation) {
      std::map<std::string, Split> conv_split;
      for (Split sp : kAllSplits) {
        const auto& sl = s.get(sp);
        for (std::size_t i = 0; i < sl.size(); ++i) {
          auto [it, fresh] = conv_split.emplace(sl.message(i).conversation_id, sp);
          EXPECT_EQ(it->second, sp);
        }
      }
    }
    // Deterministic.
    EXPECT_EQ(canonical_splits(corpus, rule).train.ids(), s.train.ids());
  }
}

TEST(Splits, StrippingHidesGoldButCorpusKeepsIt) {
  auto corpus = ingest_corpus(testutil::source_dir() / "fixtures/wa_like.jsonl");
  auto s = canonical_splits(corpus);
  auto stripped = strip_gold_labels(s.train);
  EXPECT_EQ(stripped.ids(), s.train.ids());
  EXPECT_EQ(slice_stats(stripped).labeled, 0u);
  auto gold = slice_stats(s.train);
  EXPECT_EQ(gold.labeled, s.train.size());
  std::size_t harm = 0;
  for (std::size_t i = 0; i < s.train.size(); ++i) {
    const auto& m = s.train.message(i);
    harm += binarize(m.fine_category.value_or(FineCategory::None), m.role) == Label::Harm;
  }
  EXPECT_EQ(gold.harm, harm);
  EXPECT_NEAR(gold.harm_fraction(), static_cast<double>(harm) / s.train.size(), 1e-4);
  DatasetSlice empty{corpus, {}, Split::Train, corpus->gold_view()};
  EXPECT_TRUE(strip_gold_labels(empty).empty());
}

TEST(GoldView, CountsEveryLookup) {
  auto corpus = testutil::text_fixture({});
  auto gold = corpus->gold_view();
  const auto before = gold->access_count();
  for (const auto& m : corpus->messages()) (void)gold->label(m);
  EXPECT_EQ(gold->access_count() - before, corpus->size());
}
