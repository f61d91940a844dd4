#include <gtest/gtest.h>

#include <set>

#include "cbforge/errors.hpp"
#include "cbforge/sampler.hpp"
#include "test_util.hpp"

using namespace cbforge;

namespace {

/// `per_case[c]` synthetic messages for each case, a third of them Harm.
DatasetSlice pool_of(std::array<std::size_t, 4> per_case, bool labeled = true) {
  std::vector<Message> msgs;
  for (Case c : kAllCases) {
    for (std::size_t i = 0; i < per_case[static_cast<std::size_t>(c)]; ++i) {
      auto m = testutil::message(fmt::format("{}{}", to_string(c), i), fmt::format("{}{}", to_string(c), i), c,
                                 1, fmt::format("text {} {}", to_string(c), i), i % 3 == 0);
      m.provenance = Provenance::synthetic("g");
      msgs.push_back(std::move(m));
    }
  }
  auto corpus = Corpus::from_messages(std::move(msgs));
  DatasetSlice s;
  s.corpus = corpus;
  for (std::size_t i = 0; i < corpus->size(); ++i) s.rows.push_back(i);
  s.view = labeled ? std::shared_ptr<const LabelView>(corpus->gold_view())
                   : std::make_shared<StrippedView>();
  return s;
}

DatasetSlice authentic(std::size_t n, std::size_t harm, Split split = Split::Train) {
  std::vector<Message> msgs;
  for (std::size_t i = 0; i < n; ++i) {
    msgs.push_back(testutil::message("a" + std::to_string(i), "c" + std::to_string(i), Case::A, 1,
                                     "t" + std::to_string(i), i < harm, split));
  }
  auto corpus = Corpus::from_messages(std::move(msgs));
  DatasetSlice s;
  s.corpus = corpus;
  s.split = split;
  for (std::size_t i = 0; i < n; ++i) s.rows.push_back(i);
  s.view = corpus->gold_view();
  return s;
}

std::array<std::size_t, 4> counts(const SlicePair& p) {
  auto t = per_case_counts(p.train);
  auto v = per_case_counts(p.validation);
  return {t[0] + v[0], t[1] + v[1], t[2] + v[2], t[3] + v[3]};
}

}  // namespace

TEST(Rounding, HalfUp) {
  EXPECT_EQ(round_half_up(5, 10), 1u);
  EXPECT_EQ(round_half_up(4, 10), 0u);
  EXPECT_EQ(round_half_up(15, 10), 2u);
  EXPECT_EQ(scaled_count(1314, 20), 263u);
  EXPECT_EQ(scaled_count(103, 50), 52u);
  EXPECT_EQ(scaled_count(863, 120), 1036u);
  EXPECT_THROW(scaled_count(10, -1), PreconditionError);
}

TEST(BaseCounts, WhatsApp) {
  auto b = CaseBaseCounts::whatsapp();
  EXPECT_EQ(b[Case::A], 863u);
  EXPECT_EQ(b[Case::B], 462u);
  EXPECT_EQ(b[Case::C], 103u);
  EXPECT_EQ(b[Case::D], 325u);
  EXPECT_EQ(b.total(), 1753u);
}

TEST(SamplePool, HundredPercentMatchesBaseCounts) {
  const auto base = CaseBaseCounts::whatsapp();
  auto pool = pool_of({2000, 1000, 300, 700});
  auto p = sample_pool(pool, base, {100, 11});
  EXPECT_EQ(counts(p), base.counts);
  EXPECT_EQ(p.train.size() + p.validation.size(), 1753u);
  // 3:1 split per case and label, each group rounded half up.
  const double share = static_cast<double>(p.train.size()) / 1753.0;
  EXPECT_NEAR(share, 0.75, 0.005);
  std::set<std::string> ids;
  for (const auto& id : p.train.ids()) ids.insert(id);
  for (const auto& id : p.validation.ids()) EXPECT_FALSE(ids.count(id));
}

TEST(SamplePool, TwoHundredPercentDoublesWithUniqueIds) {
  const auto base = CaseBaseCounts::whatsapp();
  auto pool = pool_of({1726, 924, 206, 650});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto p = sample_pool(pool, base, {200, seed});
    EXPECT_EQ(counts(p), (std::array<std::size_t, 4>{1726, 924, 206, 650}));
    std::set<std::string> ids;
    for (const auto& id : p.train.ids()) ids.insert(id);
    for (const auto& id : p.validation.ids()) ids.insert(id);
    EXPECT_EQ(ids.size(), 3506u) << "seed " << seed;
  }
}

TEST(SamplePool, SplitIsStratifiedWhenLabeled) {
  auto pool = pool_of({400, 400, 400, 400});
  CaseBaseCounts base{{400, 400, 400, 400}};
  auto p = sample_pool(pool, base, {100, 3});
  auto st = slice_stats(p.train), sv = slice_stats(p.validation);
  EXPECT_NEAR(st.harm_fraction(), sv.harm_fraction(), 0.01);
}

TEST(SamplePool, DeterministicAndSeedSensitive) {
  auto pool = pool_of({200, 200, 200, 200}, false);
  CaseBaseCounts base{{100, 100, 100, 100}};
  auto a = sample_pool(pool, base, {150, 5});
  auto b = sample_pool(pool, base, {150, 5});
  auto c = sample_pool(pool, base, {150, 6});
  EXPECT_EQ(a.train.ids(), b.train.ids());
  EXPECT_NE(a.train.ids(), c.train.ids());
}

TEST(SamplePool, InsufficientPoolNamesCase) {
  auto pool = pool_of({100, 100, 10, 100});
  CaseBaseCounts base{{50, 50, 50, 50}};
  try {
    sample_pool(pool, base, {100, 0});
    FAIL();
  } catch (const SamplingError& e) {
    EXPECT_NE(std::string(e.what()).find("case C"), std::string::npos) << e.what();
  }
  EXPECT_THROW(sample_pool(pool, base, {0, 0}), PreconditionError);
}

TEST(Subsample, TwentyPercentOf1314) {
  auto train = authentic(1314, 400);
  auto val = authentic(438, 100, Split::Validation);
  auto p = subsample_authentic(train, val, 20, 9);
  EXPECT_EQ(p.train.size(), 263u);
  EXPECT_EQ(p.validation.size(), 88u);
  EXPECT_TRUE(p.train.has_unique_ids());
  EXPECT_TRUE(std::is_sorted(p.train.rows.begin(), p.train.rows.end()));
  auto full = subsample_authentic(train, val, 100, 9);
  EXPECT_EQ(full.train.rows, train.rows);
  EXPECT_THROW(subsample_authentic(train, val, 0, 1), PreconditionError);
  EXPECT_THROW(subsample_authentic(train, val, 120, 1), PreconditionError);
}

TEST(Upsample, BalancesMinorityByDuplication) {
  auto train = authentic(398 + 916, 398);
  auto up = upsample_minority(train, 4);
  auto st = slice_stats(up);
  EXPECT_EQ(st.harm, 916u);
  EXPECT_EQ(st.size - st.harm, 916u);
  EXPECT_EQ(up.size(), 1832u);
  std::set<std::size_t> originals(train.rows.begin(), train.rows.end());
  for (auto r : up.rows) EXPECT_TRUE(originals.count(r));
  EXPECT_EQ(upsample_minority(train, 4).rows, up.rows);

  EXPECT_THROW(upsample_minority(authentic(10, 0), 1), UpsamplingError);
  EXPECT_THROW(upsample_minority(strip_gold_labels(train), 1), PreconditionError);
}

TEST(LabeledOnly, DropsInvisibleRows) {
  auto train = authentic(10, 4);
  std::unordered_map<std::string, Label> some{{"a1", Label::Harm}, {"a7", Label::NoHarm}};
  auto view = std::make_shared<AssignedView>("x", some);
  auto kept = labeled_only(train.with_view(view));
  EXPECT_EQ(kept.ids(), (std::vector<std::string>{"a1", "a7"}));
}

TEST(Sampling, ParseTokens) {
  EXPECT_EQ(parse_sampling("up"), Sampling::Up);
  EXPECT_EQ(parse_sampling("none"), Sampling::None);
  EXPECT_FALSE(parse_sampling("down").has_value());
}
