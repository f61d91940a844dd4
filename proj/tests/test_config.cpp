#include <gtest/gtest.h>

#include <cstdlib>

#include "cbforge/config.hpp"
#include "cbforge/errors.hpp"
#include "test_util.hpp"

using namespace cbforge;

namespace {

std::filesystem::path fixtures() { return testutil::source_dir() / "fixtures"; }

Config parse(const std::string& text) { return Config::parse(text, fixtures()); }

/// Minimal valid config plus extra keys for [backend] and any further tables.
Config with(const std::string& backend, const std::string& rest = {}) {
  return parse("[prompts]\ndir = \"../prompts\"\n[backend]\nmock_script = \"mock_script.jsonl\"\n" + backend +
               "[data]\ncorpus = \"wa_like.jsonl\"\n" + rest);
}

}  // namespace

TEST(Config, LoadsCiConfig) {
  auto cfg = Config::load(fixtures() / "ci.toml");
  EXPECT_EQ(cfg.backend.kind, "mock");
  EXPECT_EQ(cfg.models.classifiers, std::vector<std::string>{"mock-gpt"});
  EXPECT_EQ(cfg.data.base_counts.counts, (std::array<std::size_t, 4>{48, 24, 8, 16}));
  EXPECT_EQ(cfg.experiment.repetitions, 3);
  EXPECT_EQ(cfg.experiment.annotation_policy, LabelPolicy::FU);
  EXPECT_EQ(cfg.experiment.sampling, (std::vector<Sampling>{Sampling::None, Sampling::Up}));
  EXPECT_EQ(cfg.trainer.features.buckets_log2, 16);
  EXPECT_TRUE(cfg.data.corpus.is_absolute());
  EXPECT_TRUE(std::filesystem::exists(cfg.data.corpus));
  EXPECT_EQ(cfg.digest.size(), 64u);
  EXPECT_FALSE(cfg.split_rule().has_value());
  EXPECT_EQ(cfg.make_backend()->name(), "mock");
}

TEST(Config, DefaultsFollowTheProtocol) {
  auto cfg = with("");
  EXPECT_EQ(cfg.experiment.repetitions, 45);
  EXPECT_EQ(cfg.experiment.baseline_percents, (std::vector<int>{20, 50, 80, 100}));
  EXPECT_EQ(cfg.experiment.synthetic_percents, (std::vector<int>{100, 120, 140, 160, 180, 200}));
  EXPECT_EQ(cfg.data.base_counts.total(), 1753u);
  EXPECT_EQ(cfg.trainer.learning_rate, 0.1);
  EXPECT_EQ(cfg.trainer.epochs_max, 50);
  EXPECT_EQ(cfg.experiment.classifier_policy, LabelPolicy::D0);
}

TEST(Config, HashSplitRules) {
  auto cfg = with("", "split = \"message\"\ntrain_percent = 70\n");
  auto rule = cfg.split_rule();
  ASSERT_TRUE(rule.has_value());
  EXPECT_EQ(rule->granularity, HashSplitRule::Granularity::Message);
  EXPECT_EQ(rule->train_percent, 70);
  EXPECT_THROW(with("", "split = \"random\"\n"), ConfigError);
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(with("api_key = \"sk-123\"\n"), ConfigError);
  EXPECT_THROW(with("kind = \"smoke\"\n"), ConfigError);
  EXPECT_THROW(parse("[data]\ncorpus = \"wa_like.jsonl\"\n"), ConfigError);
  EXPECT_THROW(with("", "[experiment]\nbaseline_percents = [120]\n"), ConfigError);
  EXPECT_THROW(with("", "[experiment]\nsampling = [\"down\"]\n"), ConfigError);
  EXPECT_THROW(with("", "[experiment]\nannotation_policy = \"XX\"\n"), ConfigError);
  EXPECT_THROW(with("", "[trainer]\nlearning_rate = -1.0\n"), ConfigError);
  EXPECT_THROW(parse("[data]\ncorpus = \"missing.jsonl\"\n"), ConfigError);
  EXPECT_THROW(parse("[data\ncorpus = 1"), ConfigError);
  EXPECT_THROW(Config::load(fixtures() / "nope.toml"), ConfigError);
}

TEST(Config, HttpBackendNeedsKeyFromEnvironment) {
  auto cfg = parse(
      "[prompts]\ndir = \"../prompts\"\n[data]\ncorpus = \"wa_like.jsonl\"\n"
      "[backend]\nkind = \"http\"\napi_key_env = \"CBFORGE_TEST_KEY_UNSET\"\n");
  EXPECT_EQ(cfg.backend.api_key_env, "CBFORGE_TEST_KEY_UNSET");
  ::unsetenv("CBFORGE_TEST_KEY_UNSET");
  EXPECT_THROW(cfg.make_backend(), ConfigError);
  ::setenv("CBFORGE_TEST_KEY_UNSET", "sk-test", 1);
  ::setenv("CBFORGE_ENDPOINT", "http://127.0.0.1:9/v1", 1);
  auto backend = cfg.make_backend();
  EXPECT_EQ(backend->name(), "http:http://127.0.0.1:9/v1");
  ::unsetenv("CBFORGE_ENDPOINT");
  ::unsetenv("CBFORGE_TEST_KEY_UNSET");
}

TEST(Config, GatewayOptionsAndParallelism) {
  auto cfg = with("max_retries = 7\nmax_in_flight = 3\nparallelism = 0\n");
  auto g = cfg.gateway_options();
  EXPECT_EQ(g.max_retries, 7);
  EXPECT_EQ(g.max_in_flight, 3);
  EXPECT_GE(cfg.effective_parallelism(), 1);
  EXPECT_LE(cfg.effective_parallelism(), 3);
}
