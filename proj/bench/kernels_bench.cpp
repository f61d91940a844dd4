// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>
#include <fmt/format.h>

#include <map>

#include "cbforge/features.hpp"
#include "cbforge/random.hpp"
#include "cbforge/trainer.hpp"

using namespace cbforge;

namespace {

const std::vector<std::string>& texts(std::size_t n) {
  static std::map<std::size_t, std::vector<std::string>> cache;
  auto& out = cache[n];
  if (out.empty()) {
    static const char* words[] = {"you", "are", "so", "annoying", "leave", "the", "group", "nobody",
                                  "likes", "your", "dance", "video", "lol", "stop", "it", "now",
                                  "ballet", "show", "friday", "class", "homework", "teacher"};
    Rng rng(7);
    for (std::size_t i = 0; i < n; ++i) {
      std::string t;
      const auto len = 4 + uniform_below(rng, 20);
      for (std::uint64_t k = 0; k < len; ++k) {
        if (!t.empty()) t += ' ';
        t += words[uniform_below(rng, std::size(words))];
      }
      out.push_back(std::move(t));
    }
  }
  return out;
}

std::vector<std::string_view> views(std::size_t n) {
  const auto& t = texts(n);
  return {t.begin(), t.end()};
}

DatasetSlice slice_of(std::size_t n) {
  std::vector<Message> msgs;
  const auto& t = texts(n);
  for (std::size_t i = 0; i < n; ++i) {
    Message m;
    m.id = fmt::format("m{}", i);
    m.conversation_id = m.id;
    m.text = t[i];
    msgs.push_back(std::move(m));
  }
  auto corpus = Corpus::from_messages(std::move(msgs));
  DatasetSlice s;
  s.corpus = corpus;
  s.view = corpus->gold_view();
  for (std::size_t i = 0; i < n; ++i) s.rows.push_back(i);
  return s;
}

LinearModel random_model(const FeatureConfig& cfg) {
  Rng rng(3);
  std::vector<double> w(cfg.buckets());
  for (double& v : w) v = static_cast<double>(uniform_below(rng, 2001)) / 1000.0 - 1.0;
  return LinearModel(cfg, std::move(w), 0.0);
}

void BM_FeaturizeSerial(benchmark::State& state) {
  const auto v = views(static_cast<std::size_t>(state.range(0)));
  FeatureConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(serial::featurize_all(v, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_FeaturizeParallel(benchmark::State& state) {
  const auto v = views(static_cast<std::size_t>(state.range(0)));
  FeatureConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(featurize_all(v, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_PredictSerial(benchmark::State& state) {
  const auto s = slice_of(static_cast<std::size_t>(state.range(0)));
  const auto model = random_model(FeatureConfig{});
  for (auto _ : state) benchmark::DoNotOptimize(serial::predict_all(model, s));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_PredictParallel(benchmark::State& state) {
  const auto s = slice_of(static_cast<std::size_t>(state.range(0)));
  const auto model = random_model(FeatureConfig{});
  for (auto _ : state) benchmark::DoNotOptimize(predict_all(model, s));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_FeaturizeSerial)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FeaturizeParallel)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_PredictSerial)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictParallel)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
