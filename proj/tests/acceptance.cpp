// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <fmt/format.h>

#include <chrono>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "cbforge/annotator.hpp"
#include "cbforge/config.hpp"
#include "cbforge/errors.hpp"
#include "cbforge/evaluator.hpp"
#include "cbforge/sampler.hpp"
#include "cbforge/scenarios.hpp"
#include "cbforge/trainer.hpp"
#include "test_util.hpp"

using namespace cbforge;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool ok = true;
  std::string detail;
  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      detail = what;
    }
  }
};

int failures = 0;

void criterion(const std::string& name, double limit_seconds, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.ok = false;
    o.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (o.ok && limit_seconds > 0 && secs >= limit_seconds) {
    o.ok = false;
    o.detail = fmt::format("took {:.2f}s, limit {:.0f}s", secs, limit_seconds);
  }
  failures += !o.ok;
  std::cout << fmt::format("{} {} ({:.2f}s){}{}\n", o.ok ? "PASS" : "FAIL", name, secs,
                           o.detail.empty() ? "" : ": ", o.detail)
            << std::flush;
}

DatasetSlice full_slice(const CorpusPtr& corpus) {
  DatasetSlice s;
  s.corpus = corpus;
  for (std::size_t i = 0; i < corpus->size(); ++i) s.rows.push_back(i);
  s.view = corpus->gold_view();
  return s;
}

std::string golden(const std::string& name) {
  return testutil::slurp(testutil::source_dir() / "tests/golden" / name);
}

Outcome sampling_arithmetic() {
  Outcome o;
  const auto base = CaseBaseCounts::whatsapp();
  std::vector<Message> msgs;
  for (Case c : kAllCases) {
    for (std::size_t i = 0; i < 2 * base[c]; ++i) {
      auto m = testutil::message(fmt::format("{}-{}", to_string(c), i), fmt::format("{}-{}", to_string(c), i),
                                 c, 1, fmt::format("t{}", i), i % 4 == 0);
      m.provenance = Provenance::synthetic("g");
      msgs.push_back(std::move(m));
    }
  }
  const auto pool = full_slice(Corpus::from_messages(std::move(msgs)));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (int percent : {100, 200}) {
      auto p = sample_pool(pool, base, {percent, seed});
      auto t = per_case_counts(p.train), v = per_case_counts(p.validation);
      std::set<std::string> ids;
      for (const auto& id : p.train.ids()) ids.insert(id);
      for (const auto& id : p.validation.ids()) ids.insert(id);
      const std::size_t mult = percent / 100;
      for (Case c : kAllCases) {
        const auto k = static_cast<std::size_t>(c);
        o.require(t[k] + v[k] == mult * base[c],
                  fmt::format("seed {} {}%: case {} has {}", seed, percent, to_string(c), t[k] + v[k]));
      }
      o.require(ids.size() == p.train.size() + p.validation.size(),
                fmt::format("seed {} {}%: duplicate ids", seed, percent));
    }
  }
  return o;
}

Outcome prompt_fidelity() {
  Outcome o;
  auto kit = PromptKit::load(testutil::source_dir() / "prompts");
  const auto text = golden("label_input.txt");
  o.require(kit.render_label_prompt(PromptMode::GE, text) == golden("ge_label.txt"), "GE prompt differs");
  o.require(kit.render_label_prompt(PromptMode::GF, text) == golden("gf_label.txt"), "GF prompt differs");
  for (Case c : kAllCases) {
    o.require(kit.render_generation_prompt(kit.card(c)) == golden(fmt::format("synth_gen_{}.txt", to_string(c))),
              fmt::format("generation prompt for case {} differs", to_string(c)));
  }
  return o;
}

Outcome metric_oracle() {
  Outcome o;
  Rng rng(99);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t n = 1 + uniform_below(rng, 300);
    std::vector<int> pred(n), gold(n);
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<int>(uniform_below(rng, 2));
      gold[i] = static_cast<int>(uniform_below(rng, trial % 9 == 0 ? 1 : 2));
      cm.add(static_cast<Label>(pred[i]), static_cast<Label>(gold[i]));
    }
    double correct = 0, f1 = 0;
    for (std::size_t i = 0; i < n; ++i) correct += pred[i] == gold[i];
    for (int cls : {0, 1}) {
      double pc = 0, gc = 0, hit = 0;
      for (std::size_t i = 0; i < n; ++i) {
        pc += pred[i] == cls;
        gc += gold[i] == cls;
        hit += pred[i] == cls && gold[i] == cls;
      }
      double p = pc ? hit / pc : 0, r = gc ? hit / gc : 0;
      f1 += p + r > 0 ? 2 * p * r / (p + r) : 0;
    }
    worst = std::max({worst, std::abs(accuracy(cm) - correct / static_cast<double>(n)),
                      std::abs(macro_f1(cm) - f1 / 2)});
  }
  o.require(worst <= 1e-12, fmt::format("max deviation {:.3g}", worst));
  ConfusionMatrix all_no_harm{0, 0, 133, 306};
  o.require(std::abs(accuracy(all_no_harm) - 0.6970) <= 1e-4, fmt::format("accuracy {}", accuracy(all_no_harm)));
  o.require(std::abs(macro_f1(all_no_harm) - 0.4107) <= 5e-4, fmt::format("macro-F1 {}", macro_f1(all_no_harm)));
  return o;
}

Outcome parser_precedence() {
  Outcome o;
  std::istringstream in(testutil::slurp(testutil::source_dir() / "tests/data/parse_label_oracle.tsv"));
  std::string line;
  std::size_t total = 0, agree = 0, both = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    const std::string want = line.substr(0, tab);
    std::string reply;
    for (std::size_t i = tab + 1; i < line.size(); ++i) {
      if (line[i] == '\\' && i + 1 < line.size() && line[i + 1] == 'n') {
        reply += '\n';
        ++i;
      } else {
        reply += line[i];
      }
    }
    const auto got = parse_label(reply);
    const std::string got_s = got == ParsedLabel::Harm ? "Harm" : got == ParsedLabel::NoHarm ? "NoHarm" : "Missing";
    ++total;
    agree += got_s == want;
    std::string lower;
    for (char c : reply) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower.find("no harm") != std::string::npos) {
      ++both;
      o.require(got_s == want, "negated reply misparsed: " + reply);
    }
    o.require(got_s == want, fmt::format("\"{}\": got {}, want {}", reply, got_s, want));
  }
  o.require(total == 50, fmt::format("oracle has {} entries", total));
  o.require(both > 0, "oracle has no negated entries");
  if (o.ok) o.detail = fmt::format("{}/{} agree, {} negated", agree, total, both);
  return o;
}

Outcome policy_accounting() {
  Outcome o;
  auto kit = PromptKit::load(testutil::source_dir() / "prompts");
  const std::size_t n = 40, k = 9;
  std::vector<Message> msgs;
  for (std::size_t i = 0; i < n; ++i) {
    msgs.push_back(testutil::message(fmt::format("p{}", i), fmt::format("c{}", i), Case::B, 1,
                                     fmt::format("{} item {}", i < k ? "refuse" : "answer", i), false));
  }
  auto slice = strip_gold_labels(full_slice(Corpus::from_messages(std::move(msgs))));
  auto mock = MockBackend::from_script_text(
      R"({"contains": "'No Harm'. refuse", "response": "I cannot classify this.", "finish_reason": "refusal"}
{"regex": ".*", "response": "Harm"})");
  for (LabelPolicy policy : {LabelPolicy::FU, LabelPolicy::D0}) {
    LlmGateway g(mock);
    AnnotateOptions opts;
    opts.model = "m";
    opts.policy = policy;
    auto run = annotate_slice(slice, g, kit, opts);
    std::size_t no_harm = 0;
    for (const auto& a : run.assignments()) no_harm += a.label == Label::NoHarm;
    if (policy == LabelPolicy::FU) {
      o.require(run.dropped().size() == k, fmt::format("FU dropped {}", run.dropped().size()));
      o.require(run.assignments().size() == n - k, "FU kept the wrong number of labels");
    } else {
      o.require(no_harm == k, fmt::format("D0 assigned {} NoHarm labels", no_harm));
      o.require(run.dropped().empty(), "D0 dropped messages");
    }
  }
  return o;
}

Outcome trainer_sanity() {
  Outcome o;
  auto corpus = testutil::text_fixture({.train = 120, .validation = 40, .test = 40, .seed = 11});
  auto s = canonical_splits(corpus, std::nullopt);
  LinearLearner learner(ClassifierConfig{});
  double sum = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto fit = learner.fit(s.train, s.validation, seed);
    sum += accuracy(confusion(*fit.classifier, s.test));
  }
  o.require(sum / 10 >= 0.99, fmt::format("mean test accuracy {:.4f}", sum / 10));

  FeatureConfig fc;
  fc.buckets_log2 = 10;
  Rng rng(5);
  std::vector<double> w(fc.buckets());
  for (double& v : w) v = static_cast<double>(uniform_below(rng, 2001)) / 1000.0 - 1.0;
  const auto x = featurize("nobody wants you here, ugly", fc);
  double worst = 0;
  for (int probe = 0; probe < 10; ++probe) {
    const Label y = probe % 2 ? Label::Harm : Label::NoHarm;
    const std::size_t j = x.index[static_cast<std::size_t>(probe) % x.nnz()];
    const auto g = logistic_loss_gradient(w, 0.1, x, y, 1e-3);
    const double h = 1e-5;
    auto wp = w, wm = w;
    wp[j] += h;
    wm[j] -= h;
    const double fd = (logistic_loss_gradient(wp, 0.1, x, y, 1e-3).loss -
                       logistic_loss_gradient(wm, 0.1, x, y, 1e-3).loss) / (2 * h);
    worst = std::max(worst, std::abs(fd - g.grad_w[j]) / std::max(std::abs(fd), 1e-12));
  }
  o.require(worst <= 1e-5, fmt::format("gradient relative error {:.3g}", worst));
  if (o.ok) o.detail = fmt::format("mean accuracy {:.4f}, gradient error {:.2g}", sum / 10, worst);
  return o;
}

Outcome data_scaling() {
  Outcome o;
  testutil::FixtureSpec spec{.train = 600, .validation = 200, .test = 200, .harm_fraction = 0.4,
                             .label_noise = 0.1, .words = 8, .seed = 21};
  spec.markers.clear();
  for (int i = 0; i < 60; ++i) spec.markers.push_back(fmt::format("slur{}", i));
  auto corpus = testutil::text_fixture(spec);
  auto s = canonical_splits(corpus, std::nullopt);
  LinearLearner learner(ClassifierConfig{});
  std::map<int, double> mean;
  for (int percent : {20, 100}) {
    RepetitionDataFn data = [&](std::uint64_t seed) {
      auto sub = subsample_authentic(s.train, s.validation, percent, seed);
      return RepetitionData{sub.train, sub.validation, sub.validation};
    };
    auto run = run_repetitions(learner, data, s.test, {10, 0});
    double sum = 0;
    for (const auto& r : run.results) sum += r.test.accuracy;
    mean[percent] = sum / 10;
  }
  o.require(mean[100] > mean[20], fmt::format("100%: {:.4f}, 20%: {:.4f}", mean[100], mean[20]));
  if (o.ok) o.detail = fmt::format("20%: {:.4f} < 100%: {:.4f}", mean[20], mean[100]);
  return o;
}

struct EndToEnd {
  std::map<ScenarioId, RunReport> first;
  std::vector<std::string> differences;
};

std::string read_tree(const fs::path& dir) {
  std::string out;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out += f.string() + "\n" + testutil::slurp(dir / f) + "\n";
  return out;
}

EndToEnd run_end_to_end() {
  EndToEnd e2e;
  const auto cfg = Config::load(testutil::source_dir() / "fixtures/ci.toml");
  const auto root = testutil::temp_dir("acceptance_e2e");
  for (ScenarioId id : {ScenarioId::S1_baseline, ScenarioId::S2_llm_classifier,
                        ScenarioId::S3_fully_synthetic, ScenarioId::S4_synthetic_labels}) {
    std::string reports[2];
    for (int pass = 0; pass < 2; ++pass) {
      const auto dir = root / fmt::format("run{}", pass) / std::string(to_string(id));
      auto report = run_scenario_from_config(id, cfg, dir / "artifacts");
      write_report(report, dir / "report");
      reports[pass] = read_tree(dir / "report");
      if (pass == 0) e2e.first.emplace(id, std::move(report));
    }
    if (reports[0] != reports[1]) e2e.differences.emplace_back(to_string(id));
  }
  return e2e;
}

}  // namespace

int main() {
  criterion("sampling arithmetic", 5, sampling_arithmetic);
  criterion("prompt fidelity", 1, prompt_fidelity);
  criterion("metric oracle", 0, metric_oracle);
  criterion("parser precedence", 0, parser_precedence);
  criterion("policy accounting", 0, policy_accounting);
  criterion("trainer sanity", 30, trainer_sanity);
  criterion("data-scaling shape", 60, data_scaling);

  // Both remaining criteria share one pair of offline runs; the timed one
  // is the end-to-end check.
  EndToEnd e2e;
  std::string e2e_error;
  const auto t0 = Clock::now();
  try {
    e2e = run_end_to_end();
  } catch (const std::exception& e) {
    e2e_error = e.what();
  }
  const double e2e_secs = std::chrono::duration<double>(Clock::now() - t0).count();

  criterion("scenario contracts", 0, [&] {
    Outcome o;
    o.require(e2e_error.empty(), "scenario run failed: " + e2e_error);
    if (!o.ok) return o;
    auto observed = [&](ScenarioId id, const std::string& name) -> std::optional<std::size_t> {
      for (const auto& c : e2e.first.at(id).contracts) {
        if (c.name == name) return c.observed;
      }
      return std::nullopt;
    };
    const auto s2 = observed(ScenarioId::S2_llm_classifier, "trainer_calls");
    const auto s3 = observed(ScenarioId::S3_fully_synthetic, "gold_reads_during_training");
    const auto s3_rows = observed(ScenarioId::S3_fully_synthetic, "authentic_train_validation_rows");
    const auto s4 = observed(ScenarioId::S4_synthetic_labels, "gold_reads_during_training");
    o.require(s2 && *s2 == 0, "S2 trainer calls");
    o.require(s3 && *s3 == 0, "S3 gold reads during training");
    o.require(s3_rows && *s3_rows == 0, "S3 authentic rows");
    o.require(s4 && *s4 == 0, "S4 gold reads during training");
    return o;
  });

  criterion("end-to-end determinism", 0, [&] {
    Outcome o;
    o.require(e2e_error.empty(), "scenario run failed: " + e2e_error);
    for (const auto& d : e2e.differences) o.require(false, d + " reports differ between runs");
    o.require(e2e_secs < 120, fmt::format("two passes took {:.1f}s, limit 120s", e2e_secs));
    if (o.ok) o.detail = fmt::format("4 scenarios x 2 passes in {:.1f}s", e2e_secs);
    return o;
  });

  criterion("identity-mock S2", 0, [] {
    Outcome o;
    auto corpus = ingest_corpus(testutil::source_dir() / "fixtures/wa_like.jsonl");
    ScenarioInputs in;
    in.corpus = corpus;
    in.split_rule = std::nullopt;
    in.kit = std::make_shared<PromptKit>(PromptKit::load(testutil::source_dir() / "prompts"));
    in.gateway = std::make_shared<LlmGateway>(testutil::identity_mock(corpus));
    in.learner = std::make_shared<LinearLearner>(ClassifierConfig{});
    ScenarioSpec spec;
    spec.id = ScenarioId::S2_llm_classifier;
    spec.models = {"identity"};
    auto r = run_scenario(spec, in);
    o.require(r.table.rows.size() == 2, "expected two rows");
    if (!o.ok) return o;
    const auto& ge = r.table.rows[0];
    const auto& gf = r.table.rows[1];
    o.require(ge.keys[1] == "GE" && ge.values[0] && ge.values[0]->mean == 1.0, "GE dev accuracy is not 1.0");
    o.require(gf.values[0] && gf.values[0]->mean == 1.0, "GF dev accuracy is not 1.0");
    o.require(ge.values[1] && ge.values[1]->mean == 1.0, "GE was not selected with test accuracy 1.0");
    o.require(!gf.values[1], "GF received a test score");
    return o;
  });

  std::cout << (failures == 0 ? "all criteria passed\n" : fmt::format("{} criteria failed\n", failures));
  return failures == 0 ? 0 : 1;
}
