#include "cbforge/scenarios.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>

#include "cbforge/digest.hpp"
#include "cbforge/errors.hpp"
#include "cbforge/synthesizer.hpp"
#include "json.hpp"

namespace cbforge {
namespace {

using nlohmann::ordered_json;

const std::vector<std::string> kValueColumns{"Dev Accuracy", "Dev Macro-F1", "Test Accuracy",
                                             "Test Macro-F1"};

std::string file_safe(std::string_view s) {
  std::string out;
  for (char c : s) {
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
  }
  return out;
}

std::string row_label(const std::vector<std::string>& keys) {
  std::string out;
  for (const auto& k : keys) {
    if (!out.empty()) out += '_';
    std::string key = k;
    if (!key.empty() && key.back() == '%') key.replace(key.size() - 1, 1, "pct");
    out += file_safe(key);
  }
  return out;
}

std::string percent_key(int p) { return fmt::format("{}%", p); }


TableRow repetition_row(std::vector<std::string> keys, const RepetitionRun& run) {
  std::vector<double> da, df, ta, tf;
  for (const auto& r : run.results) {
    da.push_back(r.validation.accuracy);
    df.push_back(r.validation.macro_f1);
    ta.push_back(r.test.accuracy);
    tf.push_back(r.test.macro_f1);
  }
  TableRow row;
  row.keys = std::move(keys);
  row.values = {aggregate(kValueColumns[0], da), aggregate(kValueColumns[1], df),
                aggregate(kValueColumns[2], ta), aggregate(kValueColumns[3], tf)};
  row.reps = run.results.size();
  return row;
}

ordered_json repetition_manifest(const std::vector<std::string>& keys, const RepetitionRun& run) {
  ordered_json row;
  row["keys"] = keys;
  ordered_json seeds = ordered_json::array();
  for (const auto& r : run.results) {
    ordered_json s;
    s["seed"] = r.seed;
    s["train_digest"] = r.manifest.train_digest;
    s["train_view"] = r.manifest.train_view;
    s["validation_digest"] = r.manifest.validation_digest;
    s["validation_view"] = r.manifest.validation_view;
    s["best_epoch"] = r.manifest.best_epoch;
    s["epochs_run"] = r.manifest.epochs_run;
    s["weight_digest"] = r.manifest.weight_digest;
    seeds.push_back(std::move(s));
  }
  row["repetitions"] = std::move(seeds);
  return row;
}

struct Runner {
  const ScenarioSpec& spec;
  const ScenarioInputs& in;
  RunReport report;
  ordered_json rows = ordered_json::array();
  ordered_json extra = ordered_json::object();

  SplitSet splits() const { return canonical_splits(in.corpus, in.split_rule); }

  LlmGateway& gateway() const {
    if (!in.gateway) throw ConfigError(fmt::format("{} needs an LLM backend", to_string(spec.id)));
    return *in.gateway;
  }
  const Learner& learner() const {
    if (!in.learner) throw ConfigError(fmt::format("{} needs a learner", to_string(spec.id)));
    return *in.learner;
  }
  const PromptKit& kit() const {
    if (!in.kit) throw ConfigError(fmt::format("{} needs a prompt kit", to_string(spec.id)));
    return *in.kit;
  }
  void require_models() const {
    if (spec.models.empty()) throw ConfigError(fmt::format("{}: no models configured", to_string(spec.id)));
  }

  std::filesystem::path artifact(const std::string& name) const {
    return in.artifact_dir.empty() ? std::filesystem::path() : in.artifact_dir / name;
  }

  void contract(const std::string& name, std::size_t observed) {
    report.contracts.push_back({name, observed});
    if (observed != 0) {
      throw ContractViolation(fmt::format("{}: {} is {}, must be 0", to_string(spec.id), name, observed));
    }
  }

  void add_repetitions(std::vector<std::string> keys, const RepetitionRun& run) {
    std::string label = row_label(keys);
    report.per_seed[label] = per_seed_csv(run.results);
    rows.push_back(repetition_manifest(keys, run));
    report.table.rows.push_back(repetition_row(std::move(keys), run));
  }

  RepetitionOptions rep_options(const std::string& label,
                                std::shared_ptr<const GoldView> watch = nullptr) const {
    RepetitionOptions o;
    o.watch_gold = std::move(watch);
    if (!in.artifact_dir.empty()) o.partial_out = in.artifact_dir / "partial" / label;
    return o;
  }

  void baseline() {
    report.table.layout = TableLayout::baseline();
    const std::size_t requests_before = in.gateway ? in.gateway->stats().requests : 0;
    const SplitSet s = splits();
    for (int percent : spec.percents) {
      for (Sampling sampling : spec.sampling) {
        std::vector<std::string> keys{percent_key(percent), std::string(to_string(sampling))};
        RepetitionDataFn data = [&, percent, sampling](std::uint64_t seed) {
          SlicePair sub = subsample_authentic(s.train, s.validation, percent, seed);
          DatasetSlice train = sampling == Sampling::Up ? upsample_minority(sub.train, seed) : sub.train;
          return RepetitionData{train, sub.validation, sub.validation};
        };
        auto run = run_repetitions(learner(), data, s.test, spec.plan, rep_options(row_label(keys)));
        add_repetitions(std::move(keys), run);
      }
    }
    contract("gateway_requests", in.gateway ? in.gateway->stats().requests - requests_before : 0);
  }

  void llm_classifier() {
    report.table.layout = TableLayout::llm_classifier();
    require_models();
    const std::size_t fits_before = in.learner ? in.learner->fit_calls() : 0;
    const SplitSet s = splits();
    const DatasetSlice dev = strip_gold_labels(s.validation);
    const DatasetSlice test = strip_gold_labels(s.test);
    const auto& gold = *in.corpus->gold_view();

    auto annotate = [&](const DatasetSlice& slice, const std::string& model, PromptMode mode,
                        const std::string& split) {
      AnnotateOptions o;
      o.model = model;
      o.prompt_mode = mode;
      o.policy = spec.policy;
      o.parallelism = in.parallelism;
      o.config_digest = in.config_digest;
      auto dir = artifact(fmt::format("annotations/{}_{}_{}", file_safe(model), to_string(mode), split));
      o.out_dir = dir;
      return annotate_slice(slice, gateway(), kit(), o);
    };

    ordered_json selections = ordered_json::array();
    for (const auto& model : spec.models) {
      auto ge = score_against_gold(annotate(dev, model, PromptMode::GE, "dev"), *in.corpus, gold);
      auto gf = score_against_gold(annotate(dev, model, PromptMode::GF, "dev"), *in.corpus, gold);
      PromptMode winner = select_prompt_mode(ge.metrics.accuracy, gf.metrics.accuracy);
      auto tested = score_against_gold(annotate(test, model, winner, "test"), *in.corpus, gold);
      for (PromptMode mode : {PromptMode::GE, PromptMode::GF}) {
        const auto& dev_score = mode == PromptMode::GE ? ge : gf;
        TableRow row;
        row.keys = {model, std::string(to_string(mode))};
        std::vector<double> d{dev_score.metrics.accuracy};
        row.values.push_back(aggregate("Dev Accuracy", d));
        if (mode == winner) {
          std::vector<double> t{tested.metrics.accuracy};
          row.values.push_back(aggregate("Test Accuracy", t));
        } else {
          row.values.push_back(std::nullopt);
        }
        report.table.rows.push_back(std::move(row));
      }
      report.notes.push_back(fmt::format("{}: {} selected on dev ({:.4f} GE vs {:.4f} GF)", model,
                                         to_string(winner), ge.metrics.accuracy,
                                         gf.metrics.accuracy));
      ordered_json sel;
      sel["model"] = model;
      sel["dev_accuracy"] = {{"GE", ge.metrics.accuracy}, {"GF", gf.metrics.accuracy}};
      sel["dev_excluded"] = {{"GE", ge.excluded}, {"GF", gf.excluded}};
      sel["winner"] = to_string(winner);
      sel["test_accuracy"] = tested.metrics.accuracy;
      sel["test_macro_f1"] = tested.metrics.macro_f1;
      sel["test_excluded"] = tested.excluded;
      selections.push_back(std::move(sel));
    }
    extra["selections"] = std::move(selections);
    contract("trainer_calls", in.learner ? in.learner->fit_calls() - fits_before : 0);
  }

  DatasetSlice build_pool(const std::string& model, int max_percent) {
    SyntheticPool pool;
    if (in.pool) {
      std::vector<Message> mine;
      for (const auto& m : in.pool->messages()) {
        if (!m.provenance.is_synthetic()) {
          throw ContractViolation("synthetic pool contains authentic message \"" + m.id + "\"");
        }
        if (*m.provenance.synthetic_model == model) mine.push_back(m);
      }
      if (!mine.empty()) pool = SyntheticPool::from_corpus(*Corpus::from_messages(std::move(mine)));
    }
    GenerationOptions gen;
    gen.model = model;
    gen.min_messages = in.min_messages;
    gen.max_regen = in.max_regen;
    gen.raw_dir = artifact("pool/raw");
    const std::string labeler = in.synthetic_labeler.empty() ? model : in.synthetic_labeler;

    std::array<std::size_t, 4> targets{};
    for (Case c : kAllCases) targets[static_cast<std::size_t>(c)] = scaled_count(in.base_counts[c], max_percent);
    std::vector<Case> cases(kAllCases.begin(), kAllCases.end());
    for (int round = 0;; ++round) {
      grow_pool(pool, cases, targets, gateway(), kit(), gen);
      CorpusPtr corpus = pool.to_corpus();
      std::shared_ptr<const LabelView> view;
      if (in.heuristic_synthetic_labels) {
        view = role_heuristic_view(*corpus);
      } else {
        AnnotationRun run = label_synthetic_pool(corpus, gateway(), kit(), labeler, PromptMode::GE,
                                                 in.parallelism);
        if (!in.artifact_dir.empty()) {
          write_annotation_run(run, artifact(fmt::format("annotations/{}_synthetic", file_safe(model))),
                               true, in.config_digest);
        }
        view = run.view();
      }
      DatasetSlice labeled = pool_slice(corpus, view);
      auto have = per_case_counts(labeled);
      bool short_any = false;
      for (Case c : kAllCases) {
        std::size_t need = scaled_count(in.base_counts[c], max_percent);
        std::size_t got = have[static_cast<std::size_t>(c)];
        if (got < need) {
          short_any = true;
          targets[static_cast<std::size_t>(c)] = pool.message_count(c, model) + (need - got);
        }
      }
      if (!short_any || round == 4) {
        if (!in.artifact_dir.empty()) {
          std::filesystem::create_directories(artifact("pool"));
          write_corpus(*corpus, artifact(fmt::format("pool/{}.jsonl", file_safe(model))));
        }
        check_pool_sufficiency(labeled, in.base_counts, max_percent);
        return labeled;
      }
    }
  }

  void fully_synthetic() {
    report.table.layout = TableLayout::fully_synthetic();
    require_models();
    const SplitSet s = splits();
    const auto gold = in.corpus->gold_view();
    const int max_percent = *std::max_element(spec.percents.begin(), spec.percents.end());
    std::atomic<std::size_t> authentic_rows{0};
    std::size_t gold_reads = 0;
    ordered_json pools = ordered_json::array();
    for (const auto& model : spec.models) {
      DatasetSlice labeled = build_pool(model, max_percent);
      auto stats = slice_stats(labeled);
      pools.push_back({{"model", model},
                       {"labels", labeled.view->describe()},
                       {"messages", labeled.corpus->size()},
                       {"labeled", stats.labeled},
                       {"harm", stats.harm},
                       {"digest", sha256_hex(serialize_corpus(*labeled.corpus))}});
      for (int percent : spec.percents) {
        for (Sampling sampling : spec.sampling) {
          std::vector<std::string> keys{model, percent_key(percent), std::string(to_string(sampling))};
          RepetitionDataFn data = [&, percent, sampling](std::uint64_t seed) {
            SamplePlan plan;
            plan.percent = percent;
            plan.seed = seed;
            SlicePair pair = sample_pool(labeled, in.base_counts, plan);
            DatasetSlice train = sampling == Sampling::Up ? upsample_minority(pair.train, seed) : pair.train;
            for (const DatasetSlice* sl : {&train, &pair.validation}) {
              for (std::size_t i = 0; i < sl->size(); ++i) {
                if (!sl->message(i).provenance.is_synthetic()) authentic_rows.fetch_add(1);
              }
            }
            return RepetitionData{train, pair.validation, pair.validation};
          };
          auto run = run_repetitions(learner(), data, s.test, spec.plan, rep_options(row_label(keys), gold));
          gold_reads += run.gold_reads_during_training;
          add_repetitions(std::move(keys), run);
        }
      }
    }
    extra["pools"] = std::move(pools);
    contract("authentic_train_validation_rows", authentic_rows.load());
    contract("gold_reads_during_training", gold_reads);
  }

  void synthetic_labels() {
    report.table.layout = TableLayout::synthetic_labels();
    require_models();
    const SplitSet s = splits();
    const auto gold = in.corpus->gold_view();
    const DatasetSlice train_s = strip_gold_labels(s.train);
    const DatasetSlice val_s = strip_gold_labels(s.validation);
    std::size_t gold_reads = 0;
    ordered_json annotators = ordered_json::array();
    for (const auto& model : spec.models) {
      auto annotate = [&](const DatasetSlice& slice, const std::string& split) {
        AnnotateOptions o;
        o.model = model;
        o.prompt_mode = spec.prompt_mode;
        o.policy = spec.policy;
        o.parallelism = in.parallelism;
        o.config_digest = in.config_digest;
        o.out_dir = artifact(fmt::format("annotations/{}_{}_{}", file_safe(model),
                                         to_string(spec.prompt_mode), split));
        return annotate_slice(slice, gateway(), kit(), o);
      };
      AnnotationRun tr = annotate(train_s, "train");
      AnnotationRun va = annotate(val_s, "validation");
      std::unordered_map<std::string, Label> labels;
      for (const auto* run : {&tr, &va}) {
        for (const auto& a : run->assignments()) labels.emplace(a.message_id, a.label);
      }
      auto view = std::make_shared<AssignedView>(tr.source(), std::move(labels));
      const DatasetSlice train_v = train_s.with_view(view);
      const DatasetSlice val_v = val_s.with_view(view);

      for (int percent : spec.percents) {
        for (Sampling sampling : spec.sampling) {
          std::vector<std::string> keys{fmt::format("{} ({})", model, to_string(spec.policy)),
                                        percent_key(percent), std::string(to_string(sampling))};
          RepetitionDataFn data = [&, percent, sampling](std::uint64_t seed) {
            SlicePair sub = subsample_authentic(train_v, val_v, percent, seed);
            DatasetSlice train = labeled_only(sub.train);
            if (sampling == Sampling::Up) train = upsample_minority(train, seed);
            return RepetitionData{train, labeled_only(sub.validation), sub.validation.with_view(gold)};
          };
          auto run = run_repetitions(learner(), data, s.test, spec.plan, rep_options(row_label(keys), gold));
          gold_reads += run.gold_reads_during_training;
          add_repetitions(std::move(keys), run);
        }
      }

      // Annotator agreement is scored after training so it cannot leak.
      auto a = score_against_gold(tr, *in.corpus, *gold);
      auto b = score_against_gold(va, *in.corpus, *gold);
      ConfusionMatrix cm = a.metrics.cm;
      cm += b.metrics.cm;
      Metrics m = metrics_from(cm);
      report.notes.push_back(fmt::format(
          "{} labels vs gold on train+validation: accuracy {:.4f}, macro-F1 {:.4f} ({} scored, {} "
          "unlabeled)",
          model, m.accuracy, m.macro_f1, cm.total(), a.excluded + b.excluded));
      annotators.push_back({{"model", model},
                            {"source", tr.source()},
                            {"unparsed", tr.unparsed_count + va.unparsed_count},
                            {"dropped", tr.dropped().size() + va.dropped().size()},
                            {"agreement_accuracy", m.accuracy},
                            {"agreement_macro_f1", m.macro_f1}});
    }
    extra["annotators"] = std::move(annotators);
    contract("gold_reads_during_training", gold_reads);
  }
};

}  // namespace

std::string_view to_string(ScenarioId id) {
  switch (id) {
    case ScenarioId::S1_baseline: return "s1_baseline";
    case ScenarioId::S2_llm_classifier: return "s2_llm_classifier";
    case ScenarioId::S3_fully_synthetic: return "s3_fully_synthetic";
    case ScenarioId::S4_synthetic_labels: return "s4_synthetic_labels";
  }
  return "?";
}

std::optional<ScenarioId> parse_scenario(std::string_view s) {
  std::string lower;
  for (char c : s) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (ScenarioId id : {ScenarioId::S1_baseline, ScenarioId::S2_llm_classifier,
                        ScenarioId::S3_fully_synthetic, ScenarioId::S4_synthetic_labels}) {
    std::string_view full = to_string(id);
    if (lower == full || lower == full.substr(0, 2)) return id;
  }
  return std::nullopt;
}

ScenarioSpec ScenarioSpec::from_config(ScenarioId id, const Config& cfg) {
  ScenarioSpec spec;
  spec.id = id;
  spec.sampling = cfg.experiment.sampling;
  spec.plan.n_repetitions = cfg.experiment.repetitions;
  spec.plan.base_seed = cfg.experiment.base_seed;
  switch (id) {
    case ScenarioId::S1_baseline:
      spec.percents = cfg.experiment.baseline_percents;
      break;
    case ScenarioId::S2_llm_classifier:
      spec.models = cfg.models.classifiers;
      spec.policy = cfg.experiment.classifier_policy;
      break;
    case ScenarioId::S3_fully_synthetic:
      spec.models = cfg.models.generators;
      spec.policy = LabelPolicy::FU;
      spec.percents = cfg.experiment.synthetic_percents;
      break;
    case ScenarioId::S4_synthetic_labels:
      spec.models = cfg.models.annotators;
      spec.prompt_mode = cfg.experiment.annotation_mode;
      spec.policy = cfg.experiment.annotation_policy;
      spec.percents = cfg.experiment.label_percents;
      break;
  }
  return spec;
}

PromptMode select_prompt_mode(double ge_dev_accuracy, double gf_dev_accuracy) {
  return gf_dev_accuracy > ge_dev_accuracy ? PromptMode::GF : PromptMode::GE;
}

RunReport run_scenario(const ScenarioSpec& spec, const ScenarioInputs& in) {
  if (!in.corpus) throw ConfigError("no corpus loaded");
  if (spec.id != ScenarioId::S2_llm_classifier && spec.percents.empty()) {
    throw ConfigError(fmt::format("{}: no percents configured", to_string(spec.id)));
  }
  Runner r{spec, in, {}};
  r.report.id = spec.id;
  try {
    switch (spec.id) {
      case ScenarioId::S1_baseline: r.baseline(); break;
      case ScenarioId::S2_llm_classifier: r.llm_classifier(); break;
      case ScenarioId::S3_fully_synthetic: r.fully_synthetic(); break;
      case ScenarioId::S4_synthetic_labels: r.synthetic_labels(); break;
    }
  } catch (const ContractViolation&) {
    throw;
  } catch (const Error& e) {
    throw Error(e.kind(), fmt::format("{}: {}", to_string(spec.id), e.what()));
  }

  ordered_json m;
  m["scenario"] = to_string(spec.id);
  m["config_digest"] = in.config_digest;
  m["corpus_digest"] = sha256_hex(serialize_corpus(*in.corpus));
  if (in.kit) m["prompt_digest"] = in.kit->digest();
  if (in.gateway) m["backend"] = in.gateway->backend().name();
  if (in.learner) {
    m["learner"] = in.learner->name();
    m["learner_config_digest"] = in.learner->config_digest();
  }
  m["models"] = spec.models;
  m["prompt_mode"] = to_string(spec.prompt_mode);
  m["policy"] = to_string(spec.policy);
  m["percents"] = spec.percents;
  std::vector<std::string> sampling;
  for (Sampling s : spec.sampling) sampling.emplace_back(to_string(s));
  m["sampling"] = sampling;
  m["base_counts"] = in.base_counts.counts;
  m["repetitions"] = spec.plan.n_repetitions;
  m["base_seed"] = spec.plan.base_seed;
  ordered_json contracts = ordered_json::object();
  for (const auto& c : r.report.contracts) contracts[c.name] = c.observed;
  m["contracts"] = std::move(contracts);
  for (auto& [k, v] : r.extra.items()) m[k] = v;
  m["rows"] = std::move(r.rows);
  r.report.manifest = m.dump(2) + "\n";
  return std::move(r.report);
}

RunReport run_scenario_from_config(ScenarioId id, const Config& cfg,
                                   const std::filesystem::path& out_dir) {
  ScenarioInputs in;
  in.corpus = ingest_corpus(cfg.data.corpus);
  in.split_rule = cfg.split_rule();
  in.kit = std::make_shared<PromptKit>(PromptKit::load(cfg.prompts_dir));
  if (id != ScenarioId::S1_baseline) {
    in.gateway = std::make_shared<LlmGateway>(cfg.make_backend(), cfg.gateway_options());
  }
  in.learner = std::make_shared<LinearLearner>(cfg.trainer);
  in.base_counts = cfg.data.base_counts;
  if (!cfg.data.pool.empty()) in.pool = ingest_corpus(cfg.data.pool);
  in.synthetic_labeler = cfg.models.synthetic_labeler;
  in.heuristic_synthetic_labels = cfg.experiment.synthetic_labels == "heuristic";
  in.min_messages = cfg.experiment.min_messages;
  in.max_regen = cfg.experiment.max_regen;
  in.parallelism = cfg.effective_parallelism();
  in.config_digest = cfg.digest;
  in.artifact_dir = out_dir;
  return run_scenario(ScenarioSpec::from_config(id, cfg), in);
}

void write_report(const RunReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir / "per_seed");
  auto write = [](const std::filesystem::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << body;
  };
  std::string text = render_text(report.table);
  if (!report.notes.empty()) {
    text += "\n";
    for (const auto& n : report.notes) text += n + "\n";
  }
  write(out_dir / "report.txt", text);
  write(out_dir / "report.csv", render_csv(report.table));
  write(out_dir / "manifest.json", report.manifest);
  for (const auto& [label, csv] : report.per_seed) write(out_dir / "per_seed" / (label + ".csv"), csv);
}

}  // namespace cbforge
