#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cbforge/annotator.hpp"
#include "cbforge/config.hpp"
#include "cbforge/corpus.hpp"
#include "cbforge/errors.hpp"
#include "cbforge/sampler.hpp"
#include "cbforge/scenarios.hpp"
#include "cbforge/synthesizer.hpp"
#include "cbforge/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace cbforge;
using nlohmann::ordered_json;

namespace {

struct Options {
  fs::path config;
  fs::path corpus;
  fs::path out;
  fs::path labels;
  fs::path input;
  std::string model;
  std::string mode = "GE";
  std::string policy = "D0";
  std::string split = "validation";
  std::string scenario;
  std::string sampling = "none";
  std::string format = "text";
  std::string cases = "ABCD";
  int percent = 100;
  std::uint64_t seed = 0;
  std::optional<int> reps;
  std::optional<std::uint64_t> base_seed;
  std::optional<int> epochs;
  std::optional<int> patience;
  bool score = false;
  bool verbose = false;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& body) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << body;
}

template <typename E>
E parse_enum(const std::string& s, std::optional<E> (*parse)(std::string_view), std::string_view what) {
  auto v = parse(s);
  if (!v) throw ConfigError(fmt::format("unknown {} \"{}\"", what, s));
  return *v;
}

std::string pick_model(const std::string& flag, const std::vector<std::string>& configured,
                       std::string_view role) {
  if (!flag.empty()) return flag;
  if (configured.empty()) throw ConfigError(fmt::format("no {} model given or configured", role));
  return configured.front();
}

std::string stats_line(const DatasetSlice& s) {
  auto st = slice_stats(s);
  return fmt::format("{} messages, {} harm ({:.1f}%)", st.size, st.harm, 100.0 * st.harm_fraction());
}

ordered_json manifest_json(const TrainingManifest& m) {
  ordered_json j;
  j["learner"] = m.learner;
  j["config_digest"] = m.config_digest;
  j["train_digest"] = m.train_digest;
  j["train_view"] = m.train_view;
  j["validation_digest"] = m.validation_digest;
  j["validation_view"] = m.validation_view;
  j["seed"] = m.seed;
  j["best_epoch"] = m.best_epoch;
  j["epochs_run"] = m.epochs_run;
  j["best_validation_accuracy"] = m.best_validation_accuracy;
  j["validation_history"] = m.validation_history;
  j["weight_digest"] = m.weight_digest;
  j["tie_rule"] = m.tie_rule;
  return j;
}

Config load_config(const Options& o) {
  Config cfg = Config::load(o.config);
  if (o.reps) cfg.experiment.repetitions = *o.reps;
  if (o.base_seed) cfg.experiment.base_seed = *o.base_seed;
  if (o.epochs) cfg.trainer.epochs_max = *o.epochs;
  if (o.patience) cfg.trainer.early_stop_patience = *o.patience;
  return cfg;
}

std::shared_ptr<LlmGateway> make_gateway(const Config& cfg) {
  return std::make_shared<LlmGateway>(cfg.make_backend(), cfg.gateway_options());
}

/// Authentic splits, with labels from an annotation run instead of gold when given.
SplitSet load_splits(const Config& cfg, const fs::path& corpus_path, const fs::path& labels_dir) {
  auto corpus = ingest_corpus(corpus_path.empty() ? cfg.data.corpus : corpus_path);
  SplitSet s = canonical_splits(corpus, cfg.split_rule());
  if (!labels_dir.empty()) {
    auto view = read_annotation_run(labels_dir).view();
    s.train = s.train.with_view(view);
    s.validation = s.validation.with_view(view);
  }
  return s;
}

int cmd_ingest(const Options& o) {
  auto corpus = ingest_corpus(o.input);
  auto all = DatasetSlice{corpus, {}, Split::Train, corpus->gold_view()};
  for (std::size_t i = 0; i < corpus->size(); ++i) all.rows.push_back(i);
  auto cases = per_case_counts(all);
  std::cout << fmt::format("{}; A {} B {} C {} D {}\n", stats_line(all), cases[0], cases[1],
                           cases[2], cases[3]);
  bool tagged = !corpus->empty() && corpus->at(0).split.has_value();
  if (tagged) {
    SplitSet s = canonical_splits(corpus, std::nullopt);
    for (Split sp : kAllSplits) std::cout << fmt::format("{}: {}\n", to_string(sp), stats_line(s.get(sp)));
  }
  return 0;
}

int cmd_generate(const Options& o) {
  Config cfg = load_config(o);
  auto kit = PromptKit::load(cfg.prompts_dir);
  auto gateway = make_gateway(cfg);
  GenerationOptions gen;
  gen.model = pick_model(o.model, cfg.models.generators, "generator");
  gen.min_messages = cfg.experiment.min_messages;
  gen.max_regen = cfg.experiment.max_regen;
  gen.raw_dir = o.out / "raw";

  const fs::path pool_file = o.out / "pool.jsonl";
  SyntheticPool pool;
  if (fs::exists(pool_file)) pool = SyntheticPool::from_corpus(*ingest_corpus(pool_file));
  std::vector<Case> cases;
  for (char c : o.cases) {
    if (c == ',' || c == ' ') continue;
    cases.push_back(parse_enum<Case>(std::string(1, c), parse_case, "case"));
  }
  std::array<std::size_t, 4> targets{};
  for (Case c : cases) targets[static_cast<std::size_t>(c)] = scaled_count(cfg.data.base_counts[c], o.percent);
  grow_pool(pool, cases, targets, *gateway, kit, gen);
  auto corpus = pool.to_corpus();
  fs::create_directories(o.out);
  write_corpus(*corpus, pool_file);
  for (Case c : cases) {
    std::cout << fmt::format("case {}: {} messages (target {})\n", to_string(c),
                             pool.message_count(c, gen.model), targets[static_cast<std::size_t>(c)]);
  }
  return 0;
}

int cmd_annotate(const Options& o) {
  Config cfg = load_config(o);
  auto kit = PromptKit::load(cfg.prompts_dir);
  auto gateway = make_gateway(cfg);
  AnnotateOptions a;
  a.model = pick_model(o.model, cfg.models.annotators, "annotator");
  a.prompt_mode = parse_enum<PromptMode>(o.mode, parse_prompt_mode, "prompt mode");
  a.policy = parse_enum<LabelPolicy>(o.policy, parse_label_policy, "policy");
  a.parallelism = cfg.effective_parallelism();
  a.out_dir = o.out;
  a.config_digest = cfg.digest;

  auto corpus = ingest_corpus(o.corpus.empty() ? cfg.data.corpus : o.corpus);
  DatasetSlice slice{corpus, {}, Split::Train, corpus->gold_view()};
  if (o.split == "all") {
    for (std::size_t i = 0; i < corpus->size(); ++i) slice.rows.push_back(i);
  } else {
    slice = canonical_splits(corpus, cfg.split_rule()).get(parse_enum<Split>(o.split, parse_split, "split"));
  }
  AnnotationRun run = annotate_slice(strip_gold_labels(slice), *gateway, kit, a);
  std::cout << fmt::format("{}: {} messages, {} unparsed, {} labeled under {}\n", run.source(),
                           run.records.size(), run.unparsed_count, run.assignments().size(),
                           to_string(run.policy));
  if (o.score) {
    auto s = score_against_gold(run, *corpus, *corpus->gold_view());
    std::cout << fmt::format("agreement with gold: accuracy {:.4f}, macro-F1 {:.4f} ({} scored, {} excluded)\n",
                             s.metrics.accuracy, s.metrics.macro_f1, s.scored, s.excluded);
  }
  return 0;
}

int cmd_sample(const Options& o) {
  Config cfg = load_config(o);
  const Sampling sampling = parse_enum<Sampling>(o.sampling, parse_sampling, "sampling strategy");
  SlicePair pair;
  SplitSet s;
  bool synthetic = false;
  if (!o.corpus.empty()) {
    auto pool = ingest_corpus(o.corpus);
    synthetic = !pool->empty() && pool->at(0).provenance.is_synthetic();
    if (synthetic) {
      std::shared_ptr<const LabelView> view = o.labels.empty()
                                                  ? std::shared_ptr<const LabelView>(role_heuristic_view(*pool))
                                                  : read_annotation_run(o.labels).view();
      SamplePlan plan;
      plan.percent = o.percent;
      plan.seed = o.seed;
      pair = sample_pool(pool_slice(pool, view), cfg.data.base_counts, plan);
    }
  }
  if (!synthetic) {
    if (o.percent > 100) throw ConfigError("authentic subsampling is limited to 100%");
    s = load_splits(cfg, o.corpus, o.labels);
    pair = subsample_authentic(s.train, s.validation, o.percent, o.seed);
  }
  if (sampling == Sampling::Up) pair.train = upsample_minority(labeled_only(pair.train), o.seed);

  fs::create_directories(o.out);
  for (const auto& [name, slice] : {std::pair{"train", &pair.train}, std::pair{"validation", &pair.validation}}) {
    std::string ids;
    for (const auto& id : slice->ids()) ids += id + "\n";
    write_file(o.out / fmt::format("{}_ids.txt", name), ids);
    auto c = per_case_counts(*slice);
    std::cout << fmt::format("{}: {}; A {} B {} C {} D {}\n", name, stats_line(*slice), c[0], c[1], c[2], c[3]);
  }
  ordered_json plan;
  plan["percent"] = o.percent;
  plan["seed"] = o.seed;
  plan["sampling"] = to_string(sampling);
  plan["source"] = synthetic ? "synthetic" : "authentic";
  plan["base_counts"] = cfg.data.base_counts.counts;
  write_file(o.out / "plan.json", plan.dump(2) + "\n");
  return 0;
}

int cmd_train(const Options& o) {
  Config cfg = load_config(o);
  const Sampling sampling = parse_enum<Sampling>(o.sampling, parse_sampling, "sampling strategy");
  SplitSet s = load_splits(cfg, o.corpus, o.labels);
  SlicePair pair = subsample_authentic(s.train, s.validation, o.percent, o.seed);
  DatasetSlice train_slice = labeled_only(pair.train);
  if (sampling == Sampling::Up) train_slice = upsample_minority(train_slice, o.seed);
  TrainedModel m = train(train_slice, labeled_only(pair.validation), cfg.trainer, o.seed);
  fs::create_directories(o.out);
  m.model->save(o.out / "model.bin");
  write_file(o.out / "manifest.json", manifest_json(m.manifest).dump(2) + "\n");
  std::cout << fmt::format("trained on {} (best epoch {}, validation accuracy {:.4f})\n",
                           stats_line(train_slice), m.manifest.best_epoch,
                           m.manifest.best_validation_accuracy);
  return 0;
}

int cmd_evaluate(const Options& o) {
  Config cfg = load_config(o);
  LinearModel model = LinearModel::load(o.input / "model.bin", cfg.trainer.features);
  auto corpus = ingest_corpus(o.corpus.empty() ? cfg.data.corpus : o.corpus);
  const Split split = parse_enum<Split>(o.split, parse_split, "split");
  DatasetSlice slice = canonical_splits(corpus, cfg.split_rule()).get(split);
  Metrics m = metrics_from(confusion(model, slice));
  std::cout << fmt::format("{}: accuracy {:.4f}, macro-F1 {:.4f} on {} messages\n", to_string(split),
                           m.accuracy, m.macro_f1, m.cm.total());
  if (!o.out.empty()) {
    ordered_json j;
    j["split"] = to_string(split);
    j["accuracy"] = m.accuracy;
    j["macro_f1"] = m.macro_f1;
    j["confusion"] = {{"tp", m.cm.tp}, {"fp", m.cm.fp}, {"fn", m.cm.fn}, {"tn", m.cm.tn}};
    write_file(o.out / "metrics.json", j.dump(2) + "\n");
  }
  return 0;
}

int cmd_run_scenario(const Options& o) {
  Config cfg = load_config(o);
  ScenarioId id = parse_enum<ScenarioId>(o.scenario, parse_scenario, "scenario");
  RunReport report = run_scenario_from_config(id, cfg, o.out);
  write_report(report, o.out);
  std::cout << render_text(report.table);
  for (const auto& n : report.notes) std::cout << n << "\n";
  std::cout << fmt::format("report written to {}\n", o.out.string());
  return 0;
}

int cmd_report(const Options& o) {
  std::string csv = read_file(o.input / "report.csv");
  if (o.format == "csv") {
    std::cout << csv;
  } else if (o.format == "text") {
    std::cout << render_text(parse_csv(csv));
  } else {
    throw ConfigError("unknown format \"" + o.format + "\"");
  }
  return 0;
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic data and labels for cyberbullying detection"};
  app.name("cb-forge");
  app.require_subcommand(1);
  Options o;
  app.add_flag("-v,--verbose", o.verbose, "Log progress to stderr");

  auto config_opt = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "TOML configuration")->required();
  };
  auto* ingest = app.add_subcommand("ingest", "Validate a JSONL corpus and print label statistics");
  ingest->add_option("corpus", o.input, "Corpus file")->required();

  auto* generate = app.add_subcommand("generate", "Generate synthetic conversations into a pool");
  config_opt(generate);
  generate->add_option("--model", o.model, "Generator model (default: first configured)");
  generate->add_option("--percent", o.percent, "Target size relative to the base counts")->check(CLI::PositiveNumber);
  generate->add_option("--cases", o.cases, "Cases to generate, e.g. ABCD or A,B");
  generate->add_option("--out", o.out, "Pool directory (pool.jsonl, raw/)")->required();

  auto* annotate = app.add_subcommand("annotate", "Label messages with an LLM");
  config_opt(annotate);
  annotate->add_option("--model", o.model, "Annotator model (default: first configured)");
  annotate->add_option("--mode", o.mode, "Prompt: GE or GF");
  annotate->add_option("--policy", o.policy, "Unparsed replies: D0 or FU");
  annotate->add_option("--split", o.split, "train, validation, test or all");
  annotate->add_option("--corpus", o.corpus, "Corpus to label (default: configured)");
  annotate->add_flag("--score", o.score, "Print agreement with gold labels");
  annotate->add_option("--out", o.out, "Directory for assignments.jsonl and manifest.json")->required();

  auto* sample = app.add_subcommand("sample", "Draw a train/validation sample");
  config_opt(sample);
  sample->add_option("--corpus", o.corpus, "Authentic corpus or synthetic pool (default: configured corpus)");
  sample->add_option("--labels", o.labels, "Annotation run directory providing labels");
  sample->add_option("--percent", o.percent, "Relative size")->check(CLI::PositiveNumber);
  sample->add_option("--seed", o.seed, "Sampling seed");
  sample->add_option("--sampling", o.sampling, "none or up");
  sample->add_option("--out", o.out, "Directory for id lists and plan.json")->required();

  auto* trainc = app.add_subcommand("train", "Train one classifier");
  config_opt(trainc);
  trainc->add_option("--corpus", o.corpus, "Corpus (default: configured)");
  trainc->add_option("--labels", o.labels, "Annotation run directory replacing gold train/validation labels");
  trainc->add_option("--percent", o.percent, "Relative size of train and validation")->check(CLI::Range(1, 100));
  trainc->add_option("--seed", o.seed, "Training and sampling seed");
  trainc->add_option("--sampling", o.sampling, "none or up");
  trainc->add_option("--epochs", o.epochs, "Maximum epochs")->check(CLI::PositiveNumber);
  trainc->add_option("--patience", o.patience, "Early-stopping patience in epochs")->check(CLI::PositiveNumber);
  trainc->add_option("--out", o.out, "Directory for model.bin and manifest.json")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Score a trained model against gold labels");
  config_opt(evaluate);
  evaluate->add_option("--model-dir", o.input, "Directory holding model.bin")->required();
  evaluate->add_option("--corpus", o.corpus, "Corpus (default: configured)");
  evaluate->add_option("--split", o.split, "validation or test")->default_val("test");
  evaluate->add_option("--out", o.out, "Write metrics.json here");

  auto* run = app.add_subcommand("run-scenario", "Run one scenario end to end");
  run->add_option("--scenario", o.scenario, "s1, s2, s3 or s4")->required();
  config_opt(run);
  run->add_option("--reps", o.reps, "Repetitions per row")->check(CLI::PositiveNumber);
  run->add_option("--base-seed", o.base_seed, "First repetition seed");
  run->add_option("--epochs", o.epochs, "Maximum epochs")->check(CLI::PositiveNumber);
  run->add_option("--patience", o.patience, "Early-stopping patience in epochs")->check(CLI::PositiveNumber);
  run->add_option("--out", o.out, "Output directory")->required();

  auto* report = app.add_subcommand("report", "Print a finished run's result table");
  report->add_option("--in", o.input, "Run directory holding report.csv")->required();
  report->add_option("--format", o.format, "text or csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto logger = spdlog::stderr_color_mt("cb-forge");
  spdlog::set_default_logger(logger);
  spdlog::set_level(o.verbose ? spdlog::level::info : spdlog::level::warn);

  try {
    if (ingest->parsed()) return cmd_ingest(o);
    if (generate->parsed()) return cmd_generate(o);
    if (annotate->parsed()) return cmd_annotate(o);
    if (sample->parsed()) return cmd_sample(o);
    if (trainc->parsed()) return cmd_train(o);
    if (evaluate->parsed()) return cmd_evaluate(o);
    if (run->parsed()) return cmd_run_scenario(o);
    if (report->parsed()) return cmd_report(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal_error: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 2;
}
