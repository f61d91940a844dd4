#include "cbforge/trainer.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <bit>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>

#include "cbforge/digest.hpp"
#include "cbforge/errors.hpp"
#include "cbforge/random.hpp"
#include "json.hpp"

namespace cbforge {
namespace {

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

double softplus(double a) { return std::max(a, 0.0) + std::log1p(std::exp(-std::abs(a))); }

double dot(const std::vector<double>& w, const SparseVector& x) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.nnz(); ++k) s += w[x.index[k]] * x.value[k];
  return s;
}

std::vector<Label> visible_labels(const DatasetSlice& slice, const char* what) {
  std::vector<Label> out;
  out.reserve(slice.size());
  for (std::size_t i = 0; i < slice.size(); ++i) {
    auto l = slice.label(i);
    if (!l) {
      throw PreconditionError(fmt::format("{} message \"{}\" has no label under view {}", what,
                                          slice.message(i).id, slice.view->describe()));
    }
    out.push_back(*l);
  }
  return out;
}

std::vector<SparseVector> slice_features(const DatasetSlice& slice, const FeatureConfig& cfg) {
  std::vector<std::string_view> texts;
  texts.reserve(slice.size());
  for (std::size_t i = 0; i < slice.size(); ++i) texts.push_back(slice.message(i).text);
  return featurize_all(texts, cfg);
}

}  // namespace

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void ClassifierConfig::validate() const {
  features.validate();
  if (epochs_max <= 0) throw ConfigError("epochs_max must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (!(l2 > 0.0) || !std::isfinite(l2)) throw ConfigError("l2 must be positive");
  if (early_stop_patience <= 0) throw ConfigError("early_stop_patience must be positive");
}

std::string ClassifierConfig::digest() const {
  nlohmann::ordered_json j;
  j["buckets_log2"] = features.buckets_log2;
  j["word_bigrams"] = features.word_bigrams;
  j["char_min"] = features.char_min;
  j["char_max"] = features.char_max;
  j["epochs_max"] = epochs_max;
  j["learning_rate"] = learning_rate;
  j["l2"] = l2;
  j["early_stop_patience"] = early_stop_patience;
  return sha256_hex(j.dump());
}

LinearModel::LinearModel(FeatureConfig features, std::vector<double> weights, double bias)
    : features_(features), weights_(std::move(weights)), bias_(bias) {
  if (weights_.size() != features_.buckets()) {
    throw PreconditionError(fmt::format("weight vector has {} entries, feature space has {}",
                                        weights_.size(), features_.buckets()));
  }
}

double LinearModel::margin(const SparseVector& x) const { return dot(weights_, x) + bias_; }

double LinearModel::score(const SparseVector& x) const { return sigmoid(margin(x)); }

Prediction LinearModel::predict(std::string_view text) const {
  const double s = score(featurize(text, features_));
  return {label_for_score(s), s};
}

bool LinearModel::finite() const {
  return std::isfinite(bias_) &&
         std::all_of(weights_.begin(), weights_.end(), [](double w) { return std::isfinite(w); });
}

std::string LinearModel::weight_digest() const {
  std::string bytes;
  bytes.reserve(8 * (weights_.size() + 1));
  put_u64_le(bytes, std::bit_cast<std::uint64_t>(bias_));
  for (double w : weights_) put_u64_le(bytes, std::bit_cast<std::uint64_t>(w));
  return sha256_hex(bytes);
}

void LinearModel::save(const std::filesystem::path& file) const {
  std::string bytes = "CBFLIN01";
  const auto log2 = static_cast<std::uint32_t>(features_.buckets_log2);
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((log2 >> (8 * i)) & 0xFF));
  put_u64_le(bytes, std::bit_cast<std::uint64_t>(bias_));
  for (double w : weights_) put_u64_le(bytes, std::bit_cast<std::uint64_t>(w));
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write model {}", file.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

LinearModel LinearModel::load(const std::filesystem::path& file, FeatureConfig features) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read model {}", file.string()));
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 20 || std::string(bytes.begin(), bytes.begin() + 8) != "CBFLIN01") {
    throw ParseError(fmt::format("{} is not a linear model file", file.string()));
  }
  std::uint32_t log2 = 0;
  for (int i = 3; i >= 0; --i) log2 = (log2 << 8) | bytes[8 + i];
  if (static_cast<int>(log2) != features.buckets_log2) {
    throw ConfigError(fmt::format("model has 2^{} buckets, configuration says 2^{}", log2,
                                  features.buckets_log2));
  }
  const std::size_t n = features.buckets();
  if (bytes.size() != 20 + 8 * n) throw ParseError("truncated model file");
  const double bias = std::bit_cast<double>(get_u64_le(&bytes[12]));
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::bit_cast<double>(get_u64_le(&bytes[20 + 8 * i]));
  return LinearModel(features, std::move(w), bias);
}

std::string slice_digest(const DatasetSlice& slice) {
  std::string buf;
  for (std::size_t i = 0; i < slice.size(); ++i) {
    buf += slice.message(i).id;
    buf += '\t';
    auto l = slice.label(i);
    buf += l ? to_string(*l) : "-";
    buf += '\n';
  }
  return sha256_hex(buf);
}

LossGradient logistic_loss_gradient(std::span<const double> w, double b, const SparseVector& x,
                                    Label y, double l2) {
  double z = b;
  for (std::size_t k = 0; k < x.nnz(); ++k) z += w[x.index[k]] * x.value[k];
  const double target = y == Label::Harm ? 1.0 : 0.0;
  LossGradient out;
  double sq = 0.0;
  for (double wi : w) sq += wi * wi;
  out.loss = (y == Label::Harm ? softplus(-z) : softplus(z)) + 0.5 * l2 * sq;
  const double g = sigmoid(z) - target;
  out.grad_w.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out.grad_w[i] = l2 * w[i];
  for (std::size_t k = 0; k < x.nnz(); ++k) out.grad_w[x.index[k]] += g * x.value[k];
  out.grad_b = g;
  return out;
}

TrainedModel train(const DatasetSlice& train_slice, const DatasetSlice& validation,
                   const ClassifierConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (train_slice.empty()) throw PreconditionError("training slice is empty");
  const auto y_train = visible_labels(train_slice, "training");
  const auto y_val = visible_labels(validation, "validation");
  const auto harm = std::count(y_train.begin(), y_train.end(), Label::Harm);
  if (harm == 0 || static_cast<std::size_t>(harm) == y_train.size()) {
    throw TrainingError("training labels contain a single class");
  }
  const auto x_train = slice_features(train_slice, cfg.features);
  const auto x_val = slice_features(validation, cfg.features);

  // Weights are stored as scale * v so the L2 shrink is O(1) per step.
  std::vector<double> v(cfg.features.buckets(), 0.0);
  double scale = 1.0;
  double bias = 0.0;
  std::vector<double> best_w(v.size(), 0.0);
  double best_b = 0.0;
  double best_acc = -1.0;
  int best_epoch = -1;
  int epochs_run = 0;
  std::vector<double> history;

  Rng rng(seed);
  std::vector<std::size_t> order(x_train.size());
  std::iota(order.begin(), order.end(), 0);
  const double n = static_cast<double>(x_train.size());
  std::uint64_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs_max; ++epoch) {
    fisher_yates(std::span(order), rng);
    double loss = 0.0;
    for (std::size_t i : order) {
      const SparseVector& x = x_train[i];
      const double eta = cfg.learning_rate / std::sqrt(1.0 + static_cast<double>(step) / n);
      const double z = scale * dot(v, x) + bias;
      const bool harm_label = y_train[i] == Label::Harm;
      loss += harm_label ? softplus(-z) : softplus(z);
      const double g = sigmoid(z) - (harm_label ? 1.0 : 0.0);
      scale *= 1.0 - eta * cfg.l2;
      if (scale < 1e-9) {
        for (double& w : v) w *= scale;
        scale = 1.0;
      }
      const double coef = eta * g / scale;
      for (std::size_t k = 0; k < x.nnz(); ++k) v[x.index[k]] -= coef * x.value[k];
      bias -= eta * g;
      ++step;
    }
    if (!std::isfinite(loss) || !std::isfinite(bias) || !std::isfinite(scale)) {
      throw DivergenceError(fmt::format("non-finite loss at epoch {} (seed {})", epoch, seed));
    }
    epochs_run = epoch + 1;

    double acc = 0.0;
    if (!x_val.empty()) {
      std::size_t correct = 0;
      for (std::size_t i = 0; i < x_val.size(); ++i) {
        const double s = sigmoid(scale * dot(v, x_val[i]) + bias);
        correct += label_for_score(s) == y_val[i];
      }
      acc = static_cast<double>(correct) / static_cast<double>(x_val.size());
    }
    history.push_back(acc);

    // Without a validation slice every epoch "improves", so the last wins.
    if (x_val.empty() || acc > best_acc) {
      best_acc = acc;
      best_epoch = epoch;
      for (std::size_t k = 0; k < v.size(); ++k) best_w[k] = scale * v[k];
      best_b = bias;
    } else if (epoch - best_epoch >= cfg.early_stop_patience) {
      break;
    }
  }

  auto model = std::make_shared<LinearModel>(cfg.features, std::move(best_w), best_b);
  if (!model->finite()) throw DivergenceError("trained weights are not finite");

  TrainedModel out;
  out.model = model;
  auto& m = out.manifest;
  m.config_digest = cfg.digest();
  m.train_digest = slice_digest(train_slice);
  m.validation_digest = slice_digest(validation);
  m.train_view = train_slice.view->describe();
  m.validation_view = validation.view->describe();
  m.seed = seed;
  m.best_epoch = best_epoch;
  m.epochs_run = epochs_run;
  m.best_validation_accuracy = best_acc;
  m.validation_history = std::move(history);
  m.weight_digest = model->weight_digest();
  return out;
}

FitResult LinearLearner::do_fit(const DatasetSlice& train_slice, const DatasetSlice& validation,
                                std::uint64_t seed) const {
  auto trained = train(train_slice, validation, cfg_, seed);
  return {trained.model, std::move(trained.manifest)};
}

std::vector<Prediction> predict_all(const Classifier& model, const DatasetSlice& slice) {
  std::vector<Prediction> out(slice.size());
  const auto n = static_cast<std::int64_t>(slice.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = model.predict(slice.message(k).text);
  }
  return out;
}

namespace serial {

std::vector<Prediction> predict_all(const Classifier& model, const DatasetSlice& slice) {
  std::vector<Prediction> out;
  out.reserve(slice.size());
  for (std::size_t i = 0; i < slice.size(); ++i) out.push_back(model.predict(slice.message(i).text));
  return out;
}

}  // namespace serial

ConfusionMatrix confusion(const Classifier& model, const DatasetSlice& slice) {
  const auto gold = visible_labels(slice, "evaluation");
  const auto preds = predict_all(model, slice);
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) cm.add(preds[i].label, gold[i]);
  return cm;
}

std::vector<std::uint64_t> RepetitionPlan::seeds() const {
  std::vector<std::uint64_t> s;
  for (int i = 0; i < n_repetitions; ++i) s.push_back(base_seed + static_cast<std::uint64_t>(i));
  return s;
}

std::string per_seed_csv(const std::vector<RepetitionResult>& results) {
  std::string out =
      "seed,train_size,validation_size,best_epoch,epochs_run,dev_accuracy,dev_macro_f1,"
      "test_accuracy,test_macro_f1\n";
  for (const auto& r : results) {
    out += fmt::format("{},{},{},{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.seed, r.train_size,
                       r.validation_size, r.manifest.best_epoch, r.manifest.epochs_run,
                       r.validation.accuracy, r.validation.macro_f1, r.test.accuracy,
                       r.test.macro_f1);
  }
  return out;
}

RepetitionRun run_repetitions(const Learner& learner, const RepetitionDataFn& data,
                              const DatasetSlice& test, const RepetitionPlan& plan,
                              const RepetitionOptions& opts) {
  if (plan.n_repetitions < 1) throw PreconditionError("need at least one repetition");
  const auto seeds = plan.seeds();
  const auto n = static_cast<std::int64_t>(seeds.size());

  struct Slot {
    std::optional<RepetitionData> data;
    std::optional<FitResult> fit;
    std::exception_ptr error;
    RepetitionResult result;
  };
  std::vector<Slot> slots(seeds.size());

  const std::size_t gold_before = opts.watch_gold ? opts.watch_gold->access_count() : 0;
#pragma omp parallel for schedule(dynamic) if (opts.parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    auto& slot = slots[static_cast<std::size_t>(i)];
    try {
      slot.data = data(seeds[static_cast<std::size_t>(i)]);
      slot.fit = learner.fit(slot.data->train, slot.data->validation, seeds[static_cast<std::size_t>(i)]);
    } catch (...) {
      slot.error = std::current_exception();
    }
  }
  RepetitionRun run;
  if (opts.watch_gold) run.gold_reads_during_training = opts.watch_gold->access_count() - gold_before;

#pragma omp parallel for schedule(dynamic) if (opts.parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    auto& slot = slots[static_cast<std::size_t>(i)];
    if (slot.error) continue;
    try {
      auto& r = slot.result;
      r.seed = seeds[static_cast<std::size_t>(i)];
      r.manifest = slot.fit->manifest;
      r.train_size = slot.data->train.size();
      r.validation_size = slot.data->validation.size();
      r.validation = metrics_from(confusion(*slot.fit->classifier, slot.data->validation_report));
      r.test = metrics_from(confusion(*slot.fit->classifier, test));
    } catch (...) {
      slot.error = std::current_exception();
    }
  }

  std::exception_ptr first_error;
  for (auto& slot : slots) {
    if (slot.error) {
      if (!first_error) first_error = slot.error;
    } else {
      run.results.push_back(std::move(slot.result));
    }
  }
  if (first_error) {
    if (!opts.partial_out.empty()) {
      std::filesystem::create_directories(opts.partial_out);
      std::ofstream out(opts.partial_out / "per_seed.partial.csv", std::ios::binary);
      out << per_seed_csv(run.results);
      spdlog::warn("repetition failed; {} completed results written to {}", run.results.size(),
                   opts.partial_out.string());
    }
    std::rethrow_exception(first_error);
  }
  return run;
}

}  // namespace cbforge
