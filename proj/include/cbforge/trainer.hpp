#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cbforge/corpus.hpp"
#include "cbforge/evaluator.hpp"
#include "cbforge/features.hpp"

namespace cbforge {

struct ClassifierConfig {
  FeatureConfig features;
  int epochs_max = 50;
  /// Initial step size; decays as lr / sqrt(1 + t / n_train) over steps t.
  double learning_rate = 0.1;
  double l2 = 1e-6;
  int early_stop_patience = 5;

  void validate() const;
  std::string digest() const;
};

struct Prediction {
  Label label = Label::NoHarm;
  double score = 0.5;
};

/// Scores at exactly 0.5 resolve to NoHarm.
inline Label label_for_score(double score) { return score > 0.5 ? Label::Harm : Label::NoHarm; }

double sigmoid(double z);

/// Pluggable text classifier. Implementations must be safe for concurrent
/// predict() calls.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual Prediction predict(std::string_view text) const = 0;
  virtual std::string describe() const = 0;
};

/// Logistic regression over hashed features.
class LinearModel final : public Classifier {
 public:
  LinearModel() = default;
  LinearModel(FeatureConfig features, std::vector<double> weights, double bias);

  Prediction predict(std::string_view text) const override;
  std::string describe() const override { return "linear"; }
  double score(const SparseVector& x) const;
  double margin(const SparseVector& x) const;

  const FeatureConfig& features() const { return features_; }
  std::span<const double> weights() const { return weights_; }
  double bias() const { return bias_; }
  bool finite() const;
  /// SHA-256 over bias and weights as little-endian doubles.
  std::string weight_digest() const;

  /// `<dir>/model.bin`: "CBFLIN01", buckets_log2 (u32), bias, weights.
  void save(const std::filesystem::path& file) const;
  static LinearModel load(const std::filesystem::path& file, FeatureConfig features);

 private:
  FeatureConfig features_;
  std::vector<double> weights_;
  double bias_ = 0.0;
};

struct TrainingManifest {
  std::string learner = "linear";
  std::string config_digest;
  std::string train_digest;
  std::string validation_digest;
  std::string train_view;
  std::string validation_view;
  std::uint64_t seed = 0;
  int best_epoch = -1;
  int epochs_run = 0;
  double best_validation_accuracy = 0.0;
  std::vector<double> validation_history;
  std::string weight_digest;
  std::string tie_rule = "score == 0.5 -> NoHarm";
};

struct TrainedModel {
  std::shared_ptr<const LinearModel> model;
  TrainingManifest manifest;
};

/// Digest of a slice's ids and labels under its view.
std::string slice_digest(const DatasetSlice& slice);

/// Seeded SGD on logistic loss with L2, epoch-level early stopping on
/// validation accuracy (strict improvement), best-epoch weights returned.
/// Both slices must label every row under their own view.
TrainedModel train(const DatasetSlice& train, const DatasetSlice& validation,
                   const ClassifierConfig& cfg, std::uint64_t seed);

/// Loss and gradient of one example: log-loss + l2/2 * |w|^2.
struct LossGradient {
  double loss = 0.0;
  std::vector<double> grad_w;
  double grad_b = 0.0;
};
LossGradient logistic_loss_gradient(std::span<const double> w, double b, const SparseVector& x,
                                    Label y, double l2);

/// Result of fitting one seed. The classifier is type-erased so another
/// model family can replace the linear one.
struct FitResult {
  std::shared_ptr<const Classifier> classifier;
  TrainingManifest manifest;
};

/// Trains classifiers. fit() counts its calls so orchestration code can
/// prove that a stage trained nothing.
class Learner {
 public:
  virtual ~Learner() = default;
  FitResult fit(const DatasetSlice& train, const DatasetSlice& validation,
                std::uint64_t seed) const {
    fit_calls_.fetch_add(1);
    return do_fit(train, validation, seed);
  }
  std::size_t fit_calls() const { return fit_calls_.load(); }
  virtual std::string name() const = 0;
  virtual std::string config_digest() const = 0;

 protected:
  virtual FitResult do_fit(const DatasetSlice& train, const DatasetSlice& validation,
                           std::uint64_t seed) const = 0;

 private:
  mutable std::atomic<std::size_t> fit_calls_{0};
};

class LinearLearner final : public Learner {
 public:
  explicit LinearLearner(ClassifierConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }
  std::string name() const override { return "linear"; }
  std::string config_digest() const override { return cfg_.digest(); }
  const ClassifierConfig& config() const { return cfg_; }

 protected:
  FitResult do_fit(const DatasetSlice& train, const DatasetSlice& validation,
                   std::uint64_t seed) const override;

 private:
  ClassifierConfig cfg_;
};

/// OpenMP kernel: predictions for every row of a slice.
std::vector<Prediction> predict_all(const Classifier& model, const DatasetSlice& slice);
/// Confusion matrix of predictions against the slice's view; rows without
/// a visible label are an error.
ConfusionMatrix confusion(const Classifier& model, const DatasetSlice& slice);

namespace serial {
std::vector<Prediction> predict_all(const Classifier& model, const DatasetSlice& slice);
}  // namespace serial

/// Seeds are base_seed + i for i in [0, n).
struct RepetitionPlan {
  int n_repetitions = 45;
  std::uint64_t base_seed = 0;
  std::vector<std::uint64_t> seeds() const;
};

/// Data for one repetition: what the learner sees and what the validation
/// column is scored on (these differ when training on synthetic labels
/// while reporting against gold).
struct RepetitionData {
  DatasetSlice train;
  DatasetSlice validation;
  DatasetSlice validation_report;
};
using RepetitionDataFn = std::function<RepetitionData(std::uint64_t seed)>;

struct RepetitionResult {
  std::uint64_t seed = 0;
  TrainingManifest manifest;
  Metrics validation;
  Metrics test;
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
};

struct RepetitionRun {
  std::vector<RepetitionResult> results;  // ordered by seed
  /// Gold-label lookups observed while the learner was fitting. Evaluation
  /// happens in a separate phase, so this covers training alone.
  std::size_t gold_reads_during_training = 0;
};

struct RepetitionOptions {
  bool parallel = true;
  /// Gold view whose access counter is sampled around the training phase.
  std::shared_ptr<const GoldView> watch_gold;
  /// When set, completed repetitions are written here if a later one fails.
  std::filesystem::path partial_out;
};

/// seed,train_size,validation_size,best_epoch,epochs_run,dev/test accuracy
/// and macro-F1 at full precision; one line per repetition.
std::string per_seed_csv(const std::vector<RepetitionResult>& results);

/// Train plan.n_repetitions models and score each on its validation_report
/// slice and on `test`. Repetitions run in parallel with independent state;
/// results are assembled by seed.
RepetitionRun run_repetitions(const Learner& learner, const RepetitionDataFn& data,
                              const DatasetSlice& test, const RepetitionPlan& plan,
                              const RepetitionOptions& opts = {});

}  // namespace cbforge
