#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cbforge/types.hpp"

namespace cbforge {

/// Binary confusion counts with Harm as the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  void add(Label predicted, Label gold);
  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
  bool operator==(const ConfusionMatrix&) const = default;
};

/// (tp + tn) / total. ArithmeticError when total is zero.
double accuracy(const ConfusionMatrix& cm);

/// Unweighted mean of the Harm and NoHarm F1 scores. A class whose
/// precision or recall is undefined (no predictions / no instances) scores
/// F1 = 0. ArithmeticError when total is zero.
double macro_f1(const ConfusionMatrix& cm);

struct Metrics {
  ConfusionMatrix cm;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};
Metrics metrics_from(const ConfusionMatrix& cm);

/// Mean and sample standard deviation (n - 1) of per-seed values.
struct AggregateCell {
  std::string metric;
  double mean = 0.0;
  /// Unavailable for n < 2.
  std::optional<double> std;
  std::size_t n = 0;
};
AggregateCell aggregate(std::string metric, std::span<const double> values);

/// Round half up to one decimal place, as the result tables do.
double round_half_up_1dp(double x);
/// "73.7% ± 2.7" for n >= 2, "73.7%" for a single value.
std::string format_percent_cell(const AggregateCell& cell);

/// Column layout of a result table: key columns (Size, LLM, ...), then one
/// aggregate column per metric, then an optional repetition count.
struct TableLayout {
  std::string title;
  std::vector<std::string> key_columns;
  std::vector<std::string> value_columns;
  bool show_reps = true;

  static TableLayout baseline();        // Size | Sampling
  static TableLayout llm_classifier();  // LLM | Prompt, Dev/Test accuracy only
  static TableLayout fully_synthetic(); // LLM | Size | Sampling
  static TableLayout synthetic_labels();// Labels | Size | Sampling
};

struct TableRow {
  std::vector<std::string> keys;
  std::vector<std::optional<AggregateCell>> values;
  std::optional<std::size_t> reps;
};

struct ResultTable {
  TableLayout layout;
  std::vector<TableRow> rows;
};

/// Aligned plain-text table. Missing cells print as "-".
std::string render_text(const ResultTable& table);
/// Machine-readable CSV: per value column "<name> mean", "<name> std",
/// "<name> n"; numbers at full precision so parse_csv round-trips exactly.
std::string render_csv(const ResultTable& table);
/// Inverse of render_csv; the layout title is not stored and comes back empty.
ResultTable parse_csv(std::string_view csv);

/// CSV field quoting (RFC 4180 style).
std::string csv_escape(std::string_view field);
std::vector<std::vector<std::string>> csv_parse_rows(std::string_view csv);

}  // namespace cbforge
