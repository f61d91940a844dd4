#include "cbforge/evaluator.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cbforge/errors.hpp"

namespace cbforge {

void ConfusionMatrix::add(Label predicted, Label gold) {
  if (gold == Label::Harm) {
    (predicted == Label::Harm ? tp : fn) += 1;
  } else {
    (predicted == Label::Harm ? fp : tn) += 1;
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  tn += o.tn;
  return *this;
}

double accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ArithmeticError("accuracy of an empty confusion matrix");
  return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

namespace {

// F1 = 2TP / (2TP + FP + FN); zero when the class was never predicted or
// never present, matching F1 = 2PR/(P+R) with undefined P or R taken as 0.
double class_f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

}  // namespace

double macro_f1(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ArithmeticError("macro-F1 of an empty confusion matrix");
  const double harm = class_f1(cm.tp, cm.fp, cm.fn);
  const double no_harm = class_f1(cm.tn, cm.fn, cm.fp);
  return 0.5 * (harm + no_harm);
}

Metrics metrics_from(const ConfusionMatrix& cm) {
  return Metrics{cm, accuracy(cm), macro_f1(cm)};
}

AggregateCell aggregate(std::string metric, std::span<const double> values) {
  if (values.empty()) throw ArithmeticError("aggregate of zero values");
  AggregateCell cell;
  cell.metric = std::move(metric);
  cell.n = values.size();
  // Sort first so the result does not depend on the order seeds finished.
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  cell.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  if (v.size() >= 2) {
    double ss = 0.0;
    for (double x : v) ss += (x - cell.mean) * (x - cell.mean);
    cell.std = std::sqrt(ss / (n - 1.0));
  }
  return cell;
}

double round_half_up_1dp(double x) {
  // The epsilon absorbs binary representation error such as 73.65 -> 73.6499...
  return std::floor(x * 10.0 + 0.5 + 1e-9) / 10.0;
}

std::string format_percent_cell(const AggregateCell& cell) {
  const std::string mean = fmt::format("{:.1f}%", round_half_up_1dp(cell.mean * 100.0));
  if (cell.n < 2 || !cell.std) return mean;
  return fmt::format("{} ± {:.1f}", mean, round_half_up_1dp(*cell.std * 100.0));
}

TableLayout TableLayout::baseline() {
  return {"Authentic gold-labelled training data",
          {"Size", "Sampling"},
          {"Dev Accuracy", "Dev Macro-F1", "Test Accuracy", "Test Macro-F1"},
          true};
}

TableLayout TableLayout::llm_classifier() {
  return {"LLM used directly as classifier", {"LLM", "Prompt"}, {"Dev Accuracy", "Test Accuracy"},
          false};
}

TableLayout TableLayout::fully_synthetic() {
  return {"Fully synthetic training data",
          {"LLM", "Size", "Sampling"},
          {"Dev Accuracy", "Dev Macro-F1", "Test Accuracy", "Test Macro-F1"},
          true};
}

TableLayout TableLayout::synthetic_labels() {
  return {"Authentic training data with LLM labels",
          {"Labels", "Size", "Sampling"},
          {"Dev Accuracy", "Dev Macro-F1", "Test Accuracy", "Test Macro-F1"},
          true};
}

std::string render_text(const ResultTable& table) {
  const auto& lay = table.layout;
  std::vector<std::string> header = lay.key_columns;
  header.insert(header.end(), lay.value_columns.begin(), lay.value_columns.end());
  if (lay.show_reps) header.push_back("Rep.");

  std::vector<std::vector<std::string>> body;
  for (const auto& row : table.rows) {
    std::vector<std::string> line = row.keys;
    line.resize(lay.key_columns.size());
    for (std::size_t i = 0; i < lay.value_columns.size(); ++i) {
      const auto& v = i < row.values.size() ? row.values[i] : std::nullopt;
      line.push_back(v ? format_percent_cell(*v) : "-");
    }
    if (lay.show_reps) line.push_back(row.reps ? std::to_string(*row.reps) : "-");
    body.push_back(std::move(line));
  }

  // Width in code points so "±" does not skew alignment.
  auto width = [](const std::string& s) {
    return static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
  };
  std::vector<std::size_t> w(header.size(), 0);
  for (std::size_t c = 0; c < header.size(); ++c) {
    w[c] = width(header[c]);
    for (const auto& line : body) w[c] = std::max(w[c], width(line[c]));
  }
  auto emit = [&](const std::vector<std::string>& cells, std::string& out) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out += "  ";
      const std::size_t pad = w[c] - width(cells[c]);
      // Key columns left-aligned, numbers right-aligned.
      if (c < lay.key_columns.size()) {
        out += cells[c];
        if (c + 1 < cells.size()) out.append(pad, ' ');
      } else {
        out.append(pad, ' ');
        out += cells[c];
      }
    }
    out += '\n';
  };

  std::string out;
  if (!lay.title.empty()) out += lay.title + '\n';
  emit(header, out);
  std::size_t total = 0;
  for (std::size_t c = 0; c < w.size(); ++c) total += w[c] + (c ? 2 : 0);
  out.append(total, '-');
  out += '\n';
  for (const auto& line : body) emit(line, out);
  return out;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::vector<std::string>> csv_parse_rows(std::string_view csv) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < csv.size(); ++i) {
    const char c = csv[i];
    any = true;
    if (quoted) {
      if (c == '"') {
        if (i + 1 < csv.size() && csv[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < csv.size() && csv[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw ParseError("unterminated quoted CSV field");
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string render_csv(const ResultTable& table) {
  const auto& lay = table.layout;
  std::vector<std::string> header = lay.key_columns;
  for (const auto& v : lay.value_columns) {
    header.push_back(v + " mean");
    header.push_back(v + " std");
    header.push_back(v + " n");
  }
  if (lay.show_reps) header.push_back("Rep.");

  std::string out;
  auto emit = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += csv_escape(cells[i]);
    }
    out += '\n';
  };
  emit(header);
  for (const auto& row : table.rows) {
    std::vector<std::string> cells = row.keys;
    cells.resize(lay.key_columns.size());
    for (std::size_t i = 0; i < lay.value_columns.size(); ++i) {
      const auto& v = i < row.values.size() ? row.values[i] : std::nullopt;
      if (v) {
        cells.push_back(fmt::format("{:.17g}", v->mean));
        cells.push_back(v->std ? fmt::format("{:.17g}", *v->std) : "");
        cells.push_back(std::to_string(v->n));
      } else {
        cells.insert(cells.end(), {"", "", ""});
      }
    }
    if (lay.show_reps) cells.push_back(row.reps ? std::to_string(*row.reps) : "");
    emit(cells);
  }
  return out;
}

ResultTable parse_csv(std::string_view csv) {
  const auto rows = csv_parse_rows(csv);
  if (rows.empty()) throw ParseError("empty CSV table");
  const auto& header = rows.front();
  ResultTable t;
  std::size_t c = 0;
  while (c < header.size() && !header[c].ends_with(" mean") && header[c] != "Rep.") {
    t.layout.key_columns.push_back(header[c++]);
  }
  while (c + 2 < header.size() && header[c].ends_with(" mean")) {
    t.layout.value_columns.push_back(header[c].substr(0, header[c].size() - 5));
    c += 3;
  }
  t.layout.show_reps = c < header.size() && header[c] == "Rep.";

  auto to_double = [](const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ParseError(fmt::format("bad number '{}' in CSV", s));
    return v;
  };
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    if (cells.size() != header.size()) {
      throw ParseError(fmt::format("CSV row {} has {} fields, expected {}", r + 1, cells.size(),
                                   header.size()));
    }
    TableRow row;
    std::size_t k = 0;
    for (; k < t.layout.key_columns.size(); ++k) row.keys.push_back(cells[k]);
    for (const auto& name : t.layout.value_columns) {
      if (cells[k].empty()) {
        row.values.emplace_back();
      } else {
        AggregateCell cell;
        cell.metric = name;
        cell.mean = to_double(cells[k]);
        if (!cells[k + 1].empty()) cell.std = to_double(cells[k + 1]);
        cell.n = static_cast<std::size_t>(std::stoull(cells[k + 2]));
        row.values.emplace_back(std::move(cell));
      }
      k += 3;
    }
    if (t.layout.show_reps && !cells[k].empty()) row.reps = std::stoull(cells[k]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace cbforge
