#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "desk/error.hpp"
#include "desk/eval/metrics.hpp"
#include "desk/model/desk_model.hpp"
#include "desk/util/strings.hpp"

namespace desk {

/// Predicts every example in dataset order (eval mode) and scores the result
/// against the task's configured class count.
template <typename T>
MetricsReport evaluate(const DeskModel<T>& model, const TaskDataset& data, Task task, std::size_t batch_size = 512) {
  if (data.examples.empty()) throw UsageError("evaluate: empty " + std::string(to_string(task)) + " dataset");
  if (batch_size == 0) throw UsageError("evaluate: batch_size must be positive");
  std::vector<std::size_t> preds;
  preds.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    for (auto p : predict(model, make_batch(data, idx), task)) preds.push_back(p);
  }
  return metrics(preds, data.labels(), model.config().classes(task));
}

/// One `key=value` line per field; values print in shortest round-trip form.
inline std::string render_record(const MetricsReport& r) {
  std::ostringstream out;
  out << "accuracy=" << format_exact(r.accuracy) << '\n';
  out << "macro_f1=" << format_exact(r.macro_f1) << '\n';
  out << "examples=" << r.confusion.total() << '\n';
  out << "classes=" << r.num_classes() << '\n';
  for (std::size_t c = 0; c < r.num_classes(); ++c) {
    out << "class" << c << ".precision=" << format_exact(r.precision[c]) << '\n';
    out << "class" << c << ".recall=" << format_exact(r.recall[c]) << '\n';
    out << "class" << c << ".f1=" << format_exact(r.f1[c]) << '\n';
  }
  for (std::size_t t = 0; t < r.num_classes(); ++t) {
    out << "confusion.row" << t << '=';
    for (std::size_t p = 0; p < r.num_classes(); ++p) out << (p ? " " : "") << r.confusion.at(t, p);
    out << '\n';
  }
  return out.str();
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
inline std::map<std::string, std::string> parse_record(std::string_view text) {
  std::map<std::string, std::string> out;
  std::istringstream in{std::string(text)};
  std::size_t no = 0;
  for (std::string line; std::getline(in, line);) {
    ++no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) throw ParseError("record", no, "expected key=value");
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

struct ScoreRow {
  std::string name;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

/// Aligned text table with columns (label, Accuracy, Macro F1).
inline std::string render_table(std::string_view label_header, const std::vector<ScoreRow>& rows) {
  std::vector<std::vector<std::string>> cells{{std::string(label_header), "Accuracy", "Macro F1"}};
  for (const auto& r : rows) cells.push_back({r.name, format_fixed(r.accuracy, 4), format_fixed(r.macro_f1, 4)});
  std::vector<std::size_t> width(3, 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < 3; ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  for (const auto& row : cells) {
    out << row[0] << std::string(width[0] - row[0].size(), ' ');
    for (std::size_t c = 1; c < 3; ++c) out << "  " << std::string(width[c] - row[c].size(), ' ') << row[c];
    out << '\n';
  }
  return out.str();
}

}  // namespace desk
