#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "desk/error.hpp"
#include "desk/lexicon/lexicon.hpp"
#include "desk/textpipe/csv.hpp"
#include "desk/textpipe/tokenize.hpp"
#include "desk/textpipe/vocab.hpp"

namespace desk {

enum class Task : std::size_t { sentiment = 0, depression = 1 };
inline constexpr std::size_t kNumTasks = 2;

inline std::string_view to_string(Task t) { return t == Task::sentiment ? "sentiment" : "depression"; }

inline Task parse_task(std::string_view name) {
  if (name == "sentiment") return Task::sentiment;
  if (name == "depression") return Task::depression;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected sentiment or depression)");
}

inline constexpr std::size_t kDefaultMaxSeqLen = 128;

struct Example {
  std::vector<std::size_t> ids;
  std::vector<Marker> markers;
  std::size_t label = 0;
};

/// Labeled examples of one task. Invariants are checked by validate().
struct TaskDataset {
  Task task = Task::depression;
  std::vector<Example> examples;
  std::size_t num_classes = 2;

  std::size_t size() const noexcept { return examples.size(); }
  bool empty() const noexcept { return examples.empty(); }

  void validate() const {
    if (num_classes < 1) throw DataError("dataset needs at least one class");
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const auto& ex = examples[i];
      if (ex.ids.empty() || ex.ids.size() != ex.markers.size()) {
        throw DataError(std::string(to_string(task)) + " example " + std::to_string(i) +
                        ": token and marker lengths must match and be non-zero");
      }
      if (ex.label >= num_classes) {
        throw DataError(std::string(to_string(task)) + " example " + std::to_string(i) + ": label " +
                        std::to_string(ex.label) + " outside " + std::to_string(num_classes) + " classes");
      }
    }
  }

  std::vector<std::size_t> labels() const {
    std::vector<std::size_t> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(ex.label);
    return out;
  }

  /// Copy with every marker forced to not_in_lexicon.
  TaskDataset without_markers() const {
    TaskDataset out = *this;
    for (auto& ex : out.examples) std::fill(ex.markers.begin(), ex.markers.end(), Marker::not_in_lexicon);
    return out;
  }
};

struct CsvSchema {
  std::string text_column = "text";
  std::string label_column = "label";
};

using LabelMap = std::map<std::string, std::size_t>;

inline std::size_t label_map_classes(const LabelMap& labels) {
  std::size_t top = 0;
  for (const auto& [name, id] : labels) top = std::max(top, id + 1);
  return top;
}

/// tokenize -> truncate -> vocabulary ids (UNK for unknown) -> marker bits.
inline Example encode_text(std::string_view text, const Vocabulary& vocab, const DepressionLexicon& lexicon,
                           Language lang, std::size_t max_len = kDefaultMaxSeqLen) {
  auto tokens = tokenize(text, lang);
  if (max_len > 0 && tokens.size() > max_len) tokens.resize(max_len);
  Example ex;
  ex.ids = vocab.encode(tokens);
  ex.markers = mark_tokens(lexicon, tokens);
  return ex;
}

struct LabeledText {
  std::string text;
  std::string label;
  std::size_t line = 0;
};

/// Reads (text, label) columns from a CSV file with a header row.
inline std::vector<LabeledText> read_labeled_csv(const std::string& path, const CsvSchema& schema) {
  const auto records = read_csv_file(path);
  if (records.empty()) throw SchemaError(path + ": missing header row");
  const auto& header = records.front().fields;
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError(path + ": no column named '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t text_col = column(schema.text_column);
  const std::size_t label_col = column(schema.label_column);
  std::vector<LabeledText> rows;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.fields.size() != header.size()) {
      throw ParseError(path, rec.line, "row has " + std::to_string(rec.fields.size()) + " fields, header has " +
                                           std::to_string(header.size()));
    }
    rows.push_back({rec.fields[text_col], detail::trim(rec.fields[label_col]), rec.line});
  }
  return rows;
}

/// Encodes CSV rows of one task; unknown labels are data errors naming the
/// row and line of `source`.
inline TaskDataset encode_rows(std::span<const LabeledText> rows, Task task, const LabelMap& label_map,
                               const DepressionLexicon& lexicon, const Vocabulary& vocab, Language lang,
                               std::size_t max_len, const std::string& source) {
  if (label_map.empty()) throw ConfigError("label map for " + std::string(to_string(task)) + " is empty");
  TaskDataset ds;
  ds.task = task;
  ds.num_classes = label_map_classes(label_map);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto it = label_map.find(rows[r].label);
    if (it == label_map.end()) {
      throw DataError(source + ": row " + std::to_string(r + 1) + " (line " + std::to_string(rows[r].line) +
                      ") has unknown label '" + rows[r].label + "'");
    }
    Example ex = encode_text(rows[r].text, vocab, lexicon, lang, max_len);
    ex.label = it->second;
    ds.examples.push_back(std::move(ex));
  }
  ds.validate();
  return ds;
}

inline TaskDataset load_csv_dataset(const std::string& path, Task task, const CsvSchema& schema,
                                    const LabelMap& label_map, const DepressionLexicon& lexicon,
                                    const Vocabulary& vocab, Language lang,
                                    std::size_t max_len = kDefaultMaxSeqLen) {
  if (label_map.empty()) throw ConfigError("label map for " + std::string(to_string(task)) + " is empty");
  const auto rows = read_labeled_csv(path, schema);
  return encode_rows(rows, task, label_map, lexicon, vocab, lang, max_len, path);
}

}  // namespace desk
