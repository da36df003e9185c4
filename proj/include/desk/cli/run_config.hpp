#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "desk/error.hpp"
#include "desk/lexicon/lexicon.hpp"
#include "desk/model/config.hpp"
#include "desk/train/config.hpp"
#include "desk/util/strings.hpp"

namespace desk {

enum class DataSource { synthetic, csv };
enum class LexiconFormat { nrc, plain };

inline std::string_view to_string(DataSource s) { return s == DataSource::synthetic ? "synthetic" : "csv"; }
inline std::string_view to_string(LexiconFormat f) { return f == LexiconFormat::nrc ? "nrc" : "plain"; }

inline std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    auto t = detail::trim(item);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

inline std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

/// Where examples come from. Relative paths resolve against the directory
/// of the config file that named them.
struct DataConfig {
  DataSource source = DataSource::synthetic;
  Language language = Language::english;
  std::string sentiment_csv;
  std::string depression_csv;
  std::string depression_test_csv;  // empty: hold out test_fraction of depression_csv
  std::string text_column = "text";
  std::string label_column = "label";
  std::vector<std::string> sentiment_labels{"0", "1"};  // CSV label values, in class-index order
  std::vector<std::string> depression_labels{"0", "1"};
  std::string lexicon_path;  // empty: no marker bits set
  LexiconFormat lexicon_format = LexiconFormat::nrc;
  std::vector<std::string> lexicon_emotions{"sadness", "fear", "disgust", "anger", "negative"};
  std::string embeddings_path;  // empty: random initialisation
  std::size_t min_count = 1;
  std::size_t max_seq_len = kDefaultMaxSeqLen;
  double test_fraction = 0.2;
  // Synthetic source; the generator seed is train.seed.
  std::size_t synth_sentiment_examples = 2000;
  std::size_t synth_depression_examples = 2000;
  std::size_t synth_vocab = 2000;
  double synth_strength = 0.8;
  double synth_planted_fraction = 0.1;
  double synth_lexicon_coverage = 0.5;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

inline KeyValues to_key_values(const DataConfig& d) {
  return {{"source", std::string(to_string(d.source))},
          {"language", std::string(to_string(d.language))},
          {"sentiment_csv", d.sentiment_csv},
          {"depression_csv", d.depression_csv},
          {"depression_test_csv", d.depression_test_csv},
          {"text_column", d.text_column},
          {"label_column", d.label_column},
          {"sentiment_labels", join_list(d.sentiment_labels)},
          {"depression_labels", join_list(d.depression_labels)},
          {"lexicon_path", d.lexicon_path},
          {"lexicon_format", std::string(to_string(d.lexicon_format))},
          {"lexicon_emotions", join_list(d.lexicon_emotions)},
          {"embeddings_path", d.embeddings_path},
          {"min_count", std::to_string(d.min_count)},
          {"max_seq_len", std::to_string(d.max_seq_len)},
          {"test_fraction", format_exact(d.test_fraction)},
          {"synth_sentiment_examples", std::to_string(d.synth_sentiment_examples)},
          {"synth_depression_examples", std::to_string(d.synth_depression_examples)},
          {"synth_vocab", std::to_string(d.synth_vocab)},
          {"synth_strength", format_exact(d.synth_strength)},
          {"synth_planted_fraction", format_exact(d.synth_planted_fraction)},
          {"synth_lexicon_coverage", format_exact(d.synth_lexicon_coverage)}};
}

inline bool set_data_key(DataConfig& d, std::string_view key, std::string_view value) {
  const std::string field = "data." + std::string(key);
  auto size = [&] { return parse_field<std::size_t>(field, value); };
  auto real = [&] { return parse_field<double>(field, value); };
  auto labels = [&] {
    auto v = split_list(value);
    if (v.size() < 2) throw ConfigError(field + " needs at least two comma-separated labels");
    if (std::set<std::string>(v.begin(), v.end()).size() != v.size()) throw ConfigError(field + " repeats a label");
    return v;
  };
  if (key == "source") {
    if (value == "synthetic") d.source = DataSource::synthetic;
    else if (value == "csv") d.source = DataSource::csv;
    else throw ConfigError(field + ": expected synthetic or csv, got '" + std::string(value) + "'");
  } else if (key == "language") {
    d.language = parse_language(value);
  } else if (key == "sentiment_csv") d.sentiment_csv = value;
  else if (key == "depression_csv") d.depression_csv = value;
  else if (key == "depression_test_csv") d.depression_test_csv = value;
  else if (key == "text_column") d.text_column = value;
  else if (key == "label_column") d.label_column = value;
  else if (key == "sentiment_labels") d.sentiment_labels = labels();
  else if (key == "depression_labels") d.depression_labels = labels();
  else if (key == "lexicon_path") d.lexicon_path = value;
  else if (key == "lexicon_format") {
    if (value == "nrc") d.lexicon_format = LexiconFormat::nrc;
    else if (value == "plain") d.lexicon_format = LexiconFormat::plain;
    else throw ConfigError(field + ": expected nrc or plain, got '" + std::string(value) + "'");
  } else if (key == "lexicon_emotions") {
    d.lexicon_emotions = split_list(value);
    for (const auto& e : d.lexicon_emotions) {
      if (!is_nrc_emotion(e)) throw ConfigError(field + ": unknown emotion '" + e + "'");
    }
  } else if (key == "embeddings_path") d.embeddings_path = value;
  else if (key == "min_count") d.min_count = size();
  else if (key == "max_seq_len") d.max_seq_len = size();
  else if (key == "test_fraction") d.test_fraction = real();
  else if (key == "synth_sentiment_examples") d.synth_sentiment_examples = size();
  else if (key == "synth_depression_examples") d.synth_depression_examples = size();
  else if (key == "synth_vocab") d.synth_vocab = size();
  else if (key == "synth_strength") d.synth_strength = real();
  else if (key == "synth_planted_fraction") d.synth_planted_fraction = real();
  else if (key == "synth_lexicon_coverage") d.synth_lexicon_coverage = real();
  else return false;
  return true;
}

/// Everything one command needs. Class counts are not configured directly:
/// they follow from the label lists.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  std::filesystem::path config_dir;  // base for relative data paths; not serialised

  ModelConfig resolved_model() const {
    ModelConfig m = model;
    m.classes_per_task = {data.sentiment_labels.size(), data.depression_labels.size()};
    return m;
  }

  std::string resolve(const std::string& path) const {
    if (path.empty()) return path;
    const std::filesystem::path p(path);
    return p.is_absolute() || config_dir.empty() ? path : (config_dir / p).string();
  }

  /// Field-level checks, including that referenced files exist.
  void validate() const {
    resolved_model().validate();
    train.validate();
    if (data.min_count == 0) throw ConfigError("data.min_count must be at least 1");
    if (!(data.test_fraction > 0.0 && data.test_fraction < 1.0)) throw ConfigError("data.test_fraction must lie in (0, 1)");
    auto require_file = [&](const char* field, const std::string& value, bool required) {
      if (value.empty()) {
        if (required) throw ConfigError(std::string("data.") + field + " is required for source = csv");
        return;
      }
      if (!std::filesystem::is_regular_file(resolve(value))) {
        throw ConfigError(std::string("data.") + field + ": file '" + resolve(value) + "' does not exist");
      }
    };
    if (data.source == DataSource::csv) {
      require_file("sentiment_csv", data.sentiment_csv, train.ratio.sentiment > 0.0);
      require_file("depression_csv", data.depression_csv, true);
      require_file("depression_test_csv", data.depression_test_csv, false);
      require_file("lexicon_path", data.lexicon_path, false);
      require_file("embeddings_path", data.embeddings_path, false);
    } else {
      if (data.synth_sentiment_examples < 2 || data.synth_depression_examples < 2) {
        throw ConfigError("data.synth_*_examples must be at least 2");
      }
      if (data.sentiment_labels.size() != 2 || data.depression_labels.size() != 2) {
        throw ConfigError("synthetic data is binary: data.*_labels must list exactly two labels");
      }
    }
  }

  friend bool operator==(const RunConfig& a, const RunConfig& b) {
    return a.model == b.model && a.train == b.train && a.data == b.data;
  }
};

namespace detail {

inline KeyValues model_file_keys(const ModelConfig& m) {
  KeyValues out;
  for (auto& kv : to_key_values(m)) {
    if (kv.first != "sentiment_classes" && kv.first != "depression_classes") out.push_back(std::move(kv));
  }
  return out;
}

}  // namespace detail

/// Applies `section.key = value`; unknown sections or keys are config errors.
inline void set_run_key(RunConfig& c, std::string_view section, std::string_view key, std::string_view value) {
  bool known = false;
  if (section == "model") {
    if (key == "sentiment_classes" || key == "depression_classes") {
      throw ConfigError("model." + std::string(key) + " is derived from data.*_labels");
    }
    known = set_model_key(c.model, key, value);
  } else if (section == "train") {
    known = set_train_key(c.train, key, value);
  } else if (section == "data") {
    known = set_data_key(c.data, key, value);
  } else {
    throw ConfigError("unknown config section [" + std::string(section) + "]");
  }
  if (!known) throw ConfigError("unknown config key " + std::string(section) + "." + std::string(key));
}

/// Command-line override of the form `section.key=value`.
inline void apply_override(RunConfig& c, std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq) {
    throw ConfigError("override '" + std::string(assignment) + "' must look like section.key=value");
  }
  set_run_key(c, detail::trim(assignment.substr(0, dot)), detail::trim(assignment.substr(dot + 1, eq - dot - 1)),
              detail::trim(assignment.substr(eq + 1)));
}

/// INI-style text: `[section]` headers, `key = value` lines, `#` or `;`
/// comments. A key may appear once per section.
inline RunConfig parse_run_config(std::string_view text, const std::string& source = "<config>") {
  RunConfig c;
  std::string section;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::size_t no = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++no;
    if (!utf8::valid(raw)) throw EncodingError(source + ":" + std::to_string(no) + ": invalid UTF-8");
    const std::string line = detail::trim(detail::strip_cr(std::move(raw)));
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(source, no, "unterminated section header");
      section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
      if (section != "model" && section != "train" && section != "data") {
        throw ParseError(source, no, "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, no, "expected key = value");
    if (section.empty()) throw ParseError(source, no, "key outside of any section");
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    if (!seen.insert(section + "." + key).second) throw ParseError(source, no, "duplicate key " + section + "." + key);
    try {
      set_run_key(c, section, key, detail::trim(std::string_view(line).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ParseError(source, no, e.what());
    }
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  RunConfig c = parse_run_config(text.str(), path);
  c.config_dir = std::filesystem::absolute(path).parent_path();
  return c;
}

inline std::string render_run_config(const RunConfig& c) {
  std::ostringstream out;
  auto section = [&](const char* name, const KeyValues& kvs) {
    out << '[' << name << "]\n";
    for (const auto& [k, v] : kvs) out << k << " = " << v << '\n';
  };
  section("model", detail::model_file_keys(c.model));
  out << '\n';
  section("train", to_key_values(c.train));
  out << '\n';
  section("data", to_key_values(c.data));
  return out.str();
}

}  // namespace desk
