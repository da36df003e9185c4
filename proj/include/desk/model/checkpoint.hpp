#pragma once

#include <array>
#include <cstddef>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "desk/error.hpp"
#include "desk/lexicon/lexicon.hpp"
#include "desk/model/config.hpp"
#include "desk/model/desk_model.hpp"
#include "desk/textpipe/dataset.hpp"
#include "desk/textpipe/vocab.hpp"
#include "desk/util/strings.hpp"

namespace desk {

/// Everything besides the weights needed to turn raw text into model input.
struct PipelineMeta {
  Language language = Language::english;
  std::size_t max_seq_len = kDefaultMaxSeqLen;
  CsvSchema schema;
  std::array<LabelMap, kNumTasks> labels;
  Vocabulary vocab;
  DepressionLexicon lexicon;
  bool markers_enabled = true;  // false: every token is marked not_in_lexicon

  Example encode(std::string_view text) const {
    Example ex = encode_text(text, vocab, markers_enabled ? lexicon : DepressionLexicon{}, language, max_seq_len);
    return ex;
  }

  /// Label name for a class index; the index itself when unnamed.
  std::string label_name(Task task, std::size_t id) const {
    for (const auto& [name, value] : labels[static_cast<std::size_t>(task)]) {
      if (value == id) return name;
    }
    return std::to_string(id);
  }
};

template <typename T>
struct Checkpoint {
  DeskModel<T> model;
  PipelineMeta meta;
};

inline constexpr std::string_view kCheckpointMagic = "desk-checkpoint v1";

namespace detail {

inline std::string escape_line(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default: out.push_back(c);
    }
  }
  if (!out.empty() && out.front() == '[') out.insert(out.begin(), '\\');
  return out;
}

inline std::string unescape_line(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out.push_back(s[i]);
      continue;
    }
    const char n = s[++i];
    out.push_back(n == 'n' ? '\n' : n == 'r' ? '\r' : n == 't' ? '\t' : n);
  }
  return out;
}

inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace detail

/// Sectioned text container. Values use the shortest round-trip decimal
/// form, so a reload reproduces every parameter bit for bit.
template <typename T>
void save_checkpoint(const std::string& path, const DeskModel<T>& model, const PipelineMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  out << kCheckpointMagic << '\n';
  out << "[model]\n";
  for (const auto& [k, v] : to_key_values(model.config())) out << k << " = " << v << '\n';
  out << "[pipeline]\n";
  out << "language = " << to_string(meta.language) << '\n';
  out << "max_seq_len = " << meta.max_seq_len << '\n';
  out << "text_column = " << detail::escape_line(meta.schema.text_column) << '\n';
  out << "label_column = " << detail::escape_line(meta.schema.label_column) << '\n';
  out << "markers_enabled = " << (meta.markers_enabled ? "true" : "false") << '\n';
  for (std::size_t k = 0; k < kNumTasks; ++k) {
    out << "[labels " << to_string(static_cast<Task>(k)) << "]\n";
    for (const auto& [name, id] : meta.labels[k]) out << id << '\t' << detail::escape_line(name) << '\n';
  }
  out << "[vocab " << meta.vocab.size() << "]\n";
  for (const auto& tok : meta.vocab.tokens()) out << detail::escape_line(tok) << '\n';
  out << "[lexicon " << meta.lexicon.size() << "]\n";
  for (const auto& term : meta.lexicon.terms()) out << detail::escape_line(term) << '\n';
  for (const auto& p : model.parameters()) {
    const auto& t = *p.value;
    out << "[tensor " << p.name;
    for (auto d : t.shape) out << ' ' << d;
    out << "]\n";
    const std::size_t width = t.last_dim();
    for (std::size_t i = 0; i < t.size(); ++i) {
      out << format_exact(t.data[i]) << ((i + 1) % width == 0 ? '\n' : ' ');
    }
  }
  out << "[end]\n";
  if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));
  if (lines.empty() || lines[0] != kCheckpointMagic) throw ParseError(path, 1, "not a desk checkpoint");

  ModelConfig config;
  PipelineMeta meta;
  std::map<std::string, std::pair<Shape, std::vector<T>>> tensors;
  std::vector<std::string> vocab_tokens;
  std::set<std::string> lexicon_terms;
  bool ended = false;

  std::size_t i = 1;
  auto section_body = [&](auto&& on_line) {
    while (i < lines.size() && !(lines[i].size() > 1 && lines[i].front() == '[')) {
      on_line(lines[i], i + 1);
      ++i;
    }
  };
  auto key_value = [&](const std::string& line, std::size_t no) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw ParseError(path, no, "expected 'key = value'");
    return std::pair{line.substr(0, eq), line.substr(eq + 3)};
  };

  while (i < lines.size() && !ended) {
    const std::string header = lines[i];
    const std::size_t header_no = i + 1;
    if (header.size() < 2 || header.front() != '[' || header.back() != ']') {
      throw ParseError(path, header_no, "expected a section header");
    }
    const auto words = detail::split_words(std::string_view(header).substr(1, header.size() - 2));
    ++i;
    if (words.empty()) throw ParseError(path, header_no, "empty section header");
    const std::string& kind = words[0];
    if (kind == "end") {
      ended = true;
    } else if (kind == "model") {
      section_body([&](const std::string& line, std::size_t no) {
        auto [k, v] = key_value(line, no);
        if (!set_model_key(config, k, v)) throw ParseError(path, no, "unknown model key '" + k + "'");
      });
    } else if (kind == "pipeline") {
      section_body([&](const std::string& line, std::size_t no) {
        auto [k, v] = key_value(line, no);
        if (k == "language") meta.language = parse_language(v);
        else if (k == "max_seq_len") meta.max_seq_len = parse_field<std::size_t>(k, v);
        else if (k == "text_column") meta.schema.text_column = detail::unescape_line(v);
        else if (k == "label_column") meta.schema.label_column = detail::unescape_line(v);
        else if (k == "markers_enabled") meta.markers_enabled = parse_bool_field(k, v);
        else throw ParseError(path, no, "unknown pipeline key '" + k + "'");
      });
    } else if (kind == "labels" && words.size() == 2) {
      auto& map = meta.labels[static_cast<std::size_t>(parse_task(words[1]))];
      section_body([&](const std::string& line, std::size_t no) {
        const auto tab = line.find('\t');
        std::size_t id = 0;
        if (tab == std::string::npos || !parse_number(std::string_view(line).substr(0, tab), id)) {
          throw ParseError(path, no, "expected 'id<TAB>name'");
        }
        map[detail::unescape_line(line.substr(tab + 1))] = id;
      });
    } else if (kind == "vocab") {
      section_body([&](const std::string& line, std::size_t) { vocab_tokens.push_back(detail::unescape_line(line)); });
    } else if (kind == "lexicon") {
      section_body([&](const std::string& line, std::size_t) { lexicon_terms.insert(detail::unescape_line(line)); });
    } else if (kind == "tensor" && words.size() >= 3) {
      Shape shape;
      for (std::size_t w = 2; w < words.size(); ++w) shape.push_back(parse_field<std::size_t>("tensor shape", words[w]));
      std::vector<T> values;
      values.reserve(shape_size(shape));
      section_body([&](const std::string& line, std::size_t no) {
        for (const auto& w : detail::split_words(line)) {
          T v{};
          if (!parse_number(w, v)) throw ParseError(path, no, "bad tensor value '" + w + "'");
          values.push_back(v);
        }
      });
      if (values.size() != shape_size(shape)) {
        throw ParseError(path, header_no, "tensor " + words[1] + " holds " + std::to_string(values.size()) +
                                              " values, shape " + shape_string(shape) + " needs " +
                                              std::to_string(shape_size(shape)));
      }
      tensors[words[1]] = {std::move(shape), std::move(values)};
    } else {
      throw ParseError(path, header_no, "unknown section '" + header + "'");
    }
  }
  if (!ended) throw ParseError(path, lines.size(), "checkpoint is truncated (no [end])");

  if (vocab_tokens.size() < 2 || vocab_tokens[0] != Vocabulary::kPadToken || vocab_tokens[1] != kUnknownTextToken) {
    throw ConfigError("checkpoint '" + path + "': vocabulary lacks the reserved PAD/UNK entries");
  }
  for (std::size_t t = 2; t < vocab_tokens.size(); ++t) meta.vocab.add(vocab_tokens[t]);
  meta.lexicon = DepressionLexicon(std::move(lexicon_terms), meta.language, path);

  auto found = tensors.find("embedding");
  if (found == tensors.end()) throw ConfigError("checkpoint '" + path + "': no embedding tensor");
  auto emb = make_var<T>(found->second.first, found->second.second, true);
  if (emb->rank() != 2 || emb->dim(0) != meta.vocab.size()) {
    throw ConfigError("checkpoint '" + path + "': embedding rows do not match the vocabulary");
  }
  Rng scratch(0);
  Checkpoint<T> ckpt{DeskModel<T>(config, EmbeddingTable<T>{emb, emb->dim(1)}, scratch), std::move(meta)};
  std::vector<std::vector<T>> values;
  for (const auto& p : ckpt.model.parameters()) {
    auto it = tensors.find(p.name);
    if (it == tensors.end()) throw ConfigError("checkpoint '" + path + "': missing tensor " + p.name);
    if (it->second.first != p.value->shape) {
      throw ConfigError("checkpoint '" + path + "': tensor " + p.name + " has shape " +
                        shape_string(it->second.first) + ", model expects " + shape_string(p.value->shape));
    }
    values.push_back(it->second.second);
  }
  if (tensors.size() != values.size()) throw ConfigError("checkpoint '" + path + "': unexpected extra tensors");
  ckpt.model.restore(values);
  return ckpt;
}

}  // namespace desk
