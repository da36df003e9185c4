#pragma once

#include <charconv>
#include <cstddef>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "desk/error.hpp"
#include "desk/numcore/rng.hpp"
#include "desk/numcore/tensor.hpp"
#include "desk/textpipe/vocab.hpp"

namespace desk {

/// Word-vector matrix [vocab_size x word_dim]. Row Vocabulary::kPad is zero
/// and never updated.
template <typename T>
struct EmbeddingTable {
  Var<T> matrix;
  std::size_t word_dim = 0;

  std::size_t rows() const { return matrix->dim(0); }
};

inline constexpr double kOovInitRange = 0.05;

/// Every row uniform in [-0.05, 0.05] except the zero PAD row.
template <typename T>
EmbeddingTable<T> random_embeddings(std::size_t vocab_size, std::size_t dim, Rng& rng) {
  if (vocab_size < 2 || dim == 0) throw ConfigError("embedding table needs at least 2 rows and a positive width");
  auto m = zeros_var<T>({vocab_size, dim}, true);
  for (std::size_t r = 1; r < vocab_size; ++r) {
    for (std::size_t c = 0; c < dim; ++c) m->at(r, c) = static_cast<T>(rng.uniform(-kOovInitRange, kOovInitRange));
  }
  return {m, dim};
}

/// GloVe text format, `token v1 ... v_dim` per line. Rows of vocabulary
/// tokens found in the file are copied; the others keep the random
/// initialisation drawn from `rng` (drawn before reading, so the stream is
/// independent of file contents).
template <typename T>
EmbeddingTable<T> load_glove(const std::string& path, const Vocabulary& vocab, std::size_t dim, Rng& rng) {
  auto table = random_embeddings<T>(vocab.size(), dim, rng);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open embeddings file '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  std::vector<T> values;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto space = line.find(' ');
    if (space == std::string::npos) throw ParseError(path, line_no, "expected a token followed by " + std::to_string(dim) + " values");
    const std::string token = line.substr(0, space);
    values.clear();
    std::string_view rest(line);
    rest.remove_prefix(space + 1);
    while (!rest.empty()) {
      while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
      if (rest.empty()) break;
      const auto end = rest.find(' ');
      const std::string_view piece = rest.substr(0, end);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), v);
      if (ec != std::errc() || ptr != piece.data() + piece.size()) {
        throw ParseError(path, line_no, "bad number '" + std::string(piece) + "'");
      }
      values.push_back(static_cast<T>(v));
      rest.remove_prefix(end == std::string_view::npos ? rest.size() : end);
    }
    if (values.size() != dim) {
      throw ParseError(path, line_no, "expected " + std::to_string(dim) + " values, found " + std::to_string(values.size()));
    }
    if (!vocab.contains(token)) continue;
    const std::size_t row = vocab.id(token);
    if (row == Vocabulary::kPad) continue;
    for (std::size_t c = 0; c < dim; ++c) table.matrix->at(row, c) = values[c];
  }
  return table;
}

}  // namespace desk
