#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "desk/lexicon/lexicon.hpp"
#include "desk/textpipe/utf8.hpp"

namespace desk {

/// Returned alone for text that yields no tokens. Encodes to UNK.
inline constexpr std::string_view kUnknownTextToken = "<unk>";

/// English: lowercase, split on whitespace, strip leading/trailing ASCII
/// punctuation, drop empties. Chinese: one token per code point, whitespace
/// removed.
inline std::vector<std::string> tokenize(std::string_view text, Language lang) {
  std::vector<std::string> tokens;
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  if (lang == Language::english) {
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && is_space(text[i])) ++i;
      std::size_t j = i;
      while (j < text.size() && !is_space(text[j])) ++j;
      std::string_view word = text.substr(i, j - i);
      auto punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
      while (!word.empty() && punct(word.front())) word.remove_prefix(1);
      while (!word.empty() && punct(word.back())) word.remove_suffix(1);
      if (!word.empty()) tokens.push_back(normalize_term(word, lang));
      i = j;
    }
  } else {
    for (auto& cp : utf8::code_points(text)) {
      if (cp.size() == 1 && is_space(cp[0])) continue;
      // U+3000 ideographic space
      if (cp == "\xE3\x80\x80") continue;
      tokens.push_back(std::move(cp));
    }
  }
  if (tokens.empty()) tokens.emplace_back(kUnknownTextToken);
  return tokens;
}

}  // namespace desk
