#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "desk/error.hpp"
#include "desk/textpipe/utf8.hpp"

namespace desk {

enum class Language { english, chinese };

inline std::string_view to_string(Language lang) { return lang == Language::english ? "english" : "chinese"; }

inline Language parse_language(std::string_view name) {
  if (name == "english") return Language::english;
  if (name == "chinese") return Language::chinese;
  throw ConfigError("unknown language '" + std::string(name) + "' (expected english or chinese)");
}

/// Lowercases ASCII letters for English; Chinese terms pass through.
inline std::string normalize_term(std::string_view term, Language lang) {
  std::string out(term);
  if (lang == Language::english) {
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

/// Per-token category fed to the marker embedding.
enum class Marker : std::uint8_t { not_in_lexicon = 0, in_lexicon = 1 };

/// The set of "depressed words" whose presence sets a token's marker bit.
class DepressionLexicon {
 public:
  DepressionLexicon() = default;
  DepressionLexicon(std::set<std::string> terms, Language lang, std::string source)
      : terms_(std::move(terms)), language_(lang), source_name_(std::move(source)) {
    for (const auto& t : terms_) {
      if (t.empty()) throw DataError("lexicon '" + source_name_ + "' contains an empty term");
    }
  }

  bool contains(const std::string& token) const { return terms_.count(token) != 0; }
  std::size_t size() const noexcept { return terms_.size(); }
  bool empty() const noexcept { return terms_.empty(); }
  const std::set<std::string>& terms() const noexcept { return terms_; }
  Language language() const noexcept { return language_; }
  const std::string& source_name() const noexcept { return source_name_; }

  friend bool operator==(const DepressionLexicon& a, const DepressionLexicon& b) {
    return a.terms_ == b.terms_ && a.language_ == b.language_;
  }

 private:
  std::set<std::string> terms_;
  Language language_ = Language::english;
  std::string source_name_;
};

/// The ten affect categories of the NRC Emotion Lexicon word-level file.
inline constexpr std::array<std::string_view, 10> kNrcEmotions = {
    "anger", "anticipation", "disgust", "fear", "joy", "negative", "positive", "sadness", "surprise", "trust"};

inline bool is_nrc_emotion(std::string_view name) {
  return std::find(kNrcEmotions.begin(), kNrcEmotions.end(), name) != kNrcEmotions.end();
}

inline std::set<std::string> default_depression_emotions() {
  return {"sadness", "fear", "disgust", "anger", "negative"};
}

namespace detail {

inline std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file '" + path + "'");
  return in;
}

}  // namespace detail

/// Reads an NRC word-level file (`word<TAB>emotion<TAB>0|1` per line) and
/// keeps every word flagged 1 for at least one selected emotion.
inline DepressionLexicon load_nrc_lexicon(const std::string& path,
                                          const std::set<std::string>& selected_emotions = default_depression_emotions()) {
  for (const auto& e : selected_emotions) {
    if (!is_nrc_emotion(e)) throw ConfigError("unknown NRC emotion '" + e + "'");
  }
  auto in = detail::open_input(path);
  std::set<std::string> terms;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::strip_cr(std::move(line));
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 3) {
      throw ParseError(path, line_no, "expected word<TAB>emotion<TAB>flag, found " + std::to_string(fields.size()) + " fields");
    }
    const std::string word = normalize_term(detail::trim(fields[0]), Language::english);
    const std::string emotion = detail::trim(fields[1]);
    const std::string flag = detail::trim(fields[2]);
    if (word.empty()) throw ParseError(path, line_no, "empty word");
    if (!is_nrc_emotion(emotion)) throw ParseError(path, line_no, "unknown emotion '" + emotion + "'");
    if (flag != "0" && flag != "1") throw ParseError(path, line_no, "flag must be 0 or 1, found '" + flag + "'");
    if (flag == "1" && selected_emotions.count(emotion)) terms.insert(word);
  }
  return DepressionLexicon(std::move(terms), Language::english, path);
}

/// One term per line, UTF-8, `#` lines are comments, blank lines skipped.
inline DepressionLexicon load_plain_lexicon(const std::string& path, Language lang = Language::english) {
  auto in = detail::open_input(path);
  std::set<std::string> terms;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!utf8::valid(line)) throw EncodingError(path + ":" + std::to_string(line_no) + ": invalid UTF-8");
    const std::string term = detail::trim(line);
    if (term.empty() || term.front() == '#') continue;
    terms.insert(normalize_term(term, lang));
  }
  return DepressionLexicon(std::move(terms), lang, path);
}

/// Position i is in_lexicon iff tokens[i] is a lexicon term.
inline std::vector<Marker> mark_tokens(const DepressionLexicon& lexicon, std::span<const std::string> tokens) {
  std::vector<Marker> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(lexicon.contains(t) ? Marker::in_lexicon : Marker::not_in_lexicon);
  return out;
}

}  // namespace desk
