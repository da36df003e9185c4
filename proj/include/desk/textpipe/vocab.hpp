#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "desk/error.hpp"
#include "desk/textpipe/tokenize.hpp"

namespace desk {

/// Token <-> id map with PAD = 0 and UNK = 1 reserved.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";

  Vocabulary() : id_to_token_{std::string(kPadToken), std::string(kUnknownTextToken)} {
    token_to_id_.emplace(id_to_token_[0], kPad);
    token_to_id_.emplace(id_to_token_[1], kUnk);
  }

  /// Adds `token` if absent; returns its id either way.
  std::size_t add(const std::string& token) {
    auto [it, inserted] = token_to_id_.emplace(token, id_to_token_.size());
    if (inserted) id_to_token_.push_back(token);
    return it->second;
  }

  std::size_t id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return token_to_id_.count(token) != 0; }
  const std::string& token(std::size_t id) const { return id_to_token_.at(id); }
  std::size_t size() const noexcept { return id_to_token_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return id_to_token_; }

  std::vector<std::size_t> encode(std::span<const std::string> tokens) const {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.id_to_token_ == b.id_to_token_; }

 private:
  std::unordered_map<std::string, std::size_t> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// One shared vocabulary over every corpus: tokens whose total frequency is
/// at least `min_count`, ordered by descending frequency then bytewise.
inline Vocabulary build_vocab(std::span<const std::vector<std::string>> corpora, std::size_t min_count, Language lang) {
  if (min_count < 1) throw UsageError("build_vocab: min_count must be at least 1");
  std::size_t texts = 0;
  std::map<std::string, std::size_t> counts;
  for (const auto& corpus : corpora) {
    for (const auto& text : corpus) {
      ++texts;
      for (auto& tok : tokenize(text, lang)) ++counts[tok];
    }
  }
  if (texts == 0) throw UsageError("build_vocab: empty corpus");
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_count && tok != kUnknownTextToken && tok != Vocabulary::kPadToken) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (const auto& [tok, n] : kept) vocab.add(tok);
  return vocab;
}

}  // namespace desk
