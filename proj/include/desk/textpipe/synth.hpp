#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "desk/error.hpp"
#include "desk/lexicon/lexicon.hpp"
#include "desk/numcore/rng.hpp"
#include "desk/textpipe/dataset.hpp"
#include "desk/textpipe/vocab.hpp"

namespace desk {

/// Knobs of the synthetic two-task generator.
///
/// Each example first draws a hidden negative state z ~ Bernoulli(0.5).
/// Texts with z = 1 contain between 1 and `max_planted` planted tokens;
/// texts with z = 0 contain none. The label equals z with probability
/// `strength` and 1 - z otherwise, independently for both tasks, so
/// P(label = 1 | planted token present) = strength.
struct SynthSignal {
  double strength = 1.0;
  double planted_fraction = 0.1;  // share of the word vocabulary that is planted
  double lexicon_coverage = 1.0;  // share of planted tokens listed in the returned lexicon
  std::size_t min_len = 4;
  std::size_t max_len = 10;
  std::size_t max_planted = 2;

  void validate() const {
    if (!(strength >= 0.0 && strength <= 1.0)) throw ConfigError("synthetic strength must lie in [0, 1]");
    if (!(planted_fraction > 0.0 && planted_fraction < 1.0)) throw ConfigError("planted_fraction must lie in (0, 1)");
    if (!(lexicon_coverage >= 0.0 && lexicon_coverage <= 1.0)) throw ConfigError("lexicon_coverage must lie in [0, 1]");
    if (min_len < 1 || max_len < min_len) throw ConfigError("synthetic lengths need 1 <= min_len <= max_len");
    if (max_planted < 1 || max_planted > min_len) throw ConfigError("max_planted must lie in [1, min_len]");
  }
};

struct SynthBundle {
  Vocabulary vocab;
  TaskDataset sentiment;
  TaskDataset depression;
  DepressionLexicon lexicon;
  std::vector<std::string> sentiment_texts;
  std::vector<std::string> depression_texts;
  std::set<std::string> planted;  // every planted token, listed in the lexicon or not
};

inline std::string synth_token(std::size_t i) { return "w" + std::to_string(i); }

/// Two correlated binary tasks over a vocabulary of `vocab_size` words
/// "w0" .. "w<vocab_size-1>". Deterministic in `seed`.
inline SynthBundle synth_generate(std::uint64_t seed, std::size_t n_sentiment, std::size_t n_depression,
                                  std::size_t vocab_size, const SynthSignal& signal) {
  if (n_sentiment < 2 || n_depression < 2) throw ConfigError("synth_generate: each task needs at least 2 examples");
  if (vocab_size < 10) throw ConfigError("synth_generate: vocab_size must be at least 10");
  signal.validate();
  Rng rng(seed);

  SynthBundle out;
  std::vector<std::size_t> order(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) {
    order[i] = i;
    out.vocab.add(synth_token(i));
  }
  rng.shuffle(order);
  const auto n_planted = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(signal.planted_fraction * static_cast<double>(vocab_size))), 1,
      vocab_size - 1);
  const std::vector<std::size_t> planted(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_planted));
  const std::vector<std::size_t> neutral(order.begin() + static_cast<std::ptrdiff_t>(n_planted), order.end());

  const auto n_listed = static_cast<std::size_t>(std::llround(signal.lexicon_coverage * static_cast<double>(n_planted)));
  std::set<std::string> listed;
  for (std::size_t i = 0; i < n_planted; ++i) {
    out.planted.insert(synth_token(planted[i]));
    if (i < n_listed) listed.insert(synth_token(planted[i]));
  }
  out.lexicon = DepressionLexicon(std::move(listed), Language::english, "synthetic");

  auto make_task = [&](Task task, std::size_t n_examples, std::vector<std::string>& texts) {
    TaskDataset ds;
    ds.task = task;
    ds.num_classes = 2;
    for (std::size_t n = 0; n < n_examples; ++n) {
      const std::size_t len = signal.min_len + rng.below(signal.max_len - signal.min_len + 1);
      const bool negative = rng.bernoulli(0.5);
      std::vector<std::size_t> words(len);
      for (auto& w : words) w = neutral[rng.below(neutral.size())];
      if (negative) {
        const std::size_t k = 1 + rng.below(signal.max_planted);
        std::vector<std::size_t> slots(len);
        for (std::size_t i = 0; i < len; ++i) slots[i] = i;
        rng.shuffle(slots);
        for (std::size_t i = 0; i < k; ++i) words[slots[i]] = planted[rng.below(planted.size())];
      }
      const bool keep = rng.bernoulli(signal.strength);
      Example ex;
      ex.label = (negative == keep) ? 1 : 0;
      std::string text;
      std::vector<std::string> tokens;
      for (std::size_t w : words) {
        tokens.push_back(synth_token(w));
        if (!text.empty()) text.push_back(' ');
        text += tokens.back();
      }
      ex.ids = out.vocab.encode(tokens);
      ex.markers = mark_tokens(out.lexicon, tokens);
      ds.examples.push_back(std::move(ex));
      texts.push_back(std::move(text));
    }
    ds.validate();
    return ds;
  };
  out.sentiment = make_task(Task::sentiment, n_sentiment, out.sentiment_texts);
  out.depression = make_task(Task::depression, n_depression, out.depression_texts);
  return out;
}

inline SynthBundle synth_generate(std::uint64_t seed, std::size_t n_per_task, std::size_t vocab_size,
                                  const SynthSignal& signal = {}) {
  return synth_generate(seed, n_per_task, n_per_task, vocab_size, signal);
}

}  // namespace desk
