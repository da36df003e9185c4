#pragma once

#include <set>
#include <string>
#include <vector>

#include "desk/cli/run_config.hpp"
#include "desk/eval/ablation.hpp"
#include "desk/model/checkpoint.hpp"
#include "desk/textpipe/dataset.hpp"
#include "desk/textpipe/embeddings.hpp"
#include "desk/textpipe/synth.hpp"
#include "desk/textpipe/tokenize.hpp"
#include "desk/textpipe/vocab.hpp"
#include "desk/train/trainer.hpp"

namespace desk {

struct PreparedExperiment {
  ExperimentData<float> data;
  PipelineMeta meta;
};

inline LabelMap label_map_of(const std::vector<std::string>& names) {
  LabelMap m;
  for (std::size_t i = 0; i < names.size(); ++i) m[names[i]] = i;
  return m;
}

namespace detail {

inline PipelineMeta base_meta(const RunConfig& cfg) {
  PipelineMeta meta;
  meta.language = cfg.data.language;
  meta.max_seq_len = cfg.data.max_seq_len;
  meta.schema = {cfg.data.text_column, cfg.data.label_column};
  meta.labels = {label_map_of(cfg.data.sentiment_labels), label_map_of(cfg.data.depression_labels)};
  return meta;
}

inline PreparedExperiment prepare_synthetic(const RunConfig& cfg) {
  const auto& d = cfg.data;
  SynthSignal signal;
  signal.strength = d.synth_strength;
  signal.planted_fraction = d.synth_planted_fraction;
  signal.lexicon_coverage = d.synth_lexicon_coverage;
  const auto bundle = synth_generate(cfg.train.seed, d.synth_sentiment_examples, d.synth_depression_examples,
                                     d.synth_vocab, signal);
  PreparedExperiment p{synthetic_experiment<float>(bundle, d.test_fraction, cfg.train.seed), base_meta(cfg)};
  p.meta.vocab = bundle.vocab;
  p.meta.lexicon = bundle.lexicon;
  return p;
}

inline DepressionLexicon load_configured_lexicon(const RunConfig& cfg) {
  const auto& d = cfg.data;
  if (d.lexicon_path.empty()) return DepressionLexicon({}, d.language, "none");
  if (d.lexicon_format == LexiconFormat::plain) return load_plain_lexicon(cfg.resolve(d.lexicon_path), d.language);
  return load_nrc_lexicon(cfg.resolve(d.lexicon_path), std::set<std::string>(d.lexicon_emotions.begin(), d.lexicon_emotions.end()));
}

inline PreparedExperiment prepare_csv(const RunConfig& cfg) {
  const auto& d = cfg.data;
  PreparedExperiment p{{}, base_meta(cfg)};
  const CsvSchema& schema = p.meta.schema;
  const LabelMap& sent_labels = p.meta.labels[0];
  const LabelMap& dep_labels = p.meta.labels[1];

  std::vector<LabeledText> sent_rows;
  if (!d.sentiment_csv.empty()) sent_rows = read_labeled_csv(cfg.resolve(d.sentiment_csv), schema);
  const std::string dep_path = cfg.resolve(d.depression_csv);
  auto dep_rows = read_labeled_csv(dep_path, schema);
  if (dep_rows.empty()) throw DataError(dep_path + ": no depression examples");

  std::vector<LabeledText> test_rows;
  std::string test_source = dep_path;
  if (!d.depression_test_csv.empty()) {
    test_source = cfg.resolve(d.depression_test_csv);
    test_rows = read_labeled_csv(test_source, schema);
  } else {
    // Unknown labels surface here, before the split reorders rows.
    std::vector<std::size_t> labels;
    for (std::size_t r = 0; r < dep_rows.size(); ++r) {
      auto it = dep_labels.find(dep_rows[r].label);
      if (it == dep_labels.end()) {
        throw DataError(dep_path + ": row " + std::to_string(r + 1) + " (line " + std::to_string(dep_rows[r].line) +
                        ") has unknown label '" + dep_rows[r].label + "'");
      }
      labels.push_back(it->second);
    }
    Rng rng(cfg.train.seed);
    const auto held = stratified_holdout(labels, d.test_fraction, rng);
    std::vector<LabeledText> train_rows;
    for (std::size_t r = 0; r < dep_rows.size(); ++r) (held[r] ? test_rows : train_rows).push_back(dep_rows[r]);
    dep_rows = std::move(train_rows);
  }
  if (test_rows.empty()) throw DataError("no depression test examples (check data.test_fraction)");

  std::vector<std::vector<std::string>> corpora(2);
  for (const auto& r : sent_rows) corpora[0].push_back(r.text);
  for (const auto& r : dep_rows) corpora[1].push_back(r.text);
  p.meta.vocab = build_vocab(corpora, d.min_count, d.language);
  p.meta.lexicon = load_configured_lexicon(cfg);

  auto encode = [&](const std::vector<LabeledText>& rows, Task task, const LabelMap& labels, const std::string& src) {
    return encode_rows(rows, task, labels, p.meta.lexicon, p.meta.vocab, d.language, d.max_seq_len, src);
  };
  if (!sent_rows.empty()) p.data.sentiment = encode(sent_rows, Task::sentiment, sent_labels, cfg.resolve(d.sentiment_csv));
  p.data.sentiment.num_classes = sent_labels.size();
  p.data.depression_train = encode(dep_rows, Task::depression, dep_labels, dep_path);
  p.data.depression_test = encode(test_rows, Task::depression, dep_labels, test_source);
  p.data.vocab_size = p.meta.vocab.size();
  if (!d.embeddings_path.empty()) {
    Rng rng = Rng(cfg.train.seed).split();
    p.data.pretrained = load_glove<float>(cfg.resolve(d.embeddings_path), p.meta.vocab, cfg.model.word_dim, rng);
  }
  return p;
}

}  // namespace detail

/// Loads or generates the data a run config describes. The depression test
/// split and synthetic data both follow train.seed.
inline PreparedExperiment prepare_experiment(const RunConfig& cfg) {
  cfg.validate();
  return cfg.data.source == DataSource::synthetic ? detail::prepare_synthetic(cfg) : detail::prepare_csv(cfg);
}

}  // namespace desk
