#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "desk/error.hpp"
#include "desk/eval/evaluate.hpp"
#include "desk/model/desk_model.hpp"
#include "desk/textpipe/embeddings.hpp"
#include "desk/textpipe/synth.hpp"
#include "desk/train/trainer.hpp"

namespace desk {

enum class AblationVariant { full, no_gate, no_sentiment_data, no_sharing };

inline constexpr AblationVariant kAllVariants[] = {AblationVariant::full, AblationVariant::no_gate,
                                                   AblationVariant::no_sentiment_data, AblationVariant::no_sharing};

/// Short table names: FULL, -gate, -s, -ss.
inline std::string_view to_string(AblationVariant v) {
  switch (v) {
    case AblationVariant::full: return "FULL";
    case AblationVariant::no_gate: return "-gate";
    case AblationVariant::no_sentiment_data: return "-s";
    case AblationVariant::no_sharing: return "-ss";
  }
  return "?";
}

inline AblationVariant parse_variant(std::string_view s) {
  for (auto v : kAllVariants) {
    if (s == to_string(v)) return v;
  }
  if (s == "full") return AblationVariant::full;
  if (s == "no_gate") return AblationVariant::no_gate;
  if (s == "no_sentiment_data") return AblationVariant::no_sentiment_data;
  if (s == "no_sharing") return AblationVariant::no_sharing;
  throw ConfigError("unknown ablation variant '" + std::string(s) + "'");
}

/// Encoded data for one experiment. `pretrained`, when set, seeds the word
/// embedding of every model built from this bundle.
template <typename T>
struct ExperimentData {
  TaskDataset sentiment{Task::sentiment, {}, 2};
  TaskDataset depression_train{Task::depression, {}, 2};
  TaskDataset depression_test{Task::depression, {}, 2};
  std::size_t vocab_size = 0;
  std::optional<EmbeddingTable<T>> pretrained;
};

/// Splits a synthetic bundle into an experiment, holding out a stratified
/// `test_fraction` of the depression examples for scoring.
template <typename T>
ExperimentData<T> synthetic_experiment(const SynthBundle& bundle, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  Rng rng(seed);
  auto split = stratified_split(bundle.depression, test_fraction, rng);
  ExperimentData<T> data;
  data.sentiment = bundle.sentiment;
  data.depression_train = std::move(split.train);
  data.depression_test = std::move(split.validation);
  data.vocab_size = bundle.vocab.size();
  return data;
}

/// Stream for model initialisation, kept apart from the streams fit derives
/// from the same seed.
inline Rng init_rng(std::uint64_t seed) { return Rng(seed ^ 0xA5A5A5A5A5A5A5A5ULL); }

template <typename T>
DeskModel<T> build_model(const ModelConfig& cfg, const ExperimentData<T>& data, std::uint64_t seed) {
  Rng rng = init_rng(seed);
  if (data.pretrained) {
    auto copy = make_var<T>(data.pretrained->matrix->shape, data.pretrained->matrix->data, true);
    return DeskModel<T>(cfg, EmbeddingTable<T>{copy, data.pretrained->word_dim}, rng);
  }
  return DeskModel<T>::create(cfg, data.vocab_size, rng);
}

template <typename T>
struct RunResult {
  MetricsReport test;
  TrainingReport training;
  DeskModel<T> model;
};

/// Builds, trains and scores one model on the depression test split.
template <typename T>
RunResult<T> train_and_evaluate(const ModelConfig& model_cfg, const TrainConfig& train_cfg, const ExperimentData<T>& data,
                                bool markers_enabled = true) {
  auto run = [&](const TaskDataset& sentiment, const TaskDataset& train, const TaskDataset& test) {
    auto model = build_model(model_cfg, data, train_cfg.seed);
    auto report = fit(model, sentiment, train, train_cfg);
    auto scores = evaluate(model, test, Task::depression);
    return RunResult<T>{std::move(scores), std::move(report), std::move(model)};
  };
  if (markers_enabled) return run(data.sentiment, data.depression_train, data.depression_test);
  return run(data.sentiment.without_markers(), data.depression_train.without_markers(),
             data.depression_test.without_markers());
}

/// The configuration a variant changes relative to the full model.
struct VariantSetup {
  ModelConfig model;
  TrainConfig train;
  bool markers_enabled = true;
};

inline VariantSetup variant_setup(AblationVariant v, ModelConfig model_cfg, TrainConfig train_cfg) {
  VariantSetup s{std::move(model_cfg), std::move(train_cfg), true};
  switch (v) {
    case AblationVariant::full: break;
    case AblationVariant::no_gate: s.model.gating = Gating::uniform; break;
    case AblationVariant::no_sentiment_data: s.train.ratio.sentiment = 0.0; break;
    case AblationVariant::no_sharing:
      s.train.ratio.sentiment = 0.0;
      s.markers_enabled = false;
      break;
  }
  if (s.train.ratio.depression == 0.0 && s.train.ratio.sentiment == 0.0) {
    throw ConfigError(std::string(to_string(v)) + " leaves no task to train");
  }
  return s;
}

template <typename T>
RunResult<T> run_ablation(AblationVariant variant, const ExperimentData<T>& data, const ModelConfig& model_cfg,
                          const TrainConfig& train_cfg) {
  const auto s = variant_setup(variant, model_cfg, train_cfg);
  return train_and_evaluate(s.model, s.train, data, s.markers_enabled);
}

}  // namespace desk
