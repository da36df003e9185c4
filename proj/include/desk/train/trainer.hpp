#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "desk/error.hpp"
#include "desk/eval/metrics.hpp"
#include "desk/model/desk_model.hpp"
#include "desk/numcore/graph.hpp"
#include "desk/numcore/rmsprop.hpp"
#include "desk/numcore/rng.hpp"
#include "desk/train/config.hpp"
#include "desk/train/loss.hpp"
#include "desk/train/schedule.hpp"
#include "desk/util/strings.hpp"

namespace desk {

/// Signals a stop once the validation loss has failed to improve for
/// `patience` consecutive epochs.
struct EarlyStopper {
  double best_validation_loss = std::numeric_limits<double>::infinity();
  std::size_t epochs_since_improvement = 0;
  std::size_t patience = 5;

  explicit EarlyStopper(std::size_t patience_epochs) : patience(patience_epochs) {}

  /// Returns true when `loss` is a strict improvement. NaN never improves.
  bool observe(double loss) {
    if (loss < best_validation_loss) {
      best_validation_loss = loss;
      epochs_since_improvement = 0;
      return true;
    }
    ++epochs_since_improvement;
    return false;
  }
  bool should_stop() const noexcept { return epochs_since_improvement >= patience; }
};

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// non-improving epochs, then starts counting again.
struct PlateauDecay {
  double factor = 0.5;
  std::size_t patience = 2;
  std::size_t stale_epochs = 0;

  double next(bool improved, double lr) {
    if (improved) {
      stale_epochs = 0;
      return lr;
    }
    if (++stale_epochs < patience) return lr;
    stale_epochs = 0;
    return lr * factor;
  }
};

enum class StopReason { max_epochs, early_stopping };

inline std::string_view to_string(StopReason r) {
  return r == StopReason::max_epochs ? "max_epochs" : "early_stopping";
}

struct EpochRecord {
  std::size_t epoch = 0;                      // 1-based
  double sentiment_loss = std::nan("");       // mean batch loss; NaN when the task had no batches
  double depression_loss = std::nan("");
  double validation_loss = 0.0;               // mean cross-entropy on the depression validation split
  double learning_rate = 0.0;                 // rate used during this epoch
  double validation_accuracy = 0.0;
  double validation_macro_f1 = 0.0;
  std::size_t sentiment_batches = 0;
  std::size_t depression_batches = 0;
};

struct TrainingReport {
  std::vector<EpochRecord> epochs;
  StopReason stop_reason = StopReason::max_epochs;
  std::size_t best_epoch = 0;  // 0: no epoch ran, initial weights kept
  double best_validation_loss = std::numeric_limits<double>::infinity();
  std::size_t train_examples = 0;       // depression examples used for training
  std::size_t validation_examples = 0;  // depression examples held out
};

struct ValidationSplit {
  TaskDataset train;
  TaskDataset validation;
  bool held_out = true;  // false: validation is the training data itself
};

/// Marks round(fraction * n_c) positions of every class c as held out,
/// keeping at least one example of each class unheld.
inline std::vector<bool> stratified_holdout(std::span<const std::size_t> labels, double fraction, Rng& rng) {
  std::map<std::size_t, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(i);
  std::vector<bool> held(labels.size(), false);
  for (auto& [label, idx] : by_label) {
    rng.shuffle(idx);
    auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    if (k >= idx.size()) k = idx.size() - 1;
    for (std::size_t j = 0; j < k; ++j) held[idx[j]] = true;
  }
  return held;
}

/// Stratified hold-out split. Falls back to validating on the training
/// data when nothing would be held out.
inline ValidationSplit stratified_split(const TaskDataset& data, double fraction, Rng& rng) {
  ValidationSplit split{{data.task, {}, data.num_classes}, {data.task, {}, data.num_classes}, true};
  const auto labels = data.labels();
  const auto held = stratified_holdout(labels, fraction, rng);
  for (std::size_t i = 0; i < data.size(); ++i) {
    (held[i] ? split.validation : split.train).examples.push_back(data.examples[i]);
  }
  if (split.validation.examples.empty()) {
    split.validation = split.train;
    split.held_out = false;
  }
  return split;
}

/// Eval-mode mean cross-entropy and predictions over a whole dataset.
template <typename T>
std::pair<double, std::vector<std::size_t>> dataset_loss(const DeskModel<T>& model, const TaskDataset& data, Task task,
                                                         std::size_t batch_size) {
  if (data.examples.empty()) throw UsageError("dataset_loss: empty dataset");
  double total = 0.0;
  std::vector<std::size_t> preds;
  preds.reserve(data.size());
  std::vector<std::size_t> idx, labels;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.clear();
    labels.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) {
      idx.push_back(i);
      labels.push_back(data.examples[i].label);
    }
    Graph<T> g(false);
    auto logits = forward(g, model, make_batch(data, idx), task);
    total += static_cast<double>(g.cross_entropy(logits, labels)->item()) * static_cast<double>(idx.size());
    for (auto p : argmax_rows(*logits)) preds.push_back(p);
  }
  return {total / static_cast<double>(data.size()), std::move(preds)};
}

namespace detail {

inline void check_task_data(const TaskDataset& data, Task task, std::size_t classes) {
  if (data.examples.empty()) return;
  data.validate();
  if (data.task != task) {
    throw UsageError("expected a " + std::string(to_string(task)) + " dataset, got " + std::string(to_string(data.task)));
  }
  for (const auto& ex : data.examples) {
    if (ex.label >= classes) {
      throw DataError(std::string(to_string(task)) + " label " + std::to_string(ex.label) + " exceeds the model's " +
                      std::to_string(classes) + " classes");
    }
  }
}

}  // namespace detail

/// Joint training with single-task batches. The model ends holding the
/// weights of the epoch with the lowest depression validation loss.
template <typename T>
TrainingReport fit(DeskModel<T>& model, const TaskDataset& sentiment, const TaskDataset& depression,
                   const TrainConfig& cfg) {
  cfg.validate();
  if (depression.examples.empty()) throw ConfigError("training needs depression examples for validation");
  detail::check_task_data(sentiment, Task::sentiment, model.config().classes(Task::sentiment));
  detail::check_task_data(depression, Task::depression, model.config().classes(Task::depression));

  Rng root(cfg.seed);
  Rng split_rng = root.split();
  Rng schedule_rng = root.split();
  Rng dropout_rng = root.split();

  const ValidationSplit split = stratified_split(depression, cfg.validation_fraction, split_rng);
  TrainingReport report;
  report.train_examples = split.train.size();
  report.validation_examples = split.held_out ? split.validation.size() : 0;
  if (cfg.max_epochs == 0) return report;

  RmspropState<T> optimizer;
  optimizer.learning_rate = cfg.learning_rate;
  EarlyStopper stopper(cfg.early_stop_patience);
  PlateauDecay decay{cfg.lr_decay_factor, cfg.lr_patience};
  const auto& params = model.parameters();
  const auto values = model.parameter_values();
  std::vector<std::vector<T>> best = model.snapshot();
  std::vector<std::size_t> labels;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const BatchSchedule schedule = schedule_epoch(sentiment, split.train, cfg, schedule_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = optimizer.learning_rate;
    double loss_sum[kNumTasks] = {0.0, 0.0};
    for (std::size_t b = 0; b < schedule.size(); ++b) {
      const auto& sb = schedule.batches[b];
      const TaskDataset& data = sb.task == Task::sentiment ? sentiment : split.train;
      labels.clear();
      for (auto i : sb.indices) labels.push_back(data.examples[i].label);
      Graph<T> g;
      auto logits = forward(g, model, make_batch(data, sb.indices), sb.task, {true, &dropout_rng});
      auto loss = compute_loss<T>(g, logits, labels, params, cfg.lambda_l2);
      const double value = static_cast<double>(loss->item());
      if (!std::isfinite(value)) {
        throw NumericError("non-finite loss (" + format_exact(value) + ") at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(b + 1) + " (" + std::string(to_string(sb.task)) + ")");
      }
      model.zero_grad();
      g.backward(loss);
      rmsprop_step<T>(values, optimizer);
      loss_sum[static_cast<std::size_t>(sb.task)] += value;
    }
    rec.sentiment_batches = schedule.count(Task::sentiment);
    rec.depression_batches = schedule.count(Task::depression);
    if (rec.sentiment_batches) rec.sentiment_loss = loss_sum[0] / static_cast<double>(rec.sentiment_batches);
    if (rec.depression_batches) rec.depression_loss = loss_sum[1] / static_cast<double>(rec.depression_batches);

    auto [val_loss, preds] = dataset_loss(model, split.validation, Task::depression, cfg.batch_size);
    const auto m = metrics(preds, split.validation.labels(), model.config().classes(Task::depression));
    rec.validation_loss = val_loss;
    rec.validation_accuracy = m.accuracy;
    rec.validation_macro_f1 = m.macro_f1;
    report.epochs.push_back(rec);

    const bool improved = stopper.observe(val_loss);
    if (improved) {
      best = model.snapshot();
      report.best_epoch = epoch;
      report.best_validation_loss = val_loss;
    }
    if (stopper.should_stop()) {
      report.stop_reason = StopReason::early_stopping;
      break;
    }
    optimizer.learning_rate = decay.next(improved, optimizer.learning_rate);
  }
  model.restore(best);
  return report;
}

/// Tab-separated per-epoch log with a header row.
inline void write_training_log(std::ostream& out, const TrainingReport& report) {
  auto num = [](double v) { return std::isnan(v) ? std::string("-") : format_exact(v); };
  out << "epoch\tsentiment_loss\tdepression_loss\tvalidation_loss\tlearning_rate\tvalidation_accuracy"
         "\tvalidation_macro_f1\tsentiment_batches\tdepression_batches\n";
  for (const auto& e : report.epochs) {
    out << e.epoch << '\t' << num(e.sentiment_loss) << '\t' << num(e.depression_loss) << '\t' << num(e.validation_loss)
        << '\t' << num(e.learning_rate) << '\t' << num(e.validation_accuracy) << '\t' << num(e.validation_macro_f1)
        << '\t' << e.sentiment_batches << '\t' << e.depression_batches << '\n';
  }
  out << "# stop_reason=" << to_string(report.stop_reason) << " best_epoch=" << report.best_epoch << '\n';
}

}  // namespace desk
