#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "desk/error.hpp"
#include "desk/model/config.hpp"
#include "desk/util/strings.hpp"

namespace desk {

/// Sentiment batches : depression batches per epoch.
struct TaskRatio {
  double sentiment = 1.0;
  double depression = 1.0;

  void validate() const {
    if (!(sentiment >= 0.0) || !(depression >= 0.0)) throw ConfigError("ratio components must be non-negative");
    if (sentiment == 0.0 && depression == 0.0) throw ConfigError("ratio components cannot both be 0");
  }
  friend bool operator==(const TaskRatio&, const TaskRatio&) = default;
};

inline std::string to_string(const TaskRatio& r) { return format_exact(r.sentiment) + ":" + format_exact(r.depression); }

/// Parses "S:D", e.g. "3:1".
inline TaskRatio parse_ratio(std::string_view text) {
  const auto colon = text.find(':');
  TaskRatio r;
  if (colon == std::string_view::npos || !parse_number(text.substr(0, colon), r.sentiment) ||
      !parse_number(text.substr(colon + 1), r.depression)) {
    throw ConfigError("malformed ratio '" + std::string(text) + "' (expected sentiment:depression, e.g. 3:1)");
  }
  r.validate();
  return r;
}

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 512;
  double lambda_l2 = 1e-4;
  std::size_t max_epochs = 50;
  TaskRatio ratio;
  double lr_decay_factor = 0.5;
  std::size_t lr_patience = 2;
  std::size_t early_stop_patience = 5;
  std::uint64_t seed = 1;
  double validation_fraction = 0.1;  // 0: validate on the depression training data
  std::size_t batches_per_epoch = 0;  // 0: one pass over the depression data

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
    if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (!(lambda_l2 >= 0.0)) throw ConfigError("train.lambda_l2 must be non-negative");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) throw ConfigError("train.lr_decay_factor must lie in (0, 1]");
    if (lr_patience == 0) throw ConfigError("train.lr_patience must be at least 1");
    if (early_stop_patience == 0) throw ConfigError("train.early_stop_patience must be at least 1");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
      throw ConfigError("train.validation_fraction must lie in [0, 1)");
    }
    ratio.validate();
  }
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline KeyValues to_key_values(const TrainConfig& c) {
  return {{"learning_rate", format_exact(c.learning_rate)},
          {"batch_size", std::to_string(c.batch_size)},
          {"lambda_l2", format_exact(c.lambda_l2)},
          {"max_epochs", std::to_string(c.max_epochs)},
          {"ratio", to_string(c.ratio)},
          {"lr_decay_factor", format_exact(c.lr_decay_factor)},
          {"lr_patience", std::to_string(c.lr_patience)},
          {"early_stop_patience", std::to_string(c.early_stop_patience)},
          {"seed", std::to_string(c.seed)},
          {"validation_fraction", format_exact(c.validation_fraction)},
          {"batches_per_epoch", std::to_string(c.batches_per_epoch)}};
}

inline bool set_train_key(TrainConfig& c, std::string_view key, std::string_view value) {
  const std::string field = "train." + std::string(key);
  auto size = [&] { return parse_field<std::size_t>(field, value); };
  auto real = [&] { return parse_field<double>(field, value); };
  if (key == "learning_rate") c.learning_rate = real();
  else if (key == "batch_size") c.batch_size = size();
  else if (key == "lambda_l2") c.lambda_l2 = real();
  else if (key == "max_epochs") c.max_epochs = size();
  else if (key == "ratio") c.ratio = parse_ratio(value);
  else if (key == "lr_decay_factor") c.lr_decay_factor = real();
  else if (key == "lr_patience") c.lr_patience = size();
  else if (key == "early_stop_patience") c.early_stop_patience = size();
  else if (key == "seed") c.seed = parse_field<std::uint64_t>(field, value);
  else if (key == "validation_fraction") c.validation_fraction = real();
  else if (key == "batches_per_epoch") c.batches_per_epoch = size();
  else return false;
  return true;
}

}  // namespace desk
