#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "desk/error.hpp"
#include "desk/util/strings.hpp"
#include "desk/textpipe/dataset.hpp"

namespace desk {

/// Denominator applied to QK^T: d1 itself, or its square root.
enum class AttentionScale { paper_d1, sqrt_d1 };

/// How expert outputs are combined per task.
enum class Gating { learned, uniform };

inline std::string_view to_string(AttentionScale s) { return s == AttentionScale::paper_d1 ? "paper_d1" : "sqrt_d1"; }
inline std::string_view to_string(Gating g) { return g == Gating::learned ? "learned" : "uniform"; }

inline AttentionScale parse_attention_scale(std::string_view s) {
  if (s == "paper_d1") return AttentionScale::paper_d1;
  if (s == "sqrt_d1") return AttentionScale::sqrt_d1;
  throw ConfigError("unknown attention_scale '" + std::string(s) + "' (expected paper_d1 or sqrt_d1)");
}

inline Gating parse_gating(std::string_view s) {
  if (s == "learned") return Gating::learned;
  if (s == "uniform") return Gating::uniform;
  throw ConfigError("unknown gating '" + std::string(s) + "' (expected learned or uniform)");
}

struct ModelConfig {
  std::size_t word_dim = 300;
  std::size_t marker_dim = 100;
  std::size_t num_heads = 4;
  std::size_t ff1_dim = 400;
  std::size_t ff2_hidden = 200;
  std::size_t ff2_out = 200;
  std::size_t num_experts = 4;
  std::vector<std::size_t> classes_per_task{2, 2};  // indexed by Task
  double dropout = 0.1;
  AttentionScale attention_scale = AttentionScale::paper_d1;
  Gating gating = Gating::learned;

  std::size_t model_dim() const noexcept { return word_dim + marker_dim; }
  std::size_t head_dim() const noexcept { return model_dim() / num_heads; }
  std::size_t classes(Task t) const { return classes_per_task.at(static_cast<std::size_t>(t)); }

  void validate() const {
    auto positive = [](std::size_t v, const char* name) {
      if (v == 0) throw ConfigError(std::string("model.") + name + " must be positive");
    };
    positive(word_dim, "word_dim");
    positive(marker_dim, "marker_dim");
    positive(num_heads, "num_heads");
    positive(ff1_dim, "ff1_dim");
    positive(ff2_hidden, "ff2_hidden");
    positive(ff2_out, "ff2_out");
    positive(num_experts, "num_experts");
    if (model_dim() % num_heads != 0) {
      throw ConfigError("model dimension " + std::to_string(model_dim()) + " is not divisible by " +
                        std::to_string(num_heads) + " heads");
    }
    if (classes_per_task.size() != kNumTasks) throw ConfigError("classes_per_task needs one entry per task");
    for (std::size_t c : classes_per_task) {
      if (c < 2) throw ConfigError("every task needs at least 2 classes");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline KeyValues to_key_values(const ModelConfig& c) {
  return {{"word_dim", std::to_string(c.word_dim)},
          {"marker_dim", std::to_string(c.marker_dim)},
          {"num_heads", std::to_string(c.num_heads)},
          {"ff1_dim", std::to_string(c.ff1_dim)},
          {"ff2_hidden", std::to_string(c.ff2_hidden)},
          {"ff2_out", std::to_string(c.ff2_out)},
          {"num_experts", std::to_string(c.num_experts)},
          {"sentiment_classes", std::to_string(c.classes_per_task.at(0))},
          {"depression_classes", std::to_string(c.classes_per_task.at(1))},
          {"dropout", format_exact(c.dropout)},
          {"attention_scale", std::string(to_string(c.attention_scale))},
          {"gating", std::string(to_string(c.gating))}};
}

/// Applies one `key = value` pair; returns false for keys it does not own.
inline bool set_model_key(ModelConfig& c, std::string_view key, std::string_view value) {
  const std::string field = "model." + std::string(key);
  auto size = [&] { return parse_field<std::size_t>(field, value); };
  if (key == "word_dim") c.word_dim = size();
  else if (key == "marker_dim") c.marker_dim = size();
  else if (key == "num_heads") c.num_heads = size();
  else if (key == "ff1_dim") c.ff1_dim = size();
  else if (key == "ff2_hidden") c.ff2_hidden = size();
  else if (key == "ff2_out") c.ff2_out = size();
  else if (key == "num_experts") c.num_experts = size();
  else if (key == "sentiment_classes") c.classes_per_task.at(0) = size();
  else if (key == "depression_classes") c.classes_per_task.at(1) = size();
  else if (key == "dropout") c.dropout = parse_field<double>(field, value);
  else if (key == "attention_scale") c.attention_scale = parse_attention_scale(value);
  else if (key == "gating") c.gating = parse_gating(value);
  else return false;
  return true;
}

}  // namespace desk
