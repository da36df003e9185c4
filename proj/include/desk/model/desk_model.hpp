#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "desk/error.hpp"
#include "desk/lexicon/lexicon.hpp"
#include "desk/model/config.hpp"
#include "desk/numcore/graph.hpp"
#include "desk/numcore/rng.hpp"
#include "desk/numcore/tensor.hpp"
#include "desk/textpipe/dataset.hpp"
#include "desk/textpipe/embeddings.hpp"

namespace desk {

/// A trainable tensor with a stable name. `frozen_row` marks a row that is
/// excluded from regularisation and never receives gradient.
template <typename T>
struct Parameter {
  std::string name;
  Var<T> value;
  std::optional<std::size_t> frozen_row;
};

template <typename T>
struct Linear {
  Var<T> weight;  // [in x out]
  Var<T> bias;    // [out]
};

/// Feature extraction unit: multi-head self-attention, FF1, dual pooling, FF2.
template <typename T>
struct ExpertUnit {
  std::vector<Var<T>> query, key, value;  // one [model_dim x head_dim] per head
  Var<T> output;                          // [model_dim x model_dim]
  Linear<T> ff1;                          // model_dim -> ff1_dim
  Linear<T> ff2_hidden;                   // 2*ff1_dim -> ff2_hidden
  Linear<T> ff2_out;                      // ff2_hidden -> ff2_out
};

template <typename T>
struct GateNetwork {
  Var<T> weight;  // [model_dim x num_experts]
};

template <typename T>
struct TaskHead {
  Linear<T> affine;  // ff2_out -> classes
};

/// Dropout switch plus the generator that drives it.
struct ForwardMode {
  bool training = false;
  Rng* rng = nullptr;
};

namespace detail {

// Glorot/Xavier uniform.
template <typename T>
Var<T> glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> v(fan_in * fan_out);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-limit, limit));
  return make_var<T>({fan_in, fan_out}, std::move(v), true);
}

template <typename T>
Linear<T> linear(std::size_t in, std::size_t out, Rng& rng) {
  return {glorot<T>(in, out, rng), zeros_var<T>({out}, true)};
}

}  // namespace detail

/// Marker-augmented embeddings, shared experts, one gate and one head per task.
template <typename T>
class DeskModel {
 public:
  /// Builds every parameter except the word embedding, which is supplied.
  DeskModel(const ModelConfig& config, EmbeddingTable<T> embedding, Rng& rng)
      : config_(config), embedding_(std::move(embedding)) {
    config_.validate();
    if (embedding_.word_dim != config_.word_dim) {
      throw ConfigError("embedding width " + std::to_string(embedding_.word_dim) + " differs from model.word_dim " +
                        std::to_string(config_.word_dim));
    }
    embedding_.matrix->requires_grad = true;
    const std::size_t d = config_.model_dim(), dh = config_.head_dim();
    std::vector<T> marker_values(2 * config_.marker_dim);
    for (auto& x : marker_values) x = static_cast<T>(rng.uniform(-kOovInitRange, kOovInitRange));
    markers_ = make_var<T>({2, config_.marker_dim}, std::move(marker_values), true);
    for (std::size_t e = 0; e < config_.num_experts; ++e) {
      ExpertUnit<T> unit;
      for (std::size_t h = 0; h < config_.num_heads; ++h) {
        unit.query.push_back(detail::glorot<T>(d, dh, rng));
        unit.key.push_back(detail::glorot<T>(d, dh, rng));
        unit.value.push_back(detail::glorot<T>(d, dh, rng));
      }
      unit.output = detail::glorot<T>(d, d, rng);
      unit.ff1 = detail::linear<T>(d, config_.ff1_dim, rng);
      unit.ff2_hidden = detail::linear<T>(2 * config_.ff1_dim, config_.ff2_hidden, rng);
      unit.ff2_out = detail::linear<T>(config_.ff2_hidden, config_.ff2_out, rng);
      experts_.push_back(std::move(unit));
    }
    for (std::size_t k = 0; k < kNumTasks; ++k) {
      gates_.push_back({detail::glorot<T>(d, config_.num_experts, rng)});
      heads_.push_back({detail::linear<T>(config_.ff2_out, config_.classes_per_task[k], rng)});
    }
    collect_parameters();
  }

  /// Random word embeddings drawn from `rng` first, then the rest.
  static DeskModel create(const ModelConfig& config, std::size_t vocab_size, Rng& rng) {
    auto table = random_embeddings<T>(vocab_size, config.word_dim, rng);
    return DeskModel(config, std::move(table), rng);
  }

  DeskModel(const DeskModel& other) : DeskModel(other, Rng(0)) {}
  DeskModel& operator=(const DeskModel&) = delete;
  DeskModel(DeskModel&&) noexcept = default;
  DeskModel& operator=(DeskModel&&) noexcept = default;

  const ModelConfig& config() const noexcept { return config_; }
  const EmbeddingTable<T>& embedding() const noexcept { return embedding_; }
  const Var<T>& markers() const noexcept { return markers_; }
  const std::vector<ExpertUnit<T>>& experts() const noexcept { return experts_; }
  std::vector<ExpertUnit<T>>& experts() noexcept { return experts_; }
  const GateNetwork<T>& gate(Task t) const { return gates_.at(static_cast<std::size_t>(t)); }
  const TaskHead<T>& head(Task t) const { return heads_.at(static_cast<std::size_t>(t)); }

  /// Every trainable tensor exactly once, in a fixed order.
  const std::vector<Parameter<T>>& parameters() const noexcept { return parameters_; }

  std::vector<Var<T>> parameter_values() const {
    std::vector<Var<T>> out;
    for (const auto& p : parameters_) out.push_back(p.value);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters_) n += p.value->size();
    return n;
  }

  /// Gives every parameter an all-zero gradient.
  void zero_grad() {
    for (auto& p : parameters_) {
      p.value->grad.assign(p.value->size(), T{0});
    }
  }

  std::vector<std::vector<T>> snapshot() const {
    std::vector<std::vector<T>> out;
    for (const auto& p : parameters_) out.push_back(p.value->data);
    return out;
  }

  void restore(const std::vector<std::vector<T>>& values) {
    if (values.size() != parameters_.size()) throw UsageError("restore: snapshot has the wrong parameter count");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i].size() != parameters_[i].value->size()) {
        throw UsageError("restore: snapshot size mismatch for " + parameters_[i].name);
      }
      parameters_[i].value->data = values[i];
    }
  }

  void copy_values_from(const DeskModel& other) { restore(other.snapshot()); }

 private:
  // Deep copy: fresh tensors of the same shapes, then the values of `other`.
  DeskModel(const DeskModel& other, Rng&& scratch) : DeskModel(other.config_, other.clone_embedding(), scratch) {
    copy_values_from(other);
  }

  EmbeddingTable<T> clone_embedding() const {
    return {std::make_shared<Tensor<T>>(*embedding_.matrix), embedding_.word_dim};
  }

  void collect_parameters() {
    parameters_.clear();
    parameters_.push_back({"embedding", embedding_.matrix, Vocabulary::kPad});
    parameters_.push_back({"markers", markers_, std::nullopt});
    for (std::size_t e = 0; e < experts_.size(); ++e) {
      const std::string p = "expert" + std::to_string(e) + ".";
      auto& u = experts_[e];
      for (std::size_t h = 0; h < u.query.size(); ++h) {
        const std::string hs = std::to_string(h);
        parameters_.push_back({p + "query" + hs, u.query[h], std::nullopt});
        parameters_.push_back({p + "key" + hs, u.key[h], std::nullopt});
        parameters_.push_back({p + "value" + hs, u.value[h], std::nullopt});
      }
      parameters_.push_back({p + "output", u.output, std::nullopt});
      parameters_.push_back({p + "ff1.weight", u.ff1.weight, std::nullopt});
      parameters_.push_back({p + "ff1.bias", u.ff1.bias, std::nullopt});
      parameters_.push_back({p + "ff2_hidden.weight", u.ff2_hidden.weight, std::nullopt});
      parameters_.push_back({p + "ff2_hidden.bias", u.ff2_hidden.bias, std::nullopt});
      parameters_.push_back({p + "ff2_out.weight", u.ff2_out.weight, std::nullopt});
      parameters_.push_back({p + "ff2_out.bias", u.ff2_out.bias, std::nullopt});
    }
    for (std::size_t k = 0; k < kNumTasks; ++k) {
      const std::string task(to_string(static_cast<Task>(k)));
      parameters_.push_back({"gate." + task, gates_[k].weight, std::nullopt});
      parameters_.push_back({"head." + task + ".weight", heads_[k].affine.weight, std::nullopt});
      parameters_.push_back({"head." + task + ".bias", heads_[k].affine.bias, std::nullopt});
    }
  }

  ModelConfig config_;
  EmbeddingTable<T> embedding_;
  Var<T> markers_;
  std::vector<ExpertUnit<T>> experts_;
  std::vector<GateNetwork<T>> gates_;
  std::vector<TaskHead<T>> heads_;
  std::vector<Parameter<T>> parameters_;
};

/// Examples padded with PAD (marker 0) to the longest sequence.
struct SequenceBatch {
  std::size_t size = 0;
  std::size_t length = 0;
  std::vector<std::size_t> ids;  // [size x length]
  std::vector<Marker> markers;   // [size x length]
  SeqMask mask;
};

inline SequenceBatch make_batch(std::span<const Example* const> examples) {
  if (examples.empty()) throw UsageError("make_batch: empty batch");
  SequenceBatch b;
  b.size = examples.size();
  for (const auto* ex : examples) {
    if (ex->ids.size() != ex->markers.size()) {
      throw UsageError("make_batch: " + std::to_string(ex->ids.size()) + " token ids but " +
                       std::to_string(ex->markers.size()) + " marker bits");
    }
    if (ex->ids.empty()) throw UsageError("make_batch: empty sequence");
    b.length = std::max(b.length, ex->ids.size());
  }
  b.ids.assign(b.size * b.length, Vocabulary::kPad);
  b.markers.assign(b.size * b.length, Marker::not_in_lexicon);
  b.mask = SeqMask(b.size, b.length, false);
  for (std::size_t i = 0; i < b.size; ++i) {
    const auto* ex = examples[i];
    for (std::size_t l = 0; l < ex->ids.size(); ++l) {
      b.ids[i * b.length + l] = ex->ids[l];
      b.markers[i * b.length + l] = ex->markers[l];
      b.mask.set(i, l, true);
    }
  }
  return b;
}

inline SequenceBatch make_batch(const TaskDataset& data, std::span<const std::size_t> indices) {
  std::vector<const Example*> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) picked.push_back(&data.examples.at(i));
  return make_batch(picked);
}

/// Row i = word_vector(ids[i]) ++ marker_row(markers[i]); [n x model_dim].
template <typename T>
Var<T> embed_with_markers(Graph<T>& g, std::span<const std::size_t> ids, std::span<const Marker> markers,
                          const EmbeddingTable<T>& embedding, const Var<T>& marker_table) {
  if (ids.size() != markers.size()) {
    throw UsageError("embed_with_markers: " + std::to_string(ids.size()) + " token ids but " +
                     std::to_string(markers.size()) + " marker bits");
  }
  std::vector<std::size_t> marker_ids(markers.size());
  std::transform(markers.begin(), markers.end(), marker_ids.begin(),
                 [](Marker m) { return static_cast<std::size_t>(m); });
  auto words = g.gather_rows(embedding.matrix, ids, Vocabulary::kPad);
  auto bits = g.gather_rows(marker_table, marker_ids);
  return g.concat_last_dim({words, bits});
}

/// softmax(QK^T / denom) V over Q, K, V of shape [B x n x d]; masked key
/// positions get zero weight.
template <typename T>
Var<T> attention(Graph<T>& g, const Var<T>& q, const Var<T>& k, const Var<T>& v, AttentionScale scale,
                 const SeqMask& mask) {
  if (q->shape != k->shape || q->shape != v->shape || q->rank() != 3) {
    throw DimensionError("attention: Q " + shape_string(q->shape) + ", K " + shape_string(k->shape) + ", V " +
                         shape_string(v->shape) + " must share one [B x n x d] shape");
  }
  const double d1 = static_cast<double>(q->dim(2));
  const double denom = scale == AttentionScale::paper_d1 ? d1 : std::sqrt(d1);
  auto scores = g.scale(g.batched_matmul(q, k, true), static_cast<T>(1.0 / denom));
  return g.batched_matmul(g.masked_softmax(scores, mask), v);
}

/// Intermediate values of one expert pass, for inspection.
template <typename T>
struct ExpertTrace {
  Var<T> attended;  // H^s, [B*L x model_dim]
  Var<T> pooled;    // max-pool ++ mean-pool, [B x 2*ff1_dim]
};

/// One expert over x [B x L x model_dim]; returns [B x ff2_out].
template <typename T>
Var<T> expert_forward(Graph<T>& g, const ExpertUnit<T>& unit, const ModelConfig& cfg, const Var<T>& x,
                      const SeqMask& mask, ForwardMode mode, ExpertTrace<T>* trace = nullptr) {
  if (x->rank() != 3 || x->dim(2) != cfg.model_dim()) {
    throw DimensionError("expert_forward: input " + shape_string(x->shape) + " must be [B x L x " +
                         std::to_string(cfg.model_dim()) + "]");
  }
  const std::size_t batch = x->dim(0), len = x->dim(1), dh = cfg.head_dim();
  auto flat = g.reshape(x, {batch * len, cfg.model_dim()});
  // All per-head projections in one product, then sliced apart.
  const std::size_t num_heads = unit.query.size();
  std::vector<Var<T>> weights;
  for (const auto* group : {&unit.query, &unit.key, &unit.value}) weights.insert(weights.end(), group->begin(), group->end());
  auto projected = g.matmul(flat, g.concat_last_dim(weights));
  auto part = [&](std::size_t i) { return g.reshape(g.slice_last_dim(projected, i * dh, dh), {batch, len, dh}); };
  std::vector<Var<T>> heads;
  for (std::size_t h = 0; h < num_heads; ++h) {
    auto m = attention(g, part(h), part(num_heads + h), part(2 * num_heads + h), cfg.attention_scale, mask);
    heads.push_back(g.reshape(m, {batch * len, dh}));
  }
  auto hidden = g.matmul(heads.size() == 1 ? heads[0] : g.concat_last_dim(heads), unit.output);
  if (trace) trace->attended = hidden;
  hidden = g.dropout(hidden, cfg.dropout, mode.training, mode.rng);
  auto ff1 = g.relu(g.add_bias(g.matmul(hidden, unit.ff1.weight), unit.ff1.bias));
  ff1 = g.dropout(ff1, cfg.dropout, mode.training, mode.rng);
  auto seq = g.reshape(ff1, {batch, len, cfg.ff1_dim});
  auto pooled = g.concat_last_dim({g.masked_max_pool(seq, mask), g.masked_mean_pool(seq, mask)});
  if (trace) trace->pooled = pooled;
  auto ff2 = g.relu(g.add_bias(g.matmul(pooled, unit.ff2_hidden.weight), unit.ff2_hidden.bias));
  auto out = g.add_bias(g.matmul(ff2, unit.ff2_out.weight), unit.ff2_out.bias);
  return g.dropout(out, cfg.dropout, mode.training, mode.rng);
}

/// softmax(mean_unmasked(x) W_gn) per sequence; [B x num_experts].
template <typename T>
Var<T> gate_weights(Graph<T>& g, const GateNetwork<T>& gate, const Var<T>& x, const SeqMask& mask) {
  return g.softmax_rows(g.matmul(g.masked_mean_pool(x, mask), gate.weight));
}

/// Task logits [B x classes(task)] for a padded batch.
template <typename T>
Var<T> forward(Graph<T>& g, const DeskModel<T>& model, const SequenceBatch& batch, Task task, ForwardMode mode = {}) {
  const auto& cfg = model.config();
  for (std::size_t id : batch.ids) {
    if (id >= model.embedding().rows()) {
      throw UsageError("forward: token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(model.embedding().rows()));
    }
  }
  auto x = g.reshape(embed_with_markers(g, batch.ids, batch.markers, model.embedding(), model.markers()),
                     {batch.size, batch.length, cfg.model_dim()});
  std::vector<Var<T>> outputs;
  for (const auto& unit : model.experts()) outputs.push_back(expert_forward(g, unit, cfg, x, batch.mask, mode));
  Var<T> weights;
  if (cfg.gating == Gating::uniform) {
    const T u = T{1} / static_cast<T>(cfg.num_experts);
    weights = make_var<T>({batch.size, cfg.num_experts}, std::vector<T>(batch.size * cfg.num_experts, u));
  } else {
    weights = gate_weights(g, model.gate(task), x, batch.mask);
  }
  auto mixed = g.weighted_sum(weights, outputs);
  const auto& head = model.head(task).affine;
  return g.add_bias(g.matmul(mixed, head.weight), head.bias);
}

/// Row-wise argmax; ties go to the lowest class index.
template <typename T>
std::vector<std::size_t> argmax_rows(const Tensor<T>& logits) {
  const std::size_t classes = logits.last_dim(), rows = logits.size() / classes;
  std::vector<std::size_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = logits.data.data() + r * classes;
    out[r] = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
  }
  return out;
}

/// Eval-mode class predictions.
template <typename T>
std::vector<std::size_t> predict(const DeskModel<T>& model, const SequenceBatch& batch, Task task) {
  Graph<T> g(false);
  return argmax_rows(*forward(g, model, batch, task));
}

/// Eval-mode class probabilities [B x classes].
template <typename T>
Tensor<T> predict_proba(const DeskModel<T>& model, const SequenceBatch& batch, Task task) {
  Graph<T> g(false);
  return *g.softmax_rows(forward(g, model, batch, task));
}

}  // namespace desk
