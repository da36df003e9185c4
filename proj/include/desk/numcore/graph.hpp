#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "desk/error.hpp"
#include "desk/numcore/rng.hpp"
#include "desk/numcore/tensor.hpp"

namespace desk {

/// Define-by-run tape. Every operation executed through a recording Graph
/// appends a node holding its inputs, output and backward rule; nodes are
/// appended in execution order, so the tape is already topologically sorted.
///
/// A Graph constructed with `record = false` evaluates the same operations
/// without keeping any nodes (inference mode).
template <typename T>
class Graph {
 public:
  struct Node {
    std::vector<Var<T>> inputs;
    Var<T> output;
    std::function<void()> backward;
  };

  explicit Graph(bool record = true) : record_(record) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }

  /// Propagates d(loss)/d(x) to every reachable tensor with requires_grad.
  /// Leaf gradients accumulate by addition across paths and across calls.
  void backward(const Var<T>& loss) {
    if (loss->size() != 1) {
      throw UsageError("backward() needs a scalar loss, got shape " + shape_string(loss->shape));
    }
    loss->ensure_grad();
    loss->grad[0] += T{1};
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (it->output->has_grad()) it->backward();
    }
  }

  // ---------------------------------------------------------------- linear

  /// c[m x n] = a[m x k] * b[k x n]
  Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    if (a->rank() != 2 || b->rank() != 2 || a->dim(1) != b->dim(0)) {
      throw DimensionError("matmul: cannot multiply " + shape_string(a->shape) + " by " +
                           shape_string(b->shape));
    }
    const std::size_t m = a->dim(0), k = a->dim(1), n = b->dim(1);
    auto out = result({m, n}, {a, b});
    gemm_acc(a->data.data(), b->data.data(), out->data.data(), m, k, n);
    if (out->requires_grad) {
      record({a, b}, out, [a, b, out, m, k, n] {
        const T* g = out->grad.data();
        if (a->requires_grad) {
          a->ensure_grad();
          gemm_bt_acc(g, b->data.data(), a->grad.data(), m, n, k);  // dA += dC * B^T
        }
        if (b->requires_grad) {
          b->ensure_grad();
          gemm_at_acc(a->data.data(), g, b->grad.data(), m, k, n);  // dB += A^T * dC
        }
      });
    }
    return out;
  }

  /// Batched product over the leading dimension:
  /// [B x m x k] * [B x k x n], or [B x m x k] * [B x n x k]^T when
  /// `transpose_b` is set.
  Var<T> batched_matmul(const Var<T>& a, const Var<T>& b, bool transpose_b = false) {
    const bool shapes_ok = a->rank() == 3 && b->rank() == 3 && a->dim(0) == b->dim(0) &&
                           a->dim(2) == (transpose_b ? b->dim(2) : b->dim(1));
    if (!shapes_ok) {
      throw DimensionError(std::string("batched_matmul") + (transpose_b ? " (b transposed)" : "") +
                           ": cannot multiply " + shape_string(a->shape) + " by " + shape_string(b->shape));
    }
    const std::size_t batch = a->dim(0), m = a->dim(1), k = a->dim(2);
    const std::size_t n = transpose_b ? b->dim(1) : b->dim(2);
    auto out = result({batch, m, n}, {a, b});
    for (std::size_t s = 0; s < batch; ++s) {
      const T* ad = a->data.data() + s * m * k;
      const T* bd = b->data.data() + s * k * n;
      T* cd = out->data.data() + s * m * n;
      if (transpose_b) {
        gemm_bt_acc(ad, bd, cd, m, k, n);
      } else {
        gemm_acc(ad, bd, cd, m, k, n);
      }
    }
    if (out->requires_grad) {
      record({a, b}, out, [a, b, out, batch, m, k, n, transpose_b] {
        if (a->requires_grad) a->ensure_grad();
        if (b->requires_grad) b->ensure_grad();
        for (std::size_t s = 0; s < batch; ++s) {
          const T* ad = a->data.data() + s * m * k;
          const T* bd = b->data.data() + s * k * n;
          const T* g = out->grad.data() + s * m * n;
          if (transpose_b) {
            // C = A B^T: dA += dC B, dB += dC^T A
            if (a->requires_grad) gemm_acc(g, bd, a->grad.data() + s * m * k, m, n, k);
            if (b->requires_grad) gemm_at_acc(g, ad, b->grad.data() + s * k * n, m, n, k);
          } else {
            if (a->requires_grad) gemm_bt_acc(g, bd, a->grad.data() + s * m * k, m, n, k);
            if (b->requires_grad) gemm_at_acc(ad, g, b->grad.data() + s * k * n, m, k, n);
          }
        }
      });
    }
    return out;
  }

  // ----------------------------------------------------------- elementwise

  Var<T> add(const Var<T>& a, const Var<T>& b) {
    require_same_shape("add", a, b);
    auto out = result(a->shape, {a, b});
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] + b->data[i];
    if (out->requires_grad) {
      record({a, b}, out, [a, b, out] {
        for (const auto& x : {a, b}) {
          if (!x->requires_grad) continue;
          x->ensure_grad();
          for (std::size_t i = 0; i < out->size(); ++i) x->grad[i] += out->grad[i];
        }
      });
    }
    return out;
  }

  Var<T> mul(const Var<T>& a, const Var<T>& b) {
    require_same_shape("mul", a, b);
    auto out = result(a->shape, {a, b});
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] * b->data[i];
    if (out->requires_grad) {
      record({a, b}, out, [a, b, out] {
        if (a->requires_grad) {
          a->ensure_grad();
          for (std::size_t i = 0; i < out->size(); ++i) a->grad[i] += out->grad[i] * b->data[i];
        }
        if (b->requires_grad) {
          b->ensure_grad();
          for (std::size_t i = 0; i < out->size(); ++i) b->grad[i] += out->grad[i] * a->data[i];
        }
      });
    }
    return out;
  }

  Var<T> scale(const Var<T>& x, T factor) {
    auto out = result(x->shape, {x});
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = x->data[i] * factor;
    if (out->requires_grad) {
      record({x}, out, [x, out, factor] {
        x->ensure_grad();
        for (std::size_t i = 0; i < out->size(); ++i) x->grad[i] += out->grad[i] * factor;
      });
    }
    return out;
  }

  /// x + bias, with bias broadcast over every row of the last dimension.
  Var<T> add_bias(const Var<T>& x, const Var<T>& bias) {
    if (bias->rank() != 1 || bias->dim(0) != x->last_dim()) {
      throw DimensionError("add_bias: bias " + shape_string(bias->shape) + " does not fit " +
                           shape_string(x->shape));
    }
    const std::size_t n = x->last_dim(), rows = x->size() / n;
    auto out = result(x->shape, {x, bias});
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < n; ++j) out->data[r * n + j] = x->data[r * n + j] + bias->data[j];
    }
    if (out->requires_grad) {
      record({x, bias}, out, [x, bias, out, rows, n] {
        if (x->requires_grad) {
          x->ensure_grad();
          for (std::size_t i = 0; i < out->size(); ++i) x->grad[i] += out->grad[i];
        }
        if (bias->requires_grad) {
          bias->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < n; ++j) bias->grad[j] += out->grad[r * n + j];
          }
        }
      });
    }
    return out;
  }

  Var<T> relu(const Var<T>& x) {
    auto out = result(x->shape, {x});
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = x->data[i] > T{0} ? x->data[i] : T{0};
    if (out->requires_grad) {
      record({x}, out, [x, out] {
        x->ensure_grad();
        for (std::size_t i = 0; i < out->size(); ++i) {
          if (x->data[i] > T{0}) x->grad[i] += out->grad[i];
        }
      });
    }
    return out;
  }

  /// Inverted dropout. In eval mode, or with rate 0, returns `x` itself.
  Var<T> dropout(const Var<T>& x, double rate, bool training, Rng* rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
      throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) return x;
    if (rng == nullptr) throw UsageError("dropout in training mode needs a random generator");
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    std::vector<T> mask(x->size());
    for (auto& m : mask) m = rng->bernoulli(rate) ? T{0} : keep_scale;
    auto out = result(x->shape, {x});
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = x->data[i] * mask[i];
    if (out->requires_grad) {
      record({x}, out, [x, out, mask = std::move(mask)] {
        x->ensure_grad();
        for (std::size_t i = 0; i < out->size(); ++i) x->grad[i] += out->grad[i] * mask[i];
      });
    }
    return out;
  }

  /// Concatenates tensors along their last dimension. Leading dimensions
  /// must agree.
  Var<T> concat_last_dim(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw UsageError("concat_last_dim: no inputs");
    Shape lead(parts[0]->shape.begin(), parts[0]->shape.end() - 1);
    std::size_t width = 0;
    for (const auto& p : parts) {
      Shape pl(p->shape.begin(), p->shape.end() - 1);
      if (pl != lead) {
        throw DimensionError("concat_last_dim: " + shape_string(p->shape) + " does not match " +
                             shape_string(parts[0]->shape));
      }
      width += p->last_dim();
    }
    Shape shape = lead;
    shape.push_back(width);
    auto out = result(shape, parts);
    const std::size_t rows = out->size() / width;
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t w = p->last_dim();
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(p->data.data() + r * w, w, out->data.data() + r * width + offset);
      }
      offset += w;
    }
    if (out->requires_grad) {
      record(parts, out, [parts, out, rows, width] {
        std::size_t off = 0;
        for (const auto& p : parts) {
          const std::size_t w = p->last_dim();
          if (p->requires_grad) {
            p->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t j = 0; j < w; ++j) p->grad[r * w + j] += out->grad[r * width + off + j];
            }
          }
          off += w;
        }
      });
    }
    return out;
  }

  /// Columns [offset, offset + width) of the last dimension.
  Var<T> slice_last_dim(const Var<T>& x, std::size_t offset, std::size_t width) {
    const std::size_t full = x->last_dim();
    if (width == 0 || offset + width > full) {
      throw DimensionError("slice_last_dim: columns [" + std::to_string(offset) + ", " + std::to_string(offset + width) +
                           ") exceed " + shape_string(x->shape));
    }
    Shape shape = x->shape;
    shape.back() = width;
    auto out = result(shape, {x});
    const std::size_t rows = x->size() / full;
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(x->data.data() + r * full + offset, width, out->data.data() + r * width);
    }
    if (out->requires_grad) {
      record({x}, out, [x, out, rows, full, offset, width] {
        x->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < width; ++j) x->grad[r * full + offset + j] += out->grad[r * width + j];
        }
      });
    }
    return out;
  }

  /// Same values under a new shape of equal size.
  Var<T> reshape(const Var<T>& x, Shape shape) {
    if (shape_size(shape) != x->size()) {
      throw DimensionError("reshape: " + shape_string(x->shape) + " cannot become " + shape_string(shape));
    }
    auto out = result(std::move(shape), {x});
    out->data = x->data;
    if (out->requires_grad) {
      record({x}, out, [x, out] {
        x->ensure_grad();
        for (std::size_t i = 0; i < out->size(); ++i) x->grad[i] += out->grad[i];
      });
    }
    return out;
  }

  Var<T> sum(const Var<T>& x) {
    auto out = result({1}, {x});
    T acc{0};
    for (T v : x->data) acc += v;
    out->data[0] = acc;
    if (out->requires_grad) {
      record({x}, out, [x, out] {
        x->ensure_grad();
        for (auto& g : x->grad) g += out->grad[0];
      });
    }
    return out;
  }

  /// Sum of squared entries, skipping one row of a matrix when `skip_row`
  /// is given (used for the frozen padding embedding).
  Var<T> sum_squares(const Var<T>& x, std::optional<std::size_t> skip_row = std::nullopt) {
    const std::size_t width = x->last_dim();
    auto skipped = [&](std::size_t i) { return skip_row && i / width == *skip_row; };
    auto out = result({1}, {x});
    T acc{0};
    for (std::size_t i = 0; i < x->size(); ++i) {
      if (!skipped(i)) acc += x->data[i] * x->data[i];
    }
    out->data[0] = acc;
    if (out->requires_grad) {
      record({x}, out, [x, out, width, skip_row] {
        x->ensure_grad();
        for (std::size_t i = 0; i < x->size(); ++i) {
          if (skip_row && i / width == *skip_row) continue;
          x->grad[i] += T{2} * x->data[i] * out->grad[0];
        }
      });
    }
    return out;
  }

  // --------------------------------------------------------------- softmax

  /// Softmax over the last dimension with per-row max subtraction.
  Var<T> softmax_rows(const Var<T>& x) {
    const std::size_t n = x->last_dim(), rows = x->size() / n;
    auto out = result(x->shape, {x});
    for (std::size_t r = 0; r < rows; ++r) {
      const T* in = x->data.data() + r * n;
      T* y = out->data.data() + r * n;
      const T peak = *std::max_element(in, in + n);
      T total{0};
      for (std::size_t j = 0; j < n; ++j) {
        y[j] = std::exp(in[j] - peak);
        total += y[j];
      }
      for (std::size_t j = 0; j < n; ++j) y[j] /= total;
    }
    if (out->requires_grad) {
      record({x}, out, [x, out, rows, n] { softmax_backward(*x, *out, rows, n); });
    }
    return out;
  }

  /// Softmax over the last dimension of x[B x m x n] where key positions
  /// with mask.at(b, j) == false receive -inf (probability exactly zero).
  Var<T> masked_softmax(const Var<T>& x, const SeqMask& mask) {
    if (x->rank() != 3 || mask.batch != x->dim(0) || mask.length != x->dim(2)) {
      throw DimensionError("masked_softmax: mask [" + std::to_string(mask.batch) + "x" +
                           std::to_string(mask.length) + "] does not fit " + shape_string(x->shape));
    }
    const std::size_t batch = x->dim(0), m = x->dim(1), n = x->dim(2);
    for (std::size_t b = 0; b < batch; ++b) {
      if (mask.count(b) == 0) throw UsageError("masked_softmax: every position of sequence " + std::to_string(b) + " is masked");
    }
    auto out = result(x->shape, {x});
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < m; ++i) {
        const T* in = x->data.data() + (b * m + i) * n;
        T* y = out->data.data() + (b * m + i) * n;
        T peak = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
          if (mask.at(b, j)) peak = std::max(peak, in[j]);
        }
        T total{0};
        for (std::size_t j = 0; j < n; ++j) {
          y[j] = mask.at(b, j) ? std::exp(in[j] - peak) : T{0};
          total += y[j];
        }
        for (std::size_t j = 0; j < n; ++j) y[j] /= total;
      }
    }
    if (out->requires_grad) {
      record({x}, out, [x, out, batch, m, n] { softmax_backward(*x, *out, batch * m, n); });
    }
    return out;
  }

  // --------------------------------------------------------------- lookup

  /// Rows of `table` selected by `ids`, shape [ids.size() x width]. The
  /// gradient of `frozen_row`, when given, is never written.
  Var<T> gather_rows(const Var<T>& table, std::span<const std::size_t> ids,
                     std::optional<std::size_t> frozen_row = std::nullopt) {
    if (table->rank() != 2) throw DimensionError("gather_rows: table must be a matrix, got " + shape_string(table->shape));
    if (ids.empty()) throw UsageError("gather_rows: empty id list");
    const std::size_t rows = table->dim(0), width = table->dim(1);
    for (std::size_t id : ids) {
      if (id >= rows) {
        throw UsageError("gather_rows: id " + std::to_string(id) + " outside table of " + std::to_string(rows) + " rows");
      }
    }
    auto out = result({ids.size(), width}, {table});
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::copy_n(table->data.data() + ids[i] * width, width, out->data.data() + i * width);
    }
    if (out->requires_grad) {
      std::vector<std::size_t> kept(ids.begin(), ids.end());
      record({table}, out, [table, out, kept = std::move(kept), width, frozen_row] {
        table->ensure_grad();
        for (std::size_t i = 0; i < kept.size(); ++i) {
          if (frozen_row && kept[i] == *frozen_row) continue;
          for (std::size_t j = 0; j < width; ++j) table->grad[kept[i] * width + j] += out->grad[i * width + j];
        }
      });
    }
    return out;
  }

  // -------------------------------------------------------------- pooling

  /// Elementwise max over the valid positions of x[B x L x F] -> [B x F].
  Var<T> masked_max_pool(const Var<T>& x, const SeqMask& mask) {
    check_pool_shapes("masked_max_pool", x, mask);
    const std::size_t batch = x->dim(0), len = x->dim(1), feat = x->dim(2);
    auto out = result({batch, feat}, {x});
    std::vector<std::size_t> winner(batch * feat);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t f = 0; f < feat; ++f) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t arg = 0;
        for (std::size_t l = 0; l < len; ++l) {
          if (!mask.at(b, l)) continue;
          const T v = x->data[(b * len + l) * feat + f];
          if (v > best) {
            best = v;
            arg = l;
          }
        }
        out->data[b * feat + f] = best;
        winner[b * feat + f] = (b * len + arg) * feat + f;
      }
    }
    if (out->requires_grad) {
      record({x}, out, [x, out, winner = std::move(winner)] {
        x->ensure_grad();
        for (std::size_t i = 0; i < winner.size(); ++i) x->grad[winner[i]] += out->grad[i];
      });
    }
    return out;
  }

  /// Elementwise mean over the valid positions of x[B x L x F] -> [B x F].
  Var<T> masked_mean_pool(const Var<T>& x, const SeqMask& mask) {
    check_pool_shapes("masked_mean_pool", x, mask);
    const std::size_t batch = x->dim(0), len = x->dim(1), feat = x->dim(2);
    auto out = result({batch, feat}, {x});
    for (std::size_t b = 0; b < batch; ++b) {
      const T inv = T{1} / static_cast<T>(mask.count(b));
      for (std::size_t l = 0; l < len; ++l) {
        if (!mask.at(b, l)) continue;
        for (std::size_t f = 0; f < feat; ++f) out->data[b * feat + f] += x->data[(b * len + l) * feat + f];
      }
      for (std::size_t f = 0; f < feat; ++f) out->data[b * feat + f] *= inv;
    }
    if (out->requires_grad) {
      record({x}, out, [x, out, mask, batch, len, feat] {
        x->ensure_grad();
        for (std::size_t b = 0; b < batch; ++b) {
          const T inv = T{1} / static_cast<T>(mask.count(b));
          for (std::size_t l = 0; l < len; ++l) {
            if (!mask.at(b, l)) continue;
            for (std::size_t f = 0; f < feat; ++f) x->grad[(b * len + l) * feat + f] += out->grad[b * feat + f] * inv;
          }
        }
      });
    }
    return out;
  }

  // -------------------------------------------------------------- mixture

  /// out[b] = sum_e weights[b, e] * parts[e][b]; weights [B x E], each part [B x H].
  Var<T> weighted_sum(const Var<T>& weights, const std::vector<Var<T>>& parts) {
    if (weights->rank() != 2 || weights->dim(1) != parts.size()) {
      throw DimensionError("weighted_sum: weights " + shape_string(weights->shape) + " for " +
                           std::to_string(parts.size()) + " parts");
    }
    const std::size_t batch = weights->dim(0), experts = parts.size();
    for (const auto& p : parts) {
      if (p->rank() != 2 || p->dim(0) != batch || p->shape != parts[0]->shape) {
        throw DimensionError("weighted_sum: part " + shape_string(p->shape) + " does not match batch " +
                             std::to_string(batch));
      }
    }
    const std::size_t width = parts[0]->dim(1);
    std::vector<Var<T>> inputs = parts;
    inputs.push_back(weights);
    auto out = result({batch, width}, inputs);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t e = 0; e < experts; ++e) {
        const T w = weights->data[b * experts + e];
        for (std::size_t h = 0; h < width; ++h) out->data[b * width + h] += w * parts[e]->data[b * width + h];
      }
    }
    if (out->requires_grad) {
      record(inputs, out, [weights, parts, out, batch, experts, width] {
        if (weights->requires_grad) weights->ensure_grad();
        for (std::size_t e = 0; e < experts; ++e) {
          const auto& p = parts[e];
          if (p->requires_grad) p->ensure_grad();
          for (std::size_t b = 0; b < batch; ++b) {
            const T w = weights->data[b * experts + e];
            T dw{0};
            for (std::size_t h = 0; h < width; ++h) {
              const T g = out->grad[b * width + h];
              dw += g * p->data[b * width + h];
              if (p->requires_grad) p->grad[b * width + h] += g * w;
            }
            if (weights->requires_grad) weights->grad[b * experts + e] += dw;
          }
        }
      });
    }
    return out;
  }

  // ----------------------------------------------------------------- loss

  /// Mean over rows of -log softmax(logits)[label], via log-sum-exp.
  Var<T> cross_entropy(const Var<T>& logits, std::span<const std::size_t> labels) {
    if (logits->rank() != 2 || logits->dim(0) != labels.size()) {
      throw DimensionError("cross_entropy: logits " + shape_string(logits->shape) + " for " +
                           std::to_string(labels.size()) + " labels");
    }
    const std::size_t rows = logits->dim(0), classes = logits->dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
      if (labels[r] >= classes) {
        throw DataError("cross_entropy: label " + std::to_string(labels[r]) + " at row " + std::to_string(r) +
                        " is outside [0, " + std::to_string(classes) + ")");
      }
    }
    std::vector<T> probs(logits->size());
    T total{0};
    for (std::size_t r = 0; r < rows; ++r) {
      const T* z = logits->data.data() + r * classes;
      const T peak = *std::max_element(z, z + classes);
      T denom{0};
      for (std::size_t c = 0; c < classes; ++c) denom += std::exp(z[c] - peak);
      const T log_denom = std::log(denom) + peak;
      for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] = std::exp(z[c] - log_denom);
      total += log_denom - z[labels[r]];
    }
    auto out = result({1}, {logits});
    out->data[0] = total / static_cast<T>(rows);
    if (out->requires_grad) {
      std::vector<std::size_t> kept(labels.begin(), labels.end());
      record({logits}, out, [logits, out, probs = std::move(probs), kept = std::move(kept), rows, classes] {
        logits->ensure_grad();
        const T g = out->grad[0] / static_cast<T>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < classes; ++c) {
            const T target = c == kept[r] ? T{1} : T{0};
            logits->grad[r * classes + c] += g * (probs[r * classes + c] - target);
          }
        }
      });
    }
    return out;
  }

 private:
  Var<T> result(Shape shape, const std::vector<Var<T>>& inputs) {
    auto out = zeros_var<T>(std::move(shape));
    if (record_) {
      for (const auto& in : inputs) {
        if (in->requires_grad) {
          out->requires_grad = true;
          break;
        }
      }
    }
    return out;
  }

  void record(std::vector<Var<T>> inputs, const Var<T>& out, std::function<void()> rule) {
    nodes_.push_back(Node{std::move(inputs), out, std::move(rule)});
  }

  static void require_same_shape(const char* op, const Var<T>& a, const Var<T>& b) {
    if (a->shape != b->shape) {
      throw DimensionError(std::string(op) + ": shapes " + shape_string(a->shape) + " and " +
                           shape_string(b->shape) + " differ");
    }
  }

  static void check_pool_shapes(const char* op, const Var<T>& x, const SeqMask& mask) {
    if (x->rank() != 3 || mask.batch != x->dim(0) || mask.length != x->dim(1)) {
      throw DimensionError(std::string(op) + ": mask [" + std::to_string(mask.batch) + "x" +
                           std::to_string(mask.length) + "] does not fit " + shape_string(x->shape));
    }
    for (std::size_t b = 0; b < mask.batch; ++b) {
      if (mask.count(b) == 0) throw UsageError(std::string(op) + ": sequence " + std::to_string(b) + " has no valid positions");
    }
  }

  // The three kernels below accumulate into c and keep the innermost loop
  // contiguous so it vectorises.

  // c[m x n] += a[m x k] * b[k x n]
  static void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = c + i * n;
      for (std::size_t t = 0; t < k; ++t) {
        const T av = a[i * k + t];
        const T* brow = b + t * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }

  // c[k x n] += a[m x k]^T * b[m x n]
  static void gemm_at_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
      const T* brow = b + i * n;
      for (std::size_t t = 0; t < k; ++t) {
        const T av = a[i * k + t];
        T* crow = c + t * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }

  // c[m x n] += a[m x k] * b[n x k]^T
  static void gemm_bt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    std::vector<T> bt(k * n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t t = 0; t < k; ++t) bt[t * n + j] = b[j * k + t];
    }
    gemm_acc(a, bt.data(), c, m, k, n);
  }

  static void softmax_backward(Tensor<T>& x, const Tensor<T>& y, std::size_t rows, std::size_t n) {
    x.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* yr = y.data.data() + r * n;
      const T* gr = y.grad.data() + r * n;
      T dot{0};
      for (std::size_t j = 0; j < n; ++j) dot += yr[j] * gr[j];
      for (std::size_t j = 0; j < n; ++j) x.grad[r * n + j] += yr[j] * (gr[j] - dot);
    }
  }

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace desk
