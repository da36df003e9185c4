#pragma once

#include <span>

#include "desk/error.hpp"
#include "desk/model/desk_model.hpp"
#include "desk/numcore/graph.hpp"

namespace desk {

/// Mean cross-entropy of `logits` against `labels` plus
/// lambda * (sum of squared entries of every parameter), frozen rows excluded.
template <typename T>
Var<T> compute_loss(Graph<T>& g, const Var<T>& logits, std::span<const std::size_t> labels,
                    std::span<const Parameter<T>> params, double lambda_l2) {
  if (lambda_l2 < 0.0) throw ConfigError("lambda_l2 must be non-negative");
  auto loss = g.cross_entropy(logits, labels);
  if (lambda_l2 == 0.0 || params.empty()) return loss;
  Var<T> penalty;
  for (const auto& p : params) {
    auto sq = g.sum_squares(p.value, p.frozen_row);
    penalty = penalty ? g.add(penalty, sq) : sq;
  }
  return g.add(loss, g.scale(penalty, static_cast<T>(lambda_l2)));
}

}  // namespace desk
