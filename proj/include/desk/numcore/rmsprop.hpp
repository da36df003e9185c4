#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "desk/error.hpp"
#include "desk/numcore/tensor.hpp"

namespace desk {

/// Per-parameter running mean of squared gradients plus hyperparameters.
template <typename T>
struct RmspropState {
  std::vector<std::vector<T>> accumulators;
  double decay_rho = 0.9;
  double epsilon = 1e-8;
  double learning_rate = 1e-3;

  void validate() const {
    if (!(decay_rho > 0.0 && decay_rho < 1.0)) throw ConfigError("rmsprop decay rho must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("rmsprop epsilon must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  }
};

/// acc <- rho*acc + (1-rho)*g^2; param <- param - lr*g/(sqrt(acc)+eps).
/// Clears every gradient afterwards. Accumulators are created on the first
/// call and must then keep matching the parameter list.
template <typename T>
void rmsprop_step(std::span<const Var<T>> params, RmspropState<T>& state) {
  state.validate();
  if (state.accumulators.empty()) {
    state.accumulators.reserve(params.size());
    for (const auto& p : params) state.accumulators.emplace_back(p->size(), T{0});
  }
  if (state.accumulators.size() != params.size()) {
    throw UsageError("rmsprop_step: state tracks " + std::to_string(state.accumulators.size()) +
                     " tensors but " + std::to_string(params.size()) + " were given");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (!p->has_grad()) throw UsageError("rmsprop_step: parameter " + std::to_string(i) + " has no gradient");
    if (state.accumulators[i].size() != p->size()) {
      throw UsageError("rmsprop_step: parameter " + std::to_string(i) + " changed size");
    }
  }
  const T rho = static_cast<T>(state.decay_rho);
  const T lr = static_cast<T>(state.learning_rate);
  const T eps = static_cast<T>(state.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& acc = state.accumulators[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const T g = p.grad[j];
      acc[j] = rho * acc[j] + (T{1} - rho) * g * g;
      p.data[j] -= lr * g / (std::sqrt(acc[j]) + eps);
    }
    p.clear_grad();
  }
}

}  // namespace desk
