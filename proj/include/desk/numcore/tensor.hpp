#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "desk/error.hpp"

namespace desk {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

/// Dense row-major tensor with an optional gradient slot.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty when no gradient has been accumulated
  bool requires_grad = false;

  Tensor() = default;
  Tensor(Shape s, std::vector<T> values, bool trainable = false)
      : shape(std::move(s)), data(std::move(values)), requires_grad(trainable) {
    for (std::size_t d : shape) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
    }
    if (shape_size(shape) != data.size()) {
      throw DimensionError("shape " + shape_string(shape) + " does not match " +
                           std::to_string(data.size()) + " values");
    }
  }

  static Tensor zeros(Shape s, bool trainable = false) {
    const std::size_t n = shape_size(s);
    return Tensor(std::move(s), std::vector<T>(n, T{0}), trainable);
  }

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t last_dim() const { return shape.back(); }

  bool has_grad() const noexcept { return !grad.empty(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T{0});
  }
  void clear_grad() { grad.clear(); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  T& at(std::size_t r, std::size_t c) { return data[r * shape.back() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data[r * shape.back() + c]; }

  T item() const {
    if (data.size() != 1) throw UsageError("item() on tensor of shape " + shape_string(shape));
    return data[0];
  }
};

/// Shared handle; graph nodes and models refer to tensors through it.
template <typename T>
using Var = std::shared_ptr<Tensor<T>>;

template <typename T>
Var<T> make_var(Shape shape, std::vector<T> data, bool requires_grad = false) {
  return std::make_shared<Tensor<T>>(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
Var<T> zeros_var(Shape shape, bool requires_grad = false) {
  return std::make_shared<Tensor<T>>(Tensor<T>::zeros(std::move(shape), requires_grad));
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

/// Validity mask over [batch x length] positions; true marks a real token.
struct SeqMask {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<unsigned char> valid;

  SeqMask() = default;
  SeqMask(std::size_t b, std::size_t l, bool fill = true) : batch(b), length(l), valid(b * l, fill ? 1 : 0) {}

  bool at(std::size_t b, std::size_t l) const { return valid[b * length + l] != 0; }
  void set(std::size_t b, std::size_t l, bool v) { valid[b * length + l] = v ? 1 : 0; }
  std::size_t count(std::size_t b) const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < length; ++l) n += valid[b * length + l];
    return n;
  }
};

}  // namespace desk
