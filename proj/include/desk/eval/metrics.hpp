#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "desk/error.hpp"

namespace desk {

/// counts[t * C + p]: examples of true class t predicted as p.
struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<std::size_t> counts;

  explicit ConfusionMatrix(std::size_t classes = 0) : num_classes(classes), counts(classes * classes, 0) {}

  std::size_t at(std::size_t truth, std::size_t predicted) const { return counts.at(truth * num_classes + predicted); }
  std::size_t total() const {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    return n;
  }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct MetricsReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  ConfusionMatrix confusion;

  std::size_t num_classes() const noexcept { return confusion.num_classes; }
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Accuracy and macro F1 over all `num_classes` classes. A class whose
/// precision or recall denominator is zero scores 0 for that quantity.
inline MetricsReport metrics(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                             std::size_t num_classes) {
  if (preds.size() != labels.size()) {
    throw UsageError("metrics: " + std::to_string(preds.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  if (preds.empty()) throw UsageError("metrics: no examples");
  if (num_classes == 0) throw UsageError("metrics: zero classes");
  MetricsReport r;
  r.confusion = ConfusionMatrix(num_classes);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= num_classes || labels[i] >= num_classes) {
      throw UsageError("metrics: class index out of range at position " + std::to_string(i));
    }
    ++r.confusion.counts[labels[i] * num_classes + preds[i]];
    correct += preds[i] == labels[i];
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());

  std::vector<std::size_t> predicted(num_classes, 0), actual(num_classes, 0);
  for (std::size_t t = 0; t < num_classes; ++t) {
    for (std::size_t p = 0; p < num_classes; ++p) {
      actual[t] += r.confusion.at(t, p);
      predicted[p] += r.confusion.at(t, p);
    }
  }
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double tp = static_cast<double>(r.confusion.at(c, c));
    const double p = predicted[c] ? tp / static_cast<double>(predicted[c]) : 0.0;
    const double rc = actual[c] ? tp / static_cast<double>(actual[c]) : 0.0;
    const double f = p + rc > 0.0 ? 2.0 * p * rc / (p + rc) : 0.0;
    r.precision.push_back(p);
    r.recall.push_back(rc);
    r.f1.push_back(f);
    f1_sum += f;
  }
  r.macro_f1 = f1_sum / static_cast<double>(num_classes);
  return r;
}

}  // namespace desk
