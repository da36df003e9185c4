#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "desk/error.hpp"
#include "desk/numcore/rng.hpp"
#include "desk/textpipe/dataset.hpp"
#include "desk/train/config.hpp"

namespace desk {

struct ScheduledBatch {
  Task task = Task::depression;
  std::vector<std::size_t> indices;  // into that task's dataset
};

struct BatchSchedule {
  std::vector<ScheduledBatch> batches;

  std::size_t count(Task t) const {
    std::size_t n = 0;
    for (const auto& b : batches) n += b.task == t;
    return n;
  }
  std::size_t size() const noexcept { return batches.size(); }
};

/// Batches needed for one pass over `n` examples.
inline std::size_t batches_per_pass(std::size_t n, std::size_t batch_size) { return (n + batch_size - 1) / batch_size; }

/// Per-epoch batch counts {sentiment, depression}. With batches_per_epoch
/// set, that total is split by the ratio; otherwise depression makes one
/// pass and sentiment is scaled from it (or makes one pass itself when the
/// depression component is 0). Every nonzero component gets at least one.
inline std::pair<std::size_t, std::size_t> task_batch_counts(std::size_t sentiment_size, std::size_t depression_size,
                                                             const TrainConfig& cfg) {
  const TaskRatio& r = cfg.ratio;
  auto at_least_one = [](double share, double component) {
    if (component == 0.0) return std::size_t{0};
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(share)));
  };
  if (cfg.batches_per_epoch > 0) {
    const double total = static_cast<double>(cfg.batches_per_epoch);
    const std::size_t s = at_least_one(total * r.sentiment / (r.sentiment + r.depression), r.sentiment);
    if (r.depression == 0.0) return {s, 0};
    return {s, cfg.batches_per_epoch > s ? cfg.batches_per_epoch - s : 1};
  }
  if (r.depression == 0.0) return {batches_per_pass(sentiment_size, cfg.batch_size), 0};
  const std::size_t d = batches_per_pass(depression_size, cfg.batch_size);
  return {at_least_one(static_cast<double>(d) * r.sentiment / r.depression, r.sentiment), d};
}

namespace detail {

/// Cuts `count` batches from repeated shuffled passes over [0, n).
inline void draw_batches(Task task, std::size_t n, std::size_t count, std::size_t batch_size, Rng& rng,
                         std::vector<ScheduledBatch>& out) {
  std::vector<std::size_t> order(n);
  std::size_t pos = n;
  for (std::size_t b = 0; b < count; ++b) {
    if (pos == n) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(order);
      pos = 0;
    }
    const std::size_t end = std::min(n, pos + batch_size);
    out.push_back({task, std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                                  order.begin() + static_cast<std::ptrdiff_t>(end))});
    pos = end;
  }
}

}  // namespace detail

inline BatchSchedule schedule_epoch(const TaskDataset& sentiment, const TaskDataset& depression, const TrainConfig& cfg,
                                    Rng& rng) {
  cfg.validate();
  if (cfg.ratio.sentiment > 0.0 && sentiment.examples.empty()) {
    throw ConfigError("ratio gives sentiment " + format_exact(cfg.ratio.sentiment) + " but the sentiment dataset is empty");
  }
  if (cfg.ratio.depression > 0.0 && depression.examples.empty()) {
    throw ConfigError("ratio gives depression " + format_exact(cfg.ratio.depression) +
                      " but the depression dataset is empty");
  }
  const auto [n_sent, n_dep] = task_batch_counts(sentiment.size(), depression.size(), cfg);
  BatchSchedule s;
  s.batches.reserve(n_sent + n_dep);
  detail::draw_batches(Task::depression, depression.size(), n_dep, cfg.batch_size, rng, s.batches);
  detail::draw_batches(Task::sentiment, sentiment.size(), n_sent, cfg.batch_size, rng, s.batches);
  rng.shuffle(s.batches);
  return s;
}

}  // namespace desk
