#include <gtest/gtest.h>

#include <numeric>
#include <vector>

#include "desk/eval/ablation.hpp"
#include "desk/eval/evaluate.hpp"
#include "desk/eval/metrics.hpp"
#include "desk/textpipe/synth.hpp"

namespace desk {
namespace {

using Labels = std::vector<std::size_t>;

// Independent macro-F1: explicit confusion-matrix loops, F1 via TP/FP/FN.
struct BruteForce {
  double accuracy;
  double macro_f1;
};

BruteForce brute_force(const Labels& preds, const Labels& labels, std::size_t c) {
  std::vector<std::vector<long>> cm(c, std::vector<long>(c, 0));
  for (std::size_t i = 0; i < preds.size(); ++i) cm[labels[i]][preds[i]] += 1;
  long correct = 0;
  for (std::size_t k = 0; k < c; ++k) correct += cm[k][k];
  double f1_total = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    long tp = cm[k][k], fp = 0, fn = 0;
    for (std::size_t o = 0; o < c; ++o) {
      if (o == k) continue;
      fp += cm[o][k];
      fn += cm[k][o];
    }
    if (tp > 0) f1_total += 2.0 * tp / (2.0 * tp + fp + fn);
  }
  return {static_cast<double>(correct) / static_cast<double>(preds.size()), f1_total / static_cast<double>(c)};
}

TEST(Metrics, PerfectPredictions) {
  for (std::size_t c : {2u, 3u, 7u}) {
    Labels y;
    for (std::size_t i = 0; i < 3 * c; ++i) y.push_back(i % c);
    const auto r = metrics(y, y, c);
    EXPECT_EQ(r.accuracy, 1.0);
    EXPECT_EQ(r.macro_f1, 1.0);
  }
}

TEST(Metrics, BinaryAllWrong) {
  const auto r = metrics(Labels{1, 0, 0, 1}, Labels{0, 1, 1, 0}, 2);
  EXPECT_EQ(r.accuracy, 0.0);
  EXPECT_EQ(r.macro_f1, 0.0);
}

TEST(Metrics, HandBuiltThreeClassCase) {
  const auto r = metrics(Labels{0, 1, 1, 1}, Labels{0, 0, 1, 2}, 3);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_NEAR(r.f1[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.f1[1], 0.5, 1e-12);
  EXPECT_EQ(r.f1[2], 0.0);
  EXPECT_NEAR(r.macro_f1, 0.3889, 1e-4);
  EXPECT_EQ(r.confusion.at(0, 1), 1u);
  EXPECT_EQ(r.confusion.total(), 4u);
}

TEST(Metrics, AbsentClassCountsInMacroAverage) {
  const auto r = metrics(Labels{0, 1}, Labels{0, 1}, 4);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.macro_f1, 0.5);
}

TEST(Metrics, UsageErrors) {
  EXPECT_THROW(metrics(Labels{0}, Labels{0, 1}, 2), UsageError);
  EXPECT_THROW(metrics(Labels{}, Labels{}, 2), UsageError);
  EXPECT_THROW(metrics(Labels{2}, Labels{0}, 2), UsageError);
}

TEST(Metrics, AgreesWithBruteForceOnRandomInstances) {
  Rng rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t c = 2 + rng.below(5), n = 1 + rng.below(60);
    Labels p(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.below(c);
      y[i] = rng.below(c);
    }
    const auto r = metrics(p, y, c);
    const auto b = brute_force(p, y, c);
    ASSERT_EQ(r.accuracy, b.accuracy);
    ASSERT_NEAR(r.macro_f1, b.macro_f1, 1e-9);
    ASSERT_NEAR(r.macro_f1, std::accumulate(r.f1.begin(), r.f1.end(), 0.0) / c, 1e-15);
  }
}

TEST(Metrics, MacroF1InvariantUnderClassPermutation) {
  Rng rng(78);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = 2 + rng.below(5), n = 1 + rng.below(40);
    Labels p(n), y(n), perm(c);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.below(c);
      y[i] = rng.below(c);
    }
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    Labels pp(n), yp(n);
    for (std::size_t i = 0; i < n; ++i) {
      pp[i] = perm[p[i]];
      yp[i] = perm[y[i]];
    }
    EXPECT_NEAR(metrics(p, y, c).macro_f1, metrics(pp, yp, c).macro_f1, 1e-12);
  }
}

TEST(Render, RecordRoundTripsAndTableIsAligned) {
  const auto r = metrics(Labels{0, 1, 1, 1}, Labels{0, 0, 1, 2}, 3);
  const auto rec = parse_record(render_record(r));
  EXPECT_EQ(rec.at("accuracy"), "0.5");
  EXPECT_EQ(std::stod(rec.at("macro_f1")), r.macro_f1);
  EXPECT_EQ(rec.at("confusion.row0"), "1 1 0");
  EXPECT_EQ(rec.at("classes"), "3");
  const auto table = render_table("variant", {{"FULL", r.accuracy, r.macro_f1},
                                                {"-gate", 0.25, 1.0},
                                                {"-s", r.accuracy, r.macro_f1},
                                                {"-ss", 1.0, 0.0}});
  std::istringstream in(table);
  std::string line;
  std::size_t lines = 0, width = 0;
  while (std::getline(in, line)) {
    if (lines++ == 0) {
      width = line.size();
      EXPECT_EQ(line, "variant  Accuracy  Macro F1");
    }
    EXPECT_EQ(line.size(), width) << line;
  }
  EXPECT_EQ(lines, 5u);
  EXPECT_THROW(parse_record("no equals sign"), ParseError);
}

ModelConfig small_config() {
  ModelConfig c;
  c.word_dim = 12;
  c.marker_dim = 4;
  c.num_heads = 2;
  c.ff1_dim = 12;
  c.ff2_hidden = 12;
  c.ff2_out = 8;
  c.num_experts = 2;
  return c;
}

TrainConfig quick_train() {
  TrainConfig t;
  t.batch_size = 16;
  t.max_epochs = 4;
  t.seed = 3;
  return t;
}

TEST(Evaluate, ComposesPredictAndMetrics) {
  const auto bundle = synth_generate(2, 50, 40);
  Rng rng(1);
  auto model = DeskModel<float>::create(small_config(), bundle.vocab.size(), rng);
  const auto a = evaluate(model, bundle.depression, Task::depression, 7);
  const auto b = evaluate(model, bundle.depression, Task::depression, 64);
  EXPECT_EQ(a, b);
  std::vector<std::size_t> idx(bundle.depression.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto preds = predict(model, make_batch(bundle.depression, idx), Task::depression);
  EXPECT_EQ(a, metrics(preds, bundle.depression.labels(), 2));
  EXPECT_THROW(evaluate(model, TaskDataset{Task::depression, {}, 2}, Task::depression), UsageError);
}

TEST(Evaluate, SingleCorrectExample) {
  Rng rng(2);
  auto model = DeskModel<float>::create(small_config(), 10, rng);
  TaskDataset one{Task::sentiment, {{{3, 4}, {Marker::not_in_lexicon, Marker::in_lexicon}, 0}}, 2};
  one.examples[0].label = predict(model, make_batch(one, std::vector<std::size_t>{0}), Task::sentiment)[0];
  EXPECT_EQ(evaluate(model, one, Task::sentiment).accuracy, 1.0);
}

TEST(Ablation, VariantSetups) {
  const ModelConfig m = small_config();
  const TrainConfig t = quick_train();
  EXPECT_EQ(variant_setup(AblationVariant::full, m, t).model, m);
  EXPECT_EQ(variant_setup(AblationVariant::no_gate, m, t).model.gating, Gating::uniform);
  const auto s = variant_setup(AblationVariant::no_sentiment_data, m, t);
  EXPECT_EQ(s.train.ratio.sentiment, 0.0);
  EXPECT_TRUE(s.markers_enabled);
  const auto ss = variant_setup(AblationVariant::no_sharing, m, t);
  EXPECT_EQ(ss.train.ratio.sentiment, 0.0);
  EXPECT_FALSE(ss.markers_enabled);
  for (auto v : kAllVariants) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("nope"), ConfigError);
}

TEST(Ablation, FullReproducesFitThenEvaluate) {
  const auto bundle = synth_generate(4, 80, 40, SynthSignal{.strength = 0.9});
  const auto data = synthetic_experiment<float>(bundle, 0.25, 4);
  const auto m = small_config();
  const auto t = quick_train();
  const auto run = run_ablation(AblationVariant::full, data, m, t);
  auto model = build_model(m, data, t.seed);
  fit(model, data.sentiment, data.depression_train, t);
  EXPECT_EQ(run.test, evaluate(model, data.depression_test, Task::depression));
  EXPECT_EQ(run.model.snapshot(), model.snapshot());
}

TEST(Ablation, NoGateMatchesFullWithOneExpert) {
  const auto bundle = synth_generate(5, 60, 40, SynthSignal{.strength = 0.9});
  const auto data = synthetic_experiment<float>(bundle, 0.25, 5);
  auto m = small_config();
  m.num_experts = 1;
  const auto full = run_ablation(AblationVariant::full, data, m, quick_train());
  const auto no_gate = run_ablation(AblationVariant::no_gate, data, m, quick_train());
  EXPECT_EQ(full.test, no_gate.test);
}

TEST(Ablation, NoSharingStillLearnsSeparableData) {
  const auto bundle = synth_generate(6, 300, 30, SynthSignal{.strength = 1.0, .planted_fraction = 0.2});
  const auto data = synthetic_experiment<float>(bundle, 0.2, 6);
  auto t = quick_train();
  t.max_epochs = 15;
  t.learning_rate = 3e-3;
  const auto r = run_ablation(AblationVariant::no_sharing, data, small_config(), t);
  EXPECT_GT(r.test.accuracy, 0.5);
}

TEST(Ablation, NoSharingClearsEveryMarker) {
  const auto bundle = synth_generate(7, 40, 30, SynthSignal{.planted_fraction = 0.3});
  std::size_t marked = 0;
  for (const auto& ex : bundle.depression.examples) {
    for (auto m : ex.markers) marked += m == Marker::in_lexicon;
  }
  ASSERT_GT(marked, 0u);
  for (const auto& ex : bundle.depression.without_markers().examples) {
    for (auto m : ex.markers) EXPECT_EQ(m, Marker::not_in_lexicon);
  }
}

}  // namespace
}  // namespace desk
