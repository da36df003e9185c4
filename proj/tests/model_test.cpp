#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "desk/model/checkpoint.hpp"
#include "desk/model/desk_model.hpp"
#include "desk/train/loss.hpp"
#include "support/files.hpp"
#include "support/oracles.hpp"

namespace desk {
namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.word_dim = 4;
  c.marker_dim = 2;
  c.num_heads = 2;
  c.ff1_dim = 5;
  c.ff2_hidden = 4;
  c.ff2_out = 3;
  c.num_experts = 2;
  c.classes_per_task = {2, 3};
  c.dropout = 0.0;
  return c;
}

Example example(std::vector<std::size_t> ids, std::vector<int> bits, std::size_t label = 0) {
  Example ex;
  ex.ids = std::move(ids);
  for (int b : bits) ex.markers.push_back(b ? Marker::in_lexicon : Marker::not_in_lexicon);
  ex.label = label;
  return ex;
}

SequenceBatch batch_of(const std::vector<Example>& examples) {
  std::vector<const Example*> ptrs;
  for (const auto& e : examples) ptrs.push_back(&e);
  return make_batch(ptrs);
}

Var<double> random_var(Rng& rng, Shape shape) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return make_var<double>(std::move(shape), std::move(v));
}

TEST(EmbedWithMarkers, DefaultDimensionsAndConcatStructure) {
  Rng rng(1);
  const ModelConfig cfg;  // defaults: 300-d words, 100-d markers
  auto table = random_embeddings<float>(6, cfg.word_dim, rng);
  auto markers = make_var<float>({2, 100}, std::vector<float>(200, 0.0f));
  for (std::size_t j = 0; j < 100; ++j) markers->at(1, j) = 1.0f + static_cast<float>(j);
  Graph<float> g(false);
  const std::vector<std::size_t> ids{3, 3, 3};
  const std::vector<Marker> bits{Marker::not_in_lexicon, Marker::not_in_lexicon, Marker::in_lexicon};
  auto x = embed_with_markers(g, ids, bits, table, markers);
  ASSERT_EQ(x->shape, (Shape{3, 400}));
  EXPECT_EQ(cfg.model_dim(), 400u);
  for (std::size_t j = 0; j < 400; ++j) {
    EXPECT_EQ(x->at(0, j), x->at(1, j));
    if (j < 300) {
      EXPECT_EQ(x->at(0, j), x->at(2, j));
    } else {
      EXPECT_NE(x->at(0, j), x->at(2, j));
    }
  }
  const std::vector<Marker> short_bits{Marker::in_lexicon};
  EXPECT_THROW(embed_with_markers(g, ids, short_bits, table, markers), UsageError);
}

TEST(Attention, SingletonSequenceReturnsValueRow) {
  Rng rng(2);
  Graph<double> g(false);
  auto q = random_var(rng, {1, 1, 4});
  auto k = random_var(rng, {1, 1, 4});
  auto v = random_var(rng, {1, 1, 4});
  auto out = attention(g, q, k, v, AttentionScale::paper_d1, SeqMask(1, 1));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(out->data[j], v->data[j]);
}

TEST(Attention, ZeroQueryAveragesUnmaskedValues) {
  Rng rng(3);
  Graph<double> g(false);
  auto q = zeros_var<double>({1, 3, 2});
  auto k = random_var(rng, {1, 3, 2});
  auto v = random_var(rng, {1, 3, 2});
  SeqMask mask(1, 3);
  mask.set(0, 2, false);
  auto out = attention(g, q, k, v, AttentionScale::sqrt_d1, mask);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_NEAR(out->data[i * 2 + j], (v->data[j] + v->data[2 + j]) / 2.0, 1e-15);
    }
  }
  EXPECT_THROW(attention(g, q, k, v, AttentionScale::paper_d1, SeqMask(1, 3, false)), UsageError);
}

TEST(Attention, MatchesLoopOracle) {
  Rng rng(4);
  Graph<double> g(false);
  for (auto mode : {AttentionScale::paper_d1, AttentionScale::sqrt_d1}) {
    auto q = random_var(rng, {1, 3, 4});
    auto k = random_var(rng, {1, 3, 4});
    auto v = random_var(rng, {1, 3, 4});
    auto out = attention(g, q, k, v, mode, SeqMask(1, 3));
    const double denom = mode == AttentionScale::paper_d1 ? 4.0 : 2.0;
    for (std::size_t i = 0; i < 3; ++i) {
      double w[3], total = 0.0;
      for (std::size_t j = 0; j < 3; ++j) {
        double s = 0.0;
        for (std::size_t t = 0; t < 4; ++t) s += q->data[i * 4 + t] * k->data[j * 4 + t];
        w[j] = std::exp(s / denom);
        total += w[j];
      }
      for (std::size_t c = 0; c < 4; ++c) {
        double expect = 0.0;
        for (std::size_t j = 0; j < 3; ++j) expect += w[j] / total * v->data[j * 4 + c];
        EXPECT_NEAR(out->data[i * 4 + c], expect, 1e-6);
      }
    }
  }
}

TEST(Attention, ScaleModesAgreeWhenHeadDimIsOne) {
  ModelConfig a = tiny_config();
  a.word_dim = 1;
  a.marker_dim = 1;
  a.num_heads = 2;  // head dim 1
  ModelConfig b = a;
  b.attention_scale = AttentionScale::sqrt_d1;
  Rng r1(5), r2(5);
  auto ma = DeskModel<double>::create(a, 10, r1);
  auto mb = DeskModel<double>::create(b, 10, r2);
  const std::vector<Example> ex{example({2, 3, 4}, {0, 1, 0}), example({5, 6}, {1, 0})};
  Graph<double> g(false);
  EXPECT_EQ(forward(g, ma, batch_of(ex), Task::depression)->data,
            forward(g, mb, batch_of(ex), Task::depression)->data);
}

TEST(Expert, ConstantSequencePoolsAgree) {
  Rng rng(6);
  auto model = DeskModel<double>::create(tiny_config(), 10, rng);
  const std::vector<Example> ex{example({4, 4, 4, 4}, {1, 1, 1, 1}), example({7, 7, 0}, {0, 0, 0})};
  auto batch = batch_of(ex);
  batch.mask.set(1, 2, false);
  Graph<double> g(false);
  auto x = g.reshape(embed_with_markers(g, batch.ids, batch.markers, model.embedding(), model.markers()),
                     {2, 4, model.config().model_dim()});
  ExpertTrace<double> trace;
  expert_forward(g, model.experts()[0], model.config(), x, batch.mask, {}, &trace);
  const std::size_t f = model.config().ff1_dim;
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t j = 0; j < f; ++j) {
      EXPECT_NEAR(trace.pooled->at(b, j), trace.pooled->at(b, f + j), 1e-12);
    }
  }
}

TEST(Expert, SingleTokenPoolIsDuplicatedRow) {
  Rng rng(7);
  auto model = DeskModel<double>::create(tiny_config(), 10, rng);
  const std::vector<Example> ex{example({3}, {1})};
  auto batch = batch_of(ex);
  Graph<double> g(false);
  auto x = g.reshape(embed_with_markers(g, batch.ids, batch.markers, model.embedding(), model.markers()),
                     {1, 1, model.config().model_dim()});
  ExpertTrace<double> trace;
  expert_forward(g, model.experts()[1], model.config(), x, batch.mask, {}, &trace);
  const std::size_t f = model.config().ff1_dim;
  for (std::size_t j = 0; j < f; ++j) EXPECT_EQ(trace.pooled->data[j], trace.pooled->data[f + j]);
}

TEST(Expert, NoDropoutMeansTrainingEqualsEval) {
  Rng rng(8);
  auto model = DeskModel<double>::create(tiny_config(), 10, rng);
  const std::vector<Example> ex{example({1, 2, 3}, {0, 1, 0})};
  Graph<double> g(false);
  Rng drop(1);
  EXPECT_EQ(forward(g, model, batch_of(ex), Task::sentiment, {true, &drop})->data,
            forward(g, model, batch_of(ex), Task::sentiment)->data);
}

TEST(Gate, ZeroWeightsAreUniformAndSingleExpertIsOne) {
  Rng rng(9);
  auto cfg = tiny_config();
  cfg.num_experts = 3;
  auto model = DeskModel<double>::create(cfg, 10, rng);
  std::fill(model.gate(Task::depression).weight->data.begin(), model.gate(Task::depression).weight->data.end(), 0.0);
  auto x = random_var(rng, {2, 3, cfg.model_dim()});
  Graph<double> g(false);
  auto w = gate_weights(g, model.gate(Task::depression), x, SeqMask(2, 3));
  for (double v : w->data) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);

  cfg.num_experts = 1;
  auto single = DeskModel<double>::create(cfg, 10, rng);
  auto w1 = gate_weights(g, single.gate(Task::sentiment), x, SeqMask(2, 3));
  EXPECT_EQ(w1->data, (std::vector<double>{1.0, 1.0}));
}

TEST(Gate, OutputsAreProbabilityVectors) {
  Rng rng(10);
  auto cfg = tiny_config();
  cfg.num_experts = 5;
  auto model = DeskModel<float>::create(cfg, 10, rng);
  Graph<float> g(false);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> v(2 * 4 * cfg.model_dim());
    for (auto& e : v) e = static_cast<float>(rng.uniform(-10.0, 10.0));
    auto x = make_var<float>({2, 4, cfg.model_dim()}, v);
    SeqMask mask(2, 4);
    mask.set(1, 3, false);
    auto w = gate_weights(g, model.gate(Task::sentiment), x, mask);
    for (std::size_t b = 0; b < 2; ++b) {
      double total = 0.0;
      for (std::size_t e = 0; e < 5; ++e) {
        EXPECT_GE(w->at(b, e), 0.0f);
        total += w->at(b, e);
      }
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  }
}

TEST(Forward, SingleExpertIgnoresGate) {
  Rng rng(11);
  auto cfg = tiny_config();
  cfg.num_experts = 1;
  auto model = DeskModel<double>::create(cfg, 10, rng);
  const std::vector<Example> ex{example({1, 2, 3}, {0, 1, 0}), example({4}, {1})};
  Graph<double> g(false);
  const auto before = forward(g, model, batch_of(ex), Task::depression)->data;
  for (auto& v : model.gate(Task::depression).weight->data) v = rng.uniform(-5.0, 5.0);
  EXPECT_EQ(forward(g, model, batch_of(ex), Task::depression)->data, before);
}

TEST(Forward, IdenticalExpertsIgnoreGate) {
  Rng rng(12);
  auto model = DeskModel<double>::create(tiny_config(), 10, rng);
  auto& experts = model.experts();
  auto copy = [](const Var<double>& from, const Var<double>& to) { to->data = from->data; };
  for (std::size_t h = 0; h < experts[0].query.size(); ++h) {
    copy(experts[0].query[h], experts[1].query[h]);
    copy(experts[0].key[h], experts[1].key[h]);
    copy(experts[0].value[h], experts[1].value[h]);
  }
  copy(experts[0].output, experts[1].output);
  for (auto lin : {&ExpertUnit<double>::ff1, &ExpertUnit<double>::ff2_hidden, &ExpertUnit<double>::ff2_out}) {
    copy((experts[0].*lin).weight, (experts[1].*lin).weight);
    copy((experts[0].*lin).bias, (experts[1].*lin).bias);
  }
  const std::vector<Example> ex{example({1, 2, 3}, {0, 1, 0}), example({4, 9}, {1, 0})};
  Graph<double> g(false);
  const auto before = forward(g, model, batch_of(ex), Task::sentiment)->data;
  for (auto& v : model.gate(Task::sentiment).weight->data) v = rng.uniform(-5.0, 5.0);
  const auto after = forward(g, model, batch_of(ex), Task::sentiment)->data;
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(before[i], after[i], 1e-6);
}

TEST(Forward, DuplicateExamplesGiveIdenticalRows) {
  Rng rng(13);
  auto cfg = tiny_config();
  cfg.dropout = 0.1;
  auto model = DeskModel<double>::create(cfg, 10, rng);
  const std::vector<Example> ex{example({1, 2, 3}, {0, 1, 0}), example({7}, {0}), example({1, 2, 3}, {0, 1, 0})};
  Graph<double> g(false);
  auto logits = forward(g, model, batch_of(ex), Task::sentiment);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(logits->at(0, c), logits->at(2, c));
  // Eval mode ignores dropout entirely.
  EXPECT_EQ(forward(g, model, batch_of(ex), Task::sentiment)->data, logits->data);
}

TEST(Forward, PaddingInvariance) {
  Rng rng(14);
  auto model = DeskModel<float>::create(tiny_config(), 10, rng);
  for (int trial = 0; trial < 20; ++trial) {
    Example ex;
    const std::size_t len = 1 + rng.below(5);
    for (std::size_t i = 0; i < len; ++i) {
      ex.ids.push_back(2 + rng.below(8));
      ex.markers.push_back(rng.bernoulli(0.3) ? Marker::in_lexicon : Marker::not_in_lexicon);
    }
    Example longer = example(std::vector<std::size_t>(len + 1 + rng.below(6), 5), {});
    longer.markers.assign(longer.ids.size(), Marker::in_lexicon);
    Graph<float> g(false);
    const std::vector<Example> alone{ex};
    const std::vector<Example> padded{ex, longer};
    auto a = forward(g, model, batch_of(alone), Task::depression);
    auto b = forward(g, model, batch_of(padded), Task::depression);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(a->at(0, c), b->at(0, c), 1e-5);
  }
}

TEST(Predict, ArgmaxWithLowestIndexTies) {
  EXPECT_EQ(argmax_rows(Tensor<double>({1, 2}, {0.1, 0.9})), std::vector<std::size_t>{1});
  EXPECT_EQ(argmax_rows(Tensor<double>({1, 2}, {0.5, 0.5})), std::vector<std::size_t>{0});
  Rng rng(15);
  auto model = DeskModel<double>::create(tiny_config(), 10, rng);
  const std::vector<Example> ex{example({1, 2}, {0, 1}), example({3}, {0}), example({4, 5, 6}, {1, 1, 0})};
  Graph<double> g(false);
  auto logits = forward(g, model, batch_of(ex), Task::depression);
  const auto preds = predict(model, batch_of(ex), Task::depression);
  ASSERT_EQ(preds.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < 3; ++c) {
      if (logits->at(r, c) > logits->at(r, best)) best = c;
    }
    EXPECT_EQ(preds[r], best);
  }
}

TEST(Model, ParameterEnumerationIsCompleteAndStable) {
  Rng a(16), b(16);
  auto m1 = DeskModel<float>::create(tiny_config(), 10, a);
  auto m2 = DeskModel<float>::create(tiny_config(), 10, b);
  ASSERT_EQ(m1.parameters().size(), m2.parameters().size());
  // embedding, markers, 2 experts x (3*2 heads + output + 6 ff tensors), 2 gates, 2 heads x 2
  EXPECT_EQ(m1.parameters().size(), 2u + 2u * 13u + 2u + 4u);
  std::set<const Tensor<float>*> seen;
  for (std::size_t i = 0; i < m1.parameters().size(); ++i) {
    EXPECT_EQ(m1.parameters()[i].name, m2.parameters()[i].name);
    EXPECT_EQ(m1.parameters()[i].value->data, m2.parameters()[i].value->data);
    EXPECT_TRUE(seen.insert(m1.parameters()[i].value.get()).second);
  }
  EXPECT_EQ(m1.parameters()[0].frozen_row, std::optional<std::size_t>{Vocabulary::kPad});
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(m1.embedding().matrix->at(0, c), 0.0f);
}

TEST(Model, ConfigValidation) {
  auto cfg = tiny_config();
  cfg.num_heads = 4;  // 6 % 4 != 0
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.dropout = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

// End-to-end gradient check: every parameter group against central
// differences on a vocab-10, seq-len-3, two-example model.
TEST(Model, EndToEndGradientsMatchFiniteDifferences) {
  Rng rng(17);
  auto model = DeskModel<double>::create(tiny_config(), 10, rng);
  const std::vector<Example> ex{example({2, 5, 9}, {0, 1, 0}, 1), example({7, 3, 3}, {1, 0, 0}, 0)};
  const auto batch = batch_of(ex);
  const std::vector<std::size_t> labels{1, 0};
  for (Task task : {Task::sentiment, Task::depression}) {
    auto loss_of = [&](Graph<double>& g) {
      return compute_loss<double>(g, forward(g, model, batch, task), labels, model.parameters(), 1e-3);
    };
    model.zero_grad();
    {
      Graph<double> g;
      g.backward(loss_of(g));
    }
    auto eval = [&] {
      Graph<double> g(false);
      return loss_of(g)->item();
    };
    for (const auto& p : model.parameters()) {
      const auto analytic = p.value->grad;
      const auto numeric = testing::central_difference(eval, *p.value);
      EXPECT_LT(testing::norm_relative_error(analytic, numeric), 1e-3) << p.name;
    }
  }
}

TEST(Checkpoint, RoundTripReproducesLogitsBitExactly) {
  testing::TempDir dir;
  Rng rng(18);
  auto cfg = tiny_config();
  cfg.gating = Gating::uniform;
  auto model = DeskModel<float>::create(cfg, 6, rng);
  PipelineMeta meta;
  for (const char* t : {"sad", "[odd]", "tab\there", "x"}) meta.vocab.add(t);
  meta.lexicon = DepressionLexicon({"sad"}, Language::english, "t");
  meta.labels[1] = {{"not depressed", 0}, {"moderate", 1}, {"severe", 2}};
  meta.labels[0] = {{"neg", 0}, {"pos", 1}};
  meta.max_seq_len = 64;
  const auto path = dir.file("model.ckpt");
  save_checkpoint(path, model, meta);
  auto loaded = load_checkpoint<float>(path);
  EXPECT_EQ(loaded.model.config(), model.config());
  EXPECT_EQ(loaded.meta.vocab, meta.vocab);
  EXPECT_EQ(loaded.meta.lexicon, meta.lexicon);
  EXPECT_EQ(loaded.meta.labels, meta.labels);
  EXPECT_EQ(loaded.meta.max_seq_len, 64u);
  const std::vector<Example> ex{example({2, 3, 4}, {1, 0, 0}), example({5}, {0})};
  Graph<float> g(false);
  EXPECT_EQ(forward(g, loaded.model, batch_of(ex), Task::depression)->data,
            forward(g, model, batch_of(ex), Task::depression)->data);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  testing::TempDir dir;
  EXPECT_THROW(load_checkpoint<float>(dir.write("a.ckpt", "hello\n")), ParseError);
  EXPECT_THROW(load_checkpoint<float>(dir.write("b.ckpt", "desk-checkpoint v1\n[model]\nword_dim = 4\n")), ParseError);
}

}  // namespace
}  // namespace desk
