#include <gtest/gtest.h>

#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "desk/numcore/rng.hpp"
#include "desk/textpipe/csv.hpp"
#include "desk/textpipe/dataset.hpp"
#include "desk/textpipe/embeddings.hpp"
#include "desk/textpipe/synth.hpp"
#include "desk/textpipe/tokenize.hpp"
#include "desk/textpipe/vocab.hpp"
#include "support/files.hpp"

namespace desk {
namespace {

using testing::TempDir;
using Tokens = std::vector<std::string>;

TEST(Tokenize, English) {
  EXPECT_EQ(tokenize("I feel SAD.", Language::english), (Tokens{"i", "feel", "sad"}));
  EXPECT_EQ(tokenize("  \"well,\"  ...  don't!! ", Language::english), (Tokens{"well", "don't"}));
}

TEST(Tokenize, DegenerateInputGivesSentinel) {
  EXPECT_EQ(tokenize("", Language::english), (Tokens{"<unk>"}));
  EXPECT_EQ(tokenize(" ... !! ", Language::english), (Tokens{"<unk>"}));
  EXPECT_EQ(tokenize("   ", Language::chinese), (Tokens{"<unk>"}));
}

TEST(Tokenize, ChinesePerCharacter) {
  EXPECT_EQ(tokenize("心情不好", Language::chinese), (Tokens{"心", "情", "不", "好"}));
  EXPECT_EQ(tokenize("心 情\n", Language::chinese), (Tokens{"心", "情"}));
}

TEST(Vocab, MinCountAndReserved) {
  const std::vector<Tokens> corpora{{"a a b"}};
  const auto v = build_vocab(corpora, 2, Language::english);
  EXPECT_EQ(v.size(), 3u);
  EXPECT_EQ(v.id("a"), 2u);
  EXPECT_EQ(v.id("b"), Vocabulary::kUnk);
  EXPECT_EQ(v.id("<pad>"), Vocabulary::kPad);
  const auto all = build_vocab(corpora, 1, Language::english);
  EXPECT_TRUE(all.contains("a"));
  EXPECT_TRUE(all.contains("b"));
  EXPECT_EQ(all.size(), 4u);
}

TEST(Vocab, EmptyCorpusAndBadMinCount) {
  const std::vector<Tokens> none;
  EXPECT_THROW(build_vocab(none, 1, Language::english), UsageError);
  const std::vector<Tokens> corpora{{"x"}};
  EXPECT_THROW(build_vocab(corpora, 0, Language::english), UsageError);
}

TEST(Vocab, MatchesFrequencyCountOracle) {
  Rng rng(4);
  std::vector<Tokens> corpora(2);
  std::unordered_map<std::string, int> counts;
  for (int s = 0; s < 100; ++s) {
    std::string sentence;
    const std::size_t len = 1 + rng.below(8);
    for (std::size_t i = 0; i < len; ++i) {
      const std::string w = "tok" + std::to_string(rng.below(60));
      ++counts[w];
      sentence += w + " ";
    }
    corpora[s % 2].push_back(sentence);
  }
  const auto vocab = build_vocab(corpora, 3, Language::english);
  std::size_t expected = 2;
  for (const auto& [w, n] : counts) {
    EXPECT_EQ(vocab.contains(w), n >= 3) << w;
    expected += n >= 3;
  }
  EXPECT_EQ(vocab.size(), expected);
  // Contiguous ids, bijective over non-reserved entries.
  for (std::size_t id = 0; id < vocab.size(); ++id) EXPECT_EQ(vocab.id(vocab.token(id)), id);
}

TEST(Glove, CopiesRowsAndInitialisesRest) {
  TempDir dir;
  Vocabulary vocab;
  vocab.add("cat");
  vocab.add("dog");
  vocab.add("emu");
  const auto path = dir.write("glove.txt", "cat 0.5 -1.25 2\ndog 1e-3 0 -0.75\nzebra 9 9 9\n");
  Rng rng(12);
  const auto table = load_glove<double>(path, vocab, 3, rng);
  EXPECT_EQ(table.rows(), vocab.size());
  EXPECT_EQ(table.matrix->at(vocab.id("cat"), 1), -1.25);
  EXPECT_EQ(table.matrix->at(vocab.id("dog"), 0), 1e-3);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(table.matrix->at(Vocabulary::kPad, c), 0.0);
    const double v = table.matrix->at(vocab.id("emu"), c);
    EXPECT_LE(std::abs(v), 0.05);
  }
  Rng again(12);
  EXPECT_EQ(load_glove<double>(path, vocab, 3, again).matrix->data, table.matrix->data);
}

TEST(Glove, WrongValueCountNamesLine) {
  TempDir dir;
  Vocabulary vocab;
  const auto path = dir.write("glove.txt", "cat 1 2 3\ndog 1 2\n");
  Rng rng(1);
  try {
    load_glove<float>(path, vocab, 3, rng);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Csv, QuotingRules) {
  const auto rows = parse_csv("text,label\n\"a, b\",1\n\"say \"\"hi\"\"\nnow\",0\r\nplain,1");
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[1].fields, (Tokens{"a, b", "1"}));
  EXPECT_EQ(rows[2].fields, (Tokens{"say \"hi\"\nnow", "0"}));
  EXPECT_EQ(rows[3].fields, (Tokens{"plain", "1"}));
  EXPECT_EQ(rows[3].line, 5u);
  EXPECT_THROW(parse_csv("a,\"b\n"), ParseError);
}

TEST(CsvDataset, SingleRowWithMarker) {
  TempDir dir;
  const auto path = dir.write("d.csv", "text,label\nsad,1\n");
  Vocabulary vocab;
  vocab.add("sad");
  const DepressionLexicon lex({"sad"}, Language::english, "t");
  const auto ds = load_csv_dataset(path, Task::depression, {}, {{"0", 0}, {"1", 1}}, lex, vocab, Language::english);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.examples[0].markers, std::vector<Marker>{Marker::in_lexicon});
  EXPECT_EQ(ds.examples[0].label, 1u);
  EXPECT_EQ(ds.examples[0].ids, std::vector<std::size_t>{vocab.id("sad")});
}

TEST(CsvDataset, QuotedCommaStaysInOneField) {
  TempDir dir;
  const auto path = dir.write("d.csv", "label,text\npos,\"good, really good\"\n");
  Vocabulary vocab;
  vocab.add("good");
  const auto ds = load_csv_dataset(path, Task::sentiment, {}, {{"neg", 0}, {"pos", 1}}, DepressionLexicon{}, vocab,
                                   Language::english);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.examples[0].ids.size(), 3u);
}

TEST(CsvDataset, TwentyRowFixtureMatchesHandCount) {
  TempDir dir;
  std::ostringstream csv;
  csv << "id,text,label\n";
  const char* labels[] = {"neg", "pos", "neutral", "pos"};
  for (int i = 0; i < 20; ++i) csv << i << ",\"row " << i << ", some text\"," << labels[i % 4] << "\n";
  // Hand count: neg 5, pos 10, neutral 5.
  const auto path = dir.write("d.csv", csv.str());
  const auto ds = load_csv_dataset(path, Task::sentiment, {}, {{"neg", 0}, {"pos", 1}, {"neutral", 2}},
                                   DepressionLexicon{}, Vocabulary{}, Language::english);
  EXPECT_EQ(ds.size(), 20u);
  EXPECT_EQ(ds.num_classes, 3u);
  std::map<std::size_t, int> hist;
  for (auto l : ds.labels()) ++hist[l];
  EXPECT_EQ(hist, (std::map<std::size_t, int>{{0, 5}, {1, 10}, {2, 5}}));
}

TEST(CsvDataset, SchemaAndLabelErrors) {
  TempDir dir;
  const LabelMap labels{{"0", 0}, {"1", 1}};
  const auto no_col = dir.write("a.csv", "body,label\nhi,1\n");
  EXPECT_THROW(load_csv_dataset(no_col, Task::depression, {}, labels, {}, {}, Language::english), SchemaError);
  const auto bad_label = dir.write("b.csv", "text,label\nhi,1\nthere,7\n");
  try {
    load_csv_dataset(bad_label, Task::depression, {}, labels, {}, {}, Language::english);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
  }
}

TEST(CsvDataset, TruncatesToMaxLength) {
  TempDir dir;
  const auto path = dir.write("d.csv", "text,label\na b c d e f,0\n");
  const auto ds = load_csv_dataset(path, Task::depression, {}, {{"0", 0}}, {}, {}, Language::english, 4);
  EXPECT_EQ(ds.examples[0].ids.size(), 4u);
}

TEST(Synth, FullSignalLabelEqualsPlantedPresence) {
  const auto b = synth_generate(3, 300, 50, SynthSignal{.strength = 1.0});
  for (const auto* ds : {&b.sentiment, &b.depression}) {
    for (const auto& ex : ds->examples) {
      bool present = false;
      for (auto id : ex.ids) present |= b.planted.count(b.vocab.token(id)) == 1;
      EXPECT_EQ(ex.label, present ? 1u : 0u);
    }
  }
}

TEST(Synth, DeterministicUnderSeed) {
  const SynthSignal s{.strength = 0.7, .lexicon_coverage = 0.5};
  const auto a = synth_generate(9, 100, 40, s);
  const auto b = synth_generate(9, 100, 40, s);
  EXPECT_EQ(a.depression_texts, b.depression_texts);
  EXPECT_EQ(a.sentiment.labels(), b.sentiment.labels());
  EXPECT_EQ(a.lexicon, b.lexicon);
  EXPECT_NE(synth_generate(10, 100, 40, s).depression_texts, a.depression_texts);
}

TEST(Synth, PartialSignalConditionalRate) {
  const auto b = synth_generate(123, 1000, 200, SynthSignal{.strength = 0.8});
  int present = 0, positive = 0;
  for (const auto& ex : b.depression.examples) {
    bool has = false;
    for (auto id : ex.ids) has |= b.planted.count(b.vocab.token(id)) == 1;
    if (has) {
      ++present;
      positive += ex.label == 1;
    }
  }
  const double rate = static_cast<double>(positive) / present;
  EXPECT_GE(rate, 0.75);
  EXPECT_LE(rate, 0.85);
}

TEST(Synth, EncodingIsTotalAndLexiconCoverage) {
  const auto b = synth_generate(5, 200, 100, SynthSignal{.strength = 0.9, .planted_fraction = 0.2, .lexicon_coverage = 0.5});
  EXPECT_EQ(b.planted.size(), 20u);
  EXPECT_EQ(b.lexicon.size(), 10u);
  for (const auto& ex : b.depression.examples) {
    for (auto id : ex.ids) EXPECT_LT(id, b.vocab.size());
  }
  EXPECT_THROW(synth_generate(1, 1, 100), ConfigError);
  EXPECT_THROW(synth_generate(1, 10, 9), ConfigError);
}

}  // namespace
}  // namespace desk
