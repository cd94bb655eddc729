#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "redattn/data.hpp"

using redattn::Sample;
using redattn::SyntheticKind;
using redattn::SyntheticSpec;
using redattn::TokenMode;
using redattn::UsageError;
using redattn::Vocabulary;

TEST_CASE("character vocabulary over a two-letter text") {
  auto v = Vocabulary::build({"abab"}, TokenMode::Character, 16);
  REQUIRE(v.size() == 4);
  REQUIRE(v.token_of(0) == "<pad>");
  REQUIRE(v.token_of(1) == "<unk>");
  REQUIRE(v.id_of("a") >= 2);
  REQUIRE(v.id_of("b") >= 2);
  REQUIRE(v.id_of("a") != v.id_of("b"));
  REQUIRE(v.id_of("c") == redattn::kUnkId);
}

TEST_CASE("word vocabulary keeps the most frequent tokens") {
  auto v = Vocabulary::build({"a b a"}, TokenMode::Word, 3);
  REQUIRE(v.size() == 3);  // PAD, UNK, "a"
  REQUIRE(v.id_of("a") == 2);
  REQUIRE(v.id_of("b") == redattn::kUnkId);
  auto ids = v.encode("a b a");
  REQUIRE(ids == std::vector<std::int32_t>{2, 1, 2});
}

TEST_CASE("vocabulary ties break lexicographically and ids are stable") {
  auto v1 = Vocabulary::build({"x y z y x z"}, TokenMode::Word, 4);
  auto v2 = Vocabulary::build({"x y z y x z"}, TokenMode::Word, 4);
  // all frequencies equal: "x" < "y" < "z", two slots available
  REQUIRE(v1.id_of("x") == 2);
  REQUIRE(v1.id_of("y") == 3);
  REQUIRE(v1.id_of("z") == redattn::kUnkId);
  for (const auto* tok : {"x", "y", "z"}) REQUIRE(v1.id_of(tok) == v2.id_of(tok));
}

TEST_CASE("empty corpus is a usage error") {
  REQUIRE_THROWS_AS(Vocabulary::build({}, TokenMode::Word, 8), UsageError);
  REQUIRE_THROWS_AS(Vocabulary::build({"   "}, TokenMode::Word, 8), UsageError);
}

TEST_CASE("utf8 characters stay whole") {
  auto toks = redattn::split_characters("a\xc3\xa9z");  // a, e-acute, z
  REQUIRE(toks.size() == 3);
  REQUIRE(toks[1] == "\xc3\xa9");
}

TEST_CASE("extract_sample takes the first N tokens or skips") {
  std::vector<std::int32_t> ten = {2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  auto s = redattn::extract_sample(ten, 4, "doc");
  REQUIRE(s.has_value());
  REQUIRE(s->ids == std::vector<std::int32_t>{2, 3, 4, 5});

  std::vector<std::int32_t> three = {2, 3, 4};
  REQUIRE_FALSE(redattn::extract_sample(three, 4).has_value());

  auto whole = redattn::extract_sample(three, 3);
  REQUIRE(whole.has_value());
  REQUIRE(whole->ids == three);
}

TEST_CASE("split is a deterministic partition") {
  std::vector<Sample> samples;
  for (int i = 0; i < 10; ++i) samples.push_back({{i, i}, "doc:" + std::to_string(i)});

  auto [train, test] = redattn::split_train_test(samples, 0.8, 7);
  REQUIRE(train.size() == 8);
  REQUIRE(test.size() == 2);

  auto [train2, test2] = redattn::split_train_test(samples, 0.8, 7);
  for (std::size_t i = 0; i < train.size(); ++i) REQUIRE(train[i].source == train2[i].source);
  for (std::size_t i = 0; i < test.size(); ++i) REQUIRE(test[i].source == test2[i].source);

  std::set<std::string> seen;
  for (const auto& s : train) seen.insert(s.source);
  for (const auto& s : test) seen.insert(s.source);
  REQUIRE(seen.size() == 10);  // disjoint and exhaustive

  REQUIRE_THROWS_AS(redattn::split_train_test({samples[0]}, 0.8, 1), UsageError);
  REQUIRE_THROWS_AS(redattn::split_train_test(samples, 1.0, 1), UsageError);
}

TEST_CASE("uniform synthetic corpus is reproducible and well formed") {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::UniformRandom;
  spec.vocab_size = 10;
  spec.length = 8;
  spec.sample_count = 3;
  spec.seed = 5;
  auto a = redattn::gen_synthetic(spec);
  auto b = redattn::gen_synthetic(spec);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].ids.size() == 8);
    REQUIRE(a[i].ids == b[i].ids);
    for (auto id : a[i].ids) {
      REQUIRE(id >= 2);
      REQUIRE(id < 10);
    }
  }
}

TEST_CASE("pool of one template makes identical samples") {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::TemplateRepetition;
  spec.vocab_size = 32;
  spec.length = 16;
  spec.sample_count = 5;
  spec.seed = 9;
  spec.template_pool = 1;
  auto samples = redattn::gen_synthetic(spec);
  for (const auto& s : samples) REQUIRE(s.ids == samples[0].ids);
}

TEST_CASE("zero-temperature markov chains follow argmax transitions") {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::MarkovBigram;
  spec.vocab_size = 8;
  spec.length = 12;
  spec.sample_count = 4;
  spec.seed = 11;
  spec.bigram_temperature = 0.0;
  auto samples = redattn::gen_synthetic(spec);
  auto logits = redattn::markov_logits(spec);
  for (const auto& s : samples) {
    for (std::size_t i = 1; i < s.ids.size(); ++i) {
      const auto& row = logits[static_cast<std::size_t>(s.ids[i - 1] - 2)];
      const auto best = std::max_element(row.begin(), row.end()) - row.begin();
      REQUIRE(s.ids[i] == static_cast<std::int32_t>(2 + best));
    }
  }
}

TEST_CASE("synthetic samples satisfy their invariants over random specs") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    SyntheticSpec spec;
    spec.kind = static_cast<SyntheticKind>(trial % 3);
    spec.vocab_size = 3 + redattn::index_draw(rng, 40);
    spec.length = 1 + redattn::index_draw(rng, 40);
    spec.sample_count = 1 + redattn::index_draw(rng, 8);
    spec.seed = rng();
    spec.bigram_temperature = redattn::unit_draw(rng) * 2.0;
    spec.template_pool = 1 + redattn::index_draw(rng, 6);
    spec.repeat_probability = redattn::unit_draw(rng);
    auto samples = redattn::gen_synthetic(spec);
    REQUIRE(samples.size() == spec.sample_count);
    for (const auto& s : samples) {
      REQUIRE(s.ids.size() == spec.length);
      for (auto id : s.ids) {
        REQUIRE(id >= 2);  // never PAD, never UNK
        REQUIRE(static_cast<std::size_t>(id) < spec.vocab_size);
      }
    }
  }
}

TEST_CASE("corpus pipeline is deterministic end to end") {
  const std::string path = "corpus_lines.txt";
  {
    std::ofstream out(path);
    out << "the cat sat on the mat and then sat again\n";
    out << "short\n";
    out << "a second document with plenty of characters in it\n";
  }
  auto docs = redattn::load_documents(path, true);
  REQUIRE(docs.size() == 3);

  auto c1 = redattn::build_corpus(docs, TokenMode::Character, 64, 10);
  auto c2 = redattn::build_corpus(docs, TokenMode::Character, 64, 10);
  REQUIRE(c1.samples.size() == c2.samples.size());
  for (std::size_t i = 0; i < c1.samples.size(); ++i)
    REQUIRE(c1.samples[i].ids == c2.samples[i].ids);

  // "short" has 5 characters < 10: skipped
  REQUIRE(c1.samples.size() == 2);
  for (const auto& s : c1.samples)
    for (auto id : s.ids) REQUIRE(id != redattn::kPadId);
  std::remove(path.c_str());
}

TEST_CASE("documents per file are read in sorted order") {
  namespace fs = std::filesystem;
  fs::create_directory("corpus_dir_test");
  std::ofstream("corpus_dir_test/b.txt") << "second doc";
  std::ofstream("corpus_dir_test/a.txt") << "first doc";
  auto docs = redattn::load_documents("corpus_dir_test", false);
  REQUIRE(docs.size() == 2);
  REQUIRE(docs[0] == "first doc");
  REQUIRE(docs[1] == "second doc");
  fs::remove_all("corpus_dir_test");
}

TEST_CASE("subsetting keeps the first fraction of documents") {
  std::vector<std::string> docs = {"d0", "d1", "d2", "d3", "d4", "d5", "d6", "d7", "d8", "d9"};
  auto kept = redattn::take_first_fraction(docs, 0.3);
  REQUIRE(kept == std::vector<std::string>{"d0", "d1", "d2"});
  REQUIRE(redattn::take_first_fraction(docs, 1.0).size() == 10);
  REQUIRE(redattn::take_first_fraction(docs, 0.01).size() == 1);
  REQUIRE_THROWS_AS(redattn::take_first_fraction(docs, 0.0), UsageError);
}

TEST_CASE("samples csv holds one row of ids per sample") {
  const std::string path = "samples_audit.csv";
  redattn::write_samples_csv(path, {{{2, 3, 4}, "a"}, {{5, 6, 7}, "b"}});
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "2,3,4");
  std::getline(in, line);
  REQUIRE(line == "5,6,7");
  std::remove(path.c_str());
}
