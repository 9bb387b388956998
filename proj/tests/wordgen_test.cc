/* Copyright 2026 The iterfeed Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "iterfeed/wordgen.hpp"

namespace iterfeed {
namespace {

namespace fs = std::filesystem;

Charset cs;

StyleConfig plain_style() {
  StyleConfig s;
  s.jitter = 0;
  s.noise_sigma = 0;
  s.contrast_lo = s.contrast_hi = 1.0;
  s.bg_max = 0;
  return s;
}

TEST(Charset, TokenLayout) {
  EXPECT_EQ(cs.size(), 29);
  EXPECT_EQ(cs.token_of('a'), 3);
  EXPECT_EQ(cs.token_of('z'), 28);
  EXPECT_EQ(cs.token_of('!'), Charset::kUnk);
  EXPECT_EQ(cs.decode(cs.encode("hello")), "hello");
  EXPECT_THROW(cs.encode("h!"), DataError);
  EXPECT_THROW(Charset(""), DataError);
}

TEST(RenderWord, DeterministicUnderFixedSeed) {
  auto a = render_word(cs.encode("a"), cs, plain_style(), 0);
  auto b = render_word(cs.encode("a"), cs, plain_style(), 0);
  EXPECT_EQ(a.image.data, b.image.data);
}

TEST(RenderWord, SeedSensitivity) {
  StyleConfig st;  // default has nonzero jitter
  auto a = render_word(cs.encode("hello"), cs, st, 1);
  auto b = render_word(cs.encode("hello"), cs, st, 2);
  EXPECT_EQ(a.label, b.label);
  EXPECT_NE(a.image.data, b.image.data);
}

TEST(RenderWord, PixelRangeAndShapeOver1000Samples) {
  StyleConfig st;
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    int len = 1 + static_cast<int>(rng.below(10));
    CharSequence w;
    for (int k = 0; k < len; ++k)
      w.push_back(Charset::kFirstSymbol + static_cast<int>(rng.below(26)));
    auto s = render_word(w, cs, st, i);
    ASSERT_EQ(s.image.shape, (Shape{32, 100, 1}));
    ASSERT_GE(s.image.min_value(), 0.0f);
    ASSERT_LE(s.image.max_value(), 1.0f);
  }
}

TEST(RenderWord, RejectsBadInput) {
  EXPECT_THROW(render_word({}, cs, plain_style(), 0), DataError);
  EXPECT_THROW(render_word({Charset::kUnk}, cs, plain_style(), 0), DataError);
  CharSequence too_long = cs.encode("aaaaaaaaaaaaa");  // 13 chars
  StyleConfig st;
  st.advance = 8.0;
  EXPECT_THROW(render_word(too_long, cs, st, 0), DataError);
}

TEST(BuildSplit, DisjointLabelSets) {
  std::vector<CharSequence> vocab;
  for (const char* w : {"hat", "net", "bell", "cell", "ill", "hill", "nil",
                        "echo", "lace", "bone"})
    vocab.push_back(cs.encode(w));
  auto split = build_split(vocab, cs, SplitMode::kDisjoint, 0.7, 2, 42);
  auto train_labels = label_set(split.train);
  auto test_labels = label_set(split.test);
  EXPECT_EQ(train_labels.size(), 7u);
  EXPECT_EQ(test_labels.size(), 3u);
  for (const auto& l : test_labels) EXPECT_FALSE(train_labels.count(l));
  EXPECT_EQ(split.train.size() + split.test.size(), vocab.size() * 2);
}

TEST(BuildSplit, DisjointPropertyOverRandomVocabs) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 5 + static_cast<int>(rng.below(40));
    auto vocab = confusable_vocab(n, 2, 6, cs, 1000 + trial);
    auto split = build_split(vocab, cs, SplitMode::kDisjoint,
                             rng.uniform(0.3, 0.8), 1, rng.next_u64());
    auto train_labels = label_set(split.train);
    for (const auto& s : split.test)
      ASSERT_FALSE(train_labels.count(s.label));
    ASSERT_EQ(split.train.size() + split.test.size(),
              static_cast<std::size_t>(n));
  }
}

TEST(BuildSplit, DegenerateInputsRejected) {
  EXPECT_THROW(
      build_split({cs.encode("a")}, cs, SplitMode::kDisjoint, 0.5, 1, 0),
      DataError);
  EXPECT_THROW(build_split({}, cs, SplitMode::kConventional, 0.5, 1, 0),
               DataError);
  EXPECT_THROW(build_split({cs.encode("ab"), cs.encode("cd")}, cs,
                           SplitMode::kConventional, 1.0, 1, 0),
               UsageError);
}

TEST(BuildSplit, ConventionalCountsAndDeterminism) {
  auto vocab = confusable_vocab(20, 2, 5, cs, 3);
  auto a = build_split(vocab, cs, SplitMode::kConventional, 0.75, 3, 11);
  auto b = build_split(vocab, cs, SplitMode::kConventional, 0.75, 3, 11);
  EXPECT_EQ(a.train.size() + a.test.size(), 60u);
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].id, b.train[i].id);
    EXPECT_EQ(a.train[i].image.data, b.train[i].image.data);
  }
}

TEST(BuildSplit, DisjointManifestHashStableAcrossRuns) {
  auto vocab = confusable_vocab(200, 2, 6, cs, 8);
  auto a = build_split(vocab, cs, SplitMode::kDisjoint, 0.7, 1, 42);
  auto b = build_split(vocab, cs, SplitMode::kDisjoint, 0.7, 1, 42);
  auto digest = [](const DatasetSplit& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto* side : {&s.train, &s.test})
      for (const auto& smp : *side) {
        h = fnv1a(smp.id.data(), smp.id.size(), h);
        h = fnv1a(smp.image.data.data(), smp.image.data.size() * sizeof(float),
                  h);
      }
    return h;
  };
  EXPECT_EQ(digest(a), digest(b));
}

TEST(Persistence, RoundTripPreservesEverything) {
  auto vocab = confusable_vocab(8, 2, 5, cs, 5);
  auto split = build_split(vocab, cs, SplitMode::kDisjoint, 0.6, 2, 9);
  fs::path dir = fs::temp_directory_path() / "iterfeed_ds_test";
  fs::remove_all(dir);
  save_dataset(split, dir, cs);
  Charset loaded_cs;
  auto loaded = load_dataset(dir, &loaded_cs);
  EXPECT_EQ(loaded.mode, split.mode);
  EXPECT_EQ(loaded.seed, split.seed);
  EXPECT_EQ(loaded_cs.symbols(), cs.symbols());
  ASSERT_EQ(loaded.train.size(), split.train.size());
  ASSERT_EQ(loaded.test.size(), split.test.size());
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    EXPECT_EQ(loaded.train[i].id, split.train[i].id);
    EXPECT_EQ(loaded.train[i].label, split.train[i].label);
    EXPECT_EQ(loaded.train[i].style_seed, split.train[i].style_seed);
    EXPECT_EQ(loaded.train[i].image.data, split.train[i].image.data);
  }
  fs::remove_all(dir);
}

TEST(Persistence, CorruptManifestReportsLineNumber) {
  auto vocab = confusable_vocab(4, 2, 4, cs, 6);
  auto split = build_split(vocab, cs, SplitMode::kConventional, 0.5, 1, 1);
  fs::path dir = fs::temp_directory_path() / "iterfeed_ds_corrupt";
  fs::remove_all(dir);
  save_dataset(split, dir, cs);
  {
    std::ofstream f(dir / "manifest.jsonl", std::ios::app);
    f << "{not json\n";
  }
  try {
    load_dataset(dir);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 6"), std::string::npos)
        << e.what();
  }
  fs::remove_all(dir);
}

TEST(Persistence, MissingImageNamesSample) {
  auto vocab = confusable_vocab(4, 2, 4, cs, 6);
  auto split = build_split(vocab, cs, SplitMode::kConventional, 0.5, 1, 1);
  fs::path dir = fs::temp_directory_path() / "iterfeed_ds_missing";
  fs::remove_all(dir);
  save_dataset(split, dir, cs);
  std::string victim = split.train[0].id;
  fs::remove(dir / ("images/" + victim + ".pgm"));
  try {
    load_dataset(dir);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(victim), std::string::npos)
        << e.what();
  }
  fs::remove_all(dir);
}

}  // namespace
}  // namespace iterfeed
