#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "psx/datasets/io.hpp"
#include "psx/datasets/pointerize.hpp"
#include "psx/datasets/synthetic.hpp"
#include "psx/datasets/vocabulary.hpp"

namespace psx {
namespace {

const std::string kFixtures = PSX_FIXTURES;

std::vector<std::string> toks(const std::string& s) { return split_tokens(s); }

TEST(Rarest, SameSeedSameStream) {
  SyntheticConfig c;
  c.seed = 9;
  RarestWordGenerator a(c), b(c);
  EXPECT_EQ(a.take(200), b.take(200));
  c.seed = 10;
  RarestWordGenerator other(c);
  RarestWordGenerator again(SyntheticConfig{.seed = 9});
  EXPECT_NE(other.take(50), again.take(50));
}

TEST(Rarest, LabelsSurviveIndependentRescan) {
  SyntheticConfig c;
  c.geometric_ratio = 0.995;
  RarestWordGenerator gen(c);
  std::size_t pointers = 0;
  for (const auto& ex : gen.take(5000)) {
    ASSERT_EQ(ex.source.size(), 7u);
    std::set<int> seen(ex.source.begin(), ex.source.end());
    ASSERT_EQ(seen.size(), 7u) << "ranks repeat";
    int best = -1;
    std::size_t where = 0;
    for (std::size_t j = 0; j < ex.source.size(); ++j) {
      if (ex.source[j] > best) {
        best = ex.source[j];
        where = j;
      }
    }
    ASSERT_EQ(ex.target, std::vector<int>{best});
    if (best >= 540) {
      ++pointers;
      EXPECT_EQ(ex.steps[0], StepTarget::pointer(static_cast<int>(where)));
    } else {
      EXPECT_EQ(ex.steps[0], StepTarget::shortlist(best));
    }
  }
  EXPECT_GT(pointers, 0u);
}

TEST(Rarest, RarestRankBecomesPointer) {
  SyntheticConfig c;
  c.geometric_ratio = 0.9999;
  RarestWordGenerator gen(c);
  for (int i = 0; i < 20000; ++i) {
    const auto ex = gen.next();
    const auto it = std::find(ex.source.begin(), ex.source.end(), 599);
    if (it == ex.source.end()) continue;
    EXPECT_EQ(ex.target[0], 599);
    EXPECT_EQ(ex.steps[0], StepTarget::pointer(static_cast<int>(it - ex.source.begin())));
    return;
  }
  FAIL() << "rank 599 never drawn";
}

TEST(Rarest, FirstDrawMassMatchesClosedForm) {
  SyntheticConfig c;
  c.seed = 4;
  RarestWordGenerator gen(c);
  const int n = 100000;
  std::vector<int> hits(3, 0);
  for (int i = 0; i < n; ++i) {
    const auto r = gen.draw_rank();
    if (r < 3) ++hits[r];
  }
  for (std::size_t rank = 0; rank < 3; ++rank) {
    // Closed form of the truncated geometric law, computed here from scratch.
    double z = 0;
    for (int k = 0; k < 600; ++k) z += std::pow(0.99, k);
    const double p = std::pow(0.99, static_cast<double>(rank)) / z;
    EXPECT_NEAR(c.first_draw_mass(rank), p, 1e-14);
    const double se = std::sqrt(p * (1 - p) / n);
    EXPECT_NEAR(static_cast<double>(hits[rank]) / n, p, 3 * se) << "rank " << rank;
  }
}

TEST(Rarest, InvalidConfigs) {
  EXPECT_THROW(RarestWordGenerator(SyntheticConfig{.seq_len = 700}), std::invalid_argument);
  EXPECT_THROW(RarestWordGenerator(SyntheticConfig{.shortlist_size = 500}), std::invalid_argument);
  EXPECT_THROW(RarestWordGenerator(SyntheticConfig{.geometric_ratio = 1.0}), std::invalid_argument);
}

TEST(Copy, NoCopiesMeansAllWords) {
  CopyTaskGenerator gen(CopyTaskConfig{.copy_fraction = 0.0});
  for (const auto& ex : gen.take(100)) {
    for (std::size_t t = 0; t < ex.steps.size(); ++t) {
      EXPECT_TRUE(ex.steps[t].is_word());
      EXPECT_LT(ex.target[t], 150);
      EXPECT_GE(ex.target[t], kReservedIds);
    }
  }
}

TEST(Copy, AllCopiesPointAtOwnPosition) {
  CopyTaskGenerator gen(CopyTaskConfig{.copy_fraction = 1.0});
  for (const auto& ex : gen.take(100)) {
    for (std::size_t t = 0; t < ex.steps.size(); ++t) {
      EXPECT_EQ(ex.steps[t], StepTarget::pointer(static_cast<int>(t)));
      EXPECT_GE(ex.source[t], 150);
    }
  }
}

TEST(Copy, MixedExamplesValidate) {
  CopyTaskGenerator gen(CopyTaskConfig{.seed = 3});
  for (const auto& ex : gen.take(500)) {
    ex.validate();
    EXPECT_EQ(ex.pointer_count(), 5u);
    for (std::size_t t = 0; t < ex.steps.size(); ++t) {
      const auto& s = ex.steps[t];
      if (s.is_location()) {
        EXPECT_EQ(ex.source[static_cast<std::size_t>(s.location)], ex.target[t]);
        EXPECT_GE(ex.target[t], 150);
      } else {
        EXPECT_EQ(s.word, ex.target[t]);
        EXPECT_LT(ex.target[t], 150);
      }
    }
  }
  EXPECT_THROW(CopyTaskGenerator(CopyTaskConfig{.copy_fraction = 1.5}), std::invalid_argument);
}

TEST(Vocab, ReservedIdsAndLookup) {
  const auto v = Vocabulary::from_counts({{"b", 3}, {"a", 3}, {"c", 9}, {"rare", 1}}, 2);
  EXPECT_EQ(v.tokens(), (std::vector<std::string>{"<unk>", "<s>", "</s>", "c", "a", "b"}));
  EXPECT_EQ(v.id("rare"), Vocabulary::unk());
  EXPECT_EQ(v.token(3), "c");
  EXPECT_THROW(v.token(6), std::out_of_range);
  const auto capped = Vocabulary::from_counts({{"b", 3}, {"a", 3}, {"c", 9}}, 1, 4);
  EXPECT_EQ(capped.shortlist_id("c"), 3);
  EXPECT_EQ(capped.shortlist_id("a"), Vocabulary::unk());
}

TEST(Vocab, SaveLoadRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "psx_vocab_test.txt";
  const auto v = Vocabulary::from_counts({{"x", 5}, {"y", 7}}, 1);
  v.save(path.string());
  EXPECT_EQ(Vocabulary::load(path.string()), v);
  std::ofstream(path) << "r0\nr1\nr2\n";
  const auto closed = Vocabulary::load(path.string());
  EXPECT_TRUE(closed.closed());
  EXPECT_EQ(closed.id("r2"), 2);
  EXPECT_THROW(closed.id("r3"), std::out_of_range);
  std::filesystem::remove(path);
}

TEST(Io, JsonLinesRoundTrip) {
  CopyTaskGenerator gen(CopyTaskConfig{.seed = 8});
  auto data = gen.take(30);
  data[0].steps[0] = StepTarget::pointer_to_attention_argmax();
  std::stringstream ss;
  write_examples(ss, data);
  EXPECT_EQ(read_examples(ss), data);
}

TEST(Io, MalformedLinesReportLineNumber) {
  std::stringstream ss(R"({"source":[1],"target":[1],"z":[1],"ptr":[-1]}
{"source":[1],"target":[1,2],"z":[1],"ptr":[-1]}
)");
  try {
    read_examples(ss);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

std::vector<TextPair> unk_fixture() {
  std::ifstream f(kFixtures + "/unk_corpus.tsv");
  return read_text_pairs(f);
}

std::vector<std::vector<int>> expected_ptrs(const std::string& file) {
  std::ifstream f(kFixtures + "/" + file);
  std::vector<std::vector<int>> out;
  std::string line;
  while (std::getline(f, line)) out.push_back(nlohmann::json::parse(line).at("ptr").get<std::vector<int>>());
  return out;
}

std::vector<int> ptr_row(const PointerExample& ex) {
  std::vector<int> out;
  for (const auto& s : ex.steps) out.push_back(s.is_location() ? s.location : -1);
  return out;
}

TEST(PointerizeUnk, ReproducesHandAnnotatedFixture) {
  const auto corpus = unk_fixture();
  ASSERT_EQ(corpus.size(), 20u);
  const auto pc = pointerize_unk(corpus, 5);
  const auto expect = expected_ptrs("unk_expected.jsonl");
  ASSERT_EQ(pc.examples.size(), expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_EQ(ptr_row(pc.examples[i]), expect[i]) << "pair " << i + 1;
  EXPECT_EQ(pc.stats.pointers, 6u);
  EXPECT_EQ(pc.stats.examples, 20u);
  EXPECT_DOUBLE_EQ(pc.stats.pointers_per_100_examples(), 30.0);
}

TEST(PointerizeUnk, ThresholdBoundary) {
  const auto pc = pointerize_unk(unk_fixture(), 5);
  EXPECT_FALSE(pc.target_vocab.contains("four"));  // 4 occurrences
  EXPECT_TRUE(pc.target_vocab.contains("five"));   // 5 occurrences
  const auto& ex7 = pc.examples[6];
  EXPECT_EQ(ex7.steps[3], StepTarget::shortlist(pc.target_vocab.id("five")));
  // The pointed-at source position in pair 1 is itself UNK.
  EXPECT_EQ(pc.examples[0].source[4], Vocabulary::unk());
}

TEST(PointerizeUnk, UnkTargetsWithoutSourceMatchStayShortlist) {
  const auto pc = pointerize_unk(unk_fixture(), 5);
  EXPECT_EQ(pc.examples[11].steps[3], StepTarget::shortlist(Vocabulary::unk()));
  EXPECT_EQ(pc.examples[13].steps[3], StepTarget::shortlist(Vocabulary::unk()));
}

TEST(PointerizeUnk, SkipsMalformedPairs) {
  std::stringstream ss("a b\tc\nno tab here\n\tonly target\n");
  const auto pc = pointerize_unk(read_text_pairs(ss), 1);
  EXPECT_EQ(pc.stats.examples, 1u);
  EXPECT_EQ(pc.stats.skipped, 2u);
}

TEST(PointerizeUnk, ApplyUnkIsIdempotent) {
  const auto once = apply_unk(unk_fixture(), 5);
  const auto twice = apply_unk(once, 5);
  ASSERT_EQ(once.size(), twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) {
    EXPECT_EQ(once[i].source, twice[i].source);
    EXPECT_EQ(once[i].target, twice[i].target);
  }
}

TEST(PointerizeUnkProperty, LocationsStayInsideSource) {
  Rng rng(12);
  const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TextPair> corpus;
    for (int n = 0; n < 30; ++n) {
      TextPair p;
      for (std::size_t k = 0, len = rng.below(8); k < len; ++k) p.source.push_back(words[rng.below(words.size())]);
      for (std::size_t k = 0, len = 1 + rng.below(8); k < len; ++k) p.target.push_back(words[rng.below(words.size())]);
      corpus.push_back(std::move(p));
    }
    for (const auto& pc : {pointerize_unk(corpus, 1 + rng.below(6)), pointerize_mt(corpus, {}, 1 + rng.below(6))}) {
      for (const auto& ex : pc.examples) {
        EXPECT_NO_THROW(ex.validate());
        for (const auto& s : ex.steps) {
          if (s.is_location() && s.location >= 0) EXPECT_LT(static_cast<std::size_t>(s.location), ex.source.size());
        }
      }
    }
  }
}

TEST(PointerizeEntities, ReproducesFixture) {
  std::ifstream f(kFixtures + "/entity_corpus.jsonl");
  const auto docs = read_tagged_pairs(f);
  std::ifstream e(kFixtures + "/entity_expected.jsonl");
  std::vector<nlohmann::json> expect;
  for (std::string line; std::getline(e, line);) expect.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(docs.size(), expect.size());
  const auto pc = pointerize_entities(docs);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto anon = anonymize_entities(docs[i]);
    EXPECT_EQ(anon.source, toks(expect[i]["source"]));
    EXPECT_EQ(anon.target, toks(expect[i]["target"]));
    EXPECT_EQ(ptr_row(pc.examples[i]), expect[i]["ptr"].get<std::vector<int>>());
  }
  for (int k = 1; k <= 3; ++k) EXPECT_TRUE(pc.target_vocab.contains(entity_placeholder(k)));
}

TEST(PointerizeEntities, SharedIdsPerDocument) {
  TaggedPair d{toks("A x B y A"), toks("E O E O E"), toks("A"), toks("E")};
  EXPECT_EQ(anonymize_entities(d).source, toks("@ent1 x @ent2 y @ent1"));
  d.target_tags = toks("E E");
  EXPECT_THROW(anonymize_entities(d), std::invalid_argument);
}

TEST(MtHeuristic, OrderOfRules) {
  const auto shortlist = Vocabulary::from_counts({{"the", 10}, {"red", 10}}, 1);
  Dictionary dict;
  std::stringstream ds;
  ds << std::ifstream(kFixtures + "/dictionary.tsv").rdbuf();
  dict = read_dictionary(ds);
  const auto src = toks("la voiture rouge gonghong");
  EXPECT_EQ(mt_pointer_heuristic("the", src, shortlist, dict), StepTarget::shortlist(shortlist.id("the")));
  EXPECT_EQ(mt_pointer_heuristic("gonghong", src, shortlist, dict), StepTarget::pointer(3));
  EXPECT_EQ(mt_pointer_heuristic("car", src, shortlist, dict), StepTarget::pointer(1));
  EXPECT_EQ(mt_pointer_heuristic("house", src, shortlist, dict), StepTarget::pointer_to_attention_argmax());
  EXPECT_THROW(mt_pointer_heuristic("the", {}, shortlist, dict), std::invalid_argument);
}

TEST(MtHeuristic, DictionaryFormatErrors) {
  std::stringstream bad("car voiture\n");
  EXPECT_THROW(read_dictionary(bad), FormatError);
}

TEST(Stats, RatesAreExactRatios) {
  PointerStats s;
  s.examples = 1000;
  s.pointers = 27;
  s.target_tokens = 900;
  EXPECT_DOUBLE_EQ(s.pointers_per_100_examples(), 2.7);
  EXPECT_DOUBLE_EQ(s.pointers_per_100_tokens(), 3.0);
  EXPECT_DOUBLE_EQ(PointerStats{}.pointers_per_example(), 0.0);
}

}  // namespace
}  // namespace psx
