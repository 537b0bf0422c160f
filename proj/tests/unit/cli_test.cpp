#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;
const std::string kCli = PSX_CLI;
const std::string kFixtures = PSX_FIXTURES;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("psx_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the CLI; stdout goes to out.txt and stderr to err.txt in the test directory.
  int run(const std::string& args) {
    const std::string cmd = kCli + " " + args + " > " + path("out.txt") + " 2> " + path("err.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  static std::string slurp(const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  }

  std::string out() const { return slurp(path("out.txt")); }
  std::string err() const { return slurp(path("err.txt")); }

  fs::path dir_;
};

TEST_F(Cli, HelpAndUnknownCommand) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_NE(out().find("gen-data"), std::string::npos);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run(""), 1);
}

TEST_F(Cli, GenDataIsByteIdenticalPerSeed) {
  const std::string flags = " --task rarest --count 200 --dev-count 20 --test-count 20 --seed 1";
  ASSERT_EQ(run("gen-data --out " + path("a") + flags), 0) << err();
  ASSERT_EQ(run("gen-data --out " + path("b") + flags), 0) << err();
  for (const char* f : {"train.jsonl", "dev.jsonl", "test.jsonl", "stats.json", "source.vocab", "target.vocab"}) {
    EXPECT_EQ(slurp(path("a") + "/" + f), slurp(path("b") + "/" + f)) << f;
  }
  ASSERT_EQ(run("gen-data --out " + path("c") + " --task rarest --count 200 --dev-count 20 --test-count 20 --seed 2"),
            0);
  EXPECT_NE(slurp(path("a") + "/train.jsonl"), slurp(path("c") + "/train.jsonl"));
}

TEST_F(Cli, RarestStatsReportTaskShape) {
  ASSERT_EQ(run("gen-data --task rarest --vocab 600 --len 7 --seed 1 --count 100 --dev-count 10 --test-count 10 --out " +
                path("r")),
            0);
  const auto stats = nlohmann::json::parse(slurp(path("r") + "/stats.json"));
  EXPECT_EQ(stats["vocab"], 600);
  EXPECT_EQ(stats["len"], 7);
  EXPECT_EQ(stats["shortlist"], 540);
}

TEST_F(Cli, GenDataUsageAndIoErrors) {
  EXPECT_EQ(run("gen-data --task rarest --vocab 600 --len 700 --out " + path("x")), 1);
  EXPECT_EQ(run("gen-data --task nonsense --out " + path("x")), 1);
  std::ofstream(path("file")) << "x";
  EXPECT_EQ(run("gen-data --task copy --count 5 --out " + path("file") + "/sub"), 2);
}

TEST_F(Cli, PointerizeUnkFixture) {
  ASSERT_EQ(run("pointerize --mode unk --min-count 5 --input " + kFixtures + "/unk_corpus.tsv --out " + path("p")), 0)
      << err();
  const auto stats = nlohmann::json::parse(slurp(path("p") + "/stats.json"));
  EXPECT_EQ(stats["pointers"], 6);
  EXPECT_EQ(stats["examples"], 20);
  EXPECT_EQ(stats["pointers_per_100_examples"], 30.0);
  std::ifstream got(path("p") + "/train.jsonl"), want(kFixtures + "/unk_expected.jsonl");
  std::string g, w;
  int n = 0;
  while (std::getline(want, w)) {
    ASSERT_TRUE(std::getline(got, g));
    EXPECT_EQ(nlohmann::json::parse(g)["ptr"], nlohmann::json::parse(w)["ptr"]) << "pair " << n + 1;
    ++n;
  }
  EXPECT_FALSE(std::getline(got, g));
}

TEST_F(Cli, PointerizeEntityFixture) {
  ASSERT_EQ(run("pointerize --mode entity --input " + kFixtures + "/entity_corpus.jsonl --out " + path("e")), 0)
      << err();
  std::ifstream got(path("e") + "/train.jsonl"), want(kFixtures + "/entity_expected.jsonl");
  std::string g, w;
  while (std::getline(want, w)) {
    ASSERT_TRUE(std::getline(got, g));
    EXPECT_EQ(nlohmann::json::parse(g)["ptr"], nlohmann::json::parse(w)["ptr"]);
  }
}

TEST_F(Cli, PointerizeEdgeCases) {
  std::ofstream(path("empty.tsv")).close();
  ASSERT_EQ(run("pointerize --mode unk --input " + path("empty.tsv") + " --out " + path("o")), 0) << err();
  EXPECT_EQ(slurp(path("o") + "/train.jsonl"), "");
  const auto stats = nlohmann::json::parse(slurp(path("o") + "/stats.json"));
  EXPECT_EQ(stats["examples"], 0);
  EXPECT_EQ(stats["pointers"], 0);

  EXPECT_EQ(run("pointerize --mode mt --input " + kFixtures + "/unk_corpus.tsv --out " + path("m")), 1);
  EXPECT_EQ(run("pointerize --mode mt --dict " + kFixtures + "/dictionary.tsv --input " + kFixtures +
                "/unk_corpus.tsv --out " + path("m")),
            0)
      << err();
  EXPECT_EQ(run("pointerize --mode unk --input " + path("missing.tsv") + " --out " + path("o")), 2);
  EXPECT_EQ(run("pointerize --mode sideways --input " + path("empty.tsv") + " --out " + path("o")), 1);
}

TEST_F(Cli, TrainEvalCurvesRoundTrip) {
  ASSERT_EQ(run("gen-data --task copy --vocab 40 --shortlist 30 --len 5 --count 100 --dev-count 10 --test-count 10 "
                "--out " +
                path("d")),
            0);
  const std::string train = "train --data " + path("d") +
                            " --hidden 8 --embed 8 --switch-hidden 8 --max-updates 20 --eval-every 10 --batch-size 4 "
                            "--out ";
  ASSERT_EQ(run(train + path("run1")), 0) << err();
  const auto summary = nlohmann::json::parse(out());
  EXPECT_EQ(summary["updates"], 20);
  ASSERT_EQ(run(train + path("run2")), 0);
  EXPECT_EQ(slurp(path("run1") + "/curves.json"), slurp(path("run2") + "/curves.json"));

  ASSERT_EQ(run("eval --checkpoint " + path("run1") + "/model.ckpt --data " + path("d") + "/test.jsonl"), 0) << err();
  const auto metrics = nlohmann::json::parse(out());
  for (const char* k : {"error_rate", "mean_nll", "pointer_usage", "switch_accuracy", "token_accuracy"}) {
    EXPECT_TRUE(metrics.contains(k)) << k;
  }
  EXPECT_EQ(metrics["examples"], 10);

  ASSERT_EQ(run("curves --run " + path("run1")), 0);
  const std::string first = out();
  EXPECT_EQ(first, slurp(path("run1") + "/curves.csv"));
  ASSERT_EQ(run("curves --run " + path("run1")), 0);
  EXPECT_EQ(out(), first);

  EXPECT_EQ(run("eval --checkpoint " + path("nope.ckpt") + " --data " + path("d") + "/test.jsonl"), 2);
  EXPECT_EQ(run(train + path("run3") + " --optimizer sgd"), 1);
}

TEST_F(Cli, DecodeChecksVocabularies) {
  ASSERT_EQ(run("gen-data --task copy --vocab 40 --shortlist 30 --len 5 --count 20 --dev-count 4 --test-count 4 "
                "--out " +
                path("d")),
            0);
  ASSERT_EQ(run("train --data " + path("d") +
                " --hidden 4 --embed 4 --switch-hidden 4 --max-updates 2 --eval-every 1 --batch-size 2 --out " +
                path("r")),
            0)
      << err();
  std::ofstream(path("src.txt")) << "c3 c4 c5\n";
  std::ofstream(path("small.vocab")) << "<unk>\n<s>\n</s>\nc3\n";
  EXPECT_EQ(run("decode --checkpoint " + path("r") + "/model.ckpt --source-vocab " + path("small.vocab") +
                " --target-vocab " + path("d") + "/target.vocab --input " + path("src.txt")),
            3);
  ASSERT_EQ(run("decode --checkpoint " + path("r") + "/model.ckpt --source-vocab " + path("d") +
                "/source.vocab --target-vocab " + path("d") + "/target.vocab --max-len 3 --input " + path("src.txt")),
            0)
      << err();
  std::istringstream lines(out());
  std::string line;
  int tokens = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_TRUE(j.contains("kind"));
    ++tokens;
  }
  EXPECT_EQ(tokens, 3);
}

TEST_F(Cli, GradcheckExitCodes) {
  EXPECT_EQ(run("gradcheck --seeds 1"), 0) << err();
  EXPECT_EQ(run("gradcheck --seeds 1 --tol 1e-30"), 4);
  EXPECT_EQ(run("gradcheck --hidden 0"), 1);
}

}  // namespace
