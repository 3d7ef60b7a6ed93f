// End-to-end runs of the adafm binary on data/toy.tsv.
#include <gtest/gtest.h>
#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "adafm/data_io.hpp"
#include "adafm/model_io.hpp"

namespace fs = std::filesystem;
using namespace adafm;

namespace {

const std::string kCli = ADAFM_CLI;
const std::string kToy = ADAFM_TOY_DATA;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("adafm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ASSERT_EQ(run("prepare --data " + kToy + " --out " + path("data")), 0) << err();
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

  // Runs the CLI; stdout and stderr land in files under the test directory.
  int run(const std::string& args) {
    const std::string cmd =
        kCli + " " + args + " > " + path("stdout.txt") + " 2> " + path("stderr.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string out() const { return slurp(dir_ / "stdout.txt"); }
  std::string err() const { return slurp(dir_ / "stderr.txt"); }

  std::string split_args() const { return " --train " + path("data/train.tsv") + " --test " + path("data/test.tsv"); }

  // Model whose score is 1 exactly for each user's held-out items:
  // v_u = e_u and v_i = sum of e_u over users holding out i (k = n_users).
  std::string write_oracle() const {
    const auto d = load_prepared(path("data/train.tsv"), path("data/test.tsv"));
    const std::size_t n = d.train.n_users();
    FmParams p(n + d.train.n_items(), n);
    for (UserId u = 0; u < n; ++u) {
      p.v(u, u) = 1.0;
      for (const auto& ig : d.test.items_of(u)) p.v(n + ig.item, u) = 1.0;
    }
    EnsembleModel m;
    m.add(1.0, p);
    save_model(path("oracle.txt"), m);
    return path("oracle.txt");
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, PrepareWritesSplitsAndMeta) {
  EXPECT_TRUE(fs::exists(path("data/train.tsv")));
  EXPECT_TRUE(fs::exists(path("data/test.tsv")));
  const auto meta = slurp(path("data/meta.txt"));
  EXPECT_NE(meta.find("command = prepare\n"), std::string::npos);
  EXPECT_NE(meta.find("stat.n_users = 20\n"), std::string::npos);
  EXPECT_NE(meta.find("stat.entries = 100\n"), std::string::npos);
  EXPECT_NE(meta.find("split_seed = 42\n"), std::string::npos);
}

TEST_F(Cli, TrainPrfmHeader) {
  ASSERT_EQ(run("train --algorithm PRFM --k 2 --iterations 2000" + split_args() + " --out " + path("m")), 0)
      << err();
  const auto model = slurp(path("m/model.txt"));
  EXPECT_EQ(model.rfind("ADAFM v1\nd=36 k=2 T=1\n", 0), 0u);
  EXPECT_NE(slurp(path("m/rounds.csv")).find("round,alpha,"), std::string::npos);
}

TEST_F(Cli, TrainAdafmFourComponentsMergedRankEight) {
  ASSERT_EQ(run("train --algorithm AdaFM-P --rounds 4 --k 2 --iterations 2000" + split_args() + " --out " +
                path("m")),
            0)
      << err();
  EXPECT_EQ(slurp(path("m/model.txt")).rfind("ADAFM v1\nd=36 k=2 T=4\n", 0), 0u);
  EXPECT_EQ(merge_ensemble(load_model(path("m/model.txt"))).rank(), 8u);
  EXPECT_NE(slurp(path("m/meta.txt")).find("stat.merged_rank = 8\n"), std::string::npos);
}

TEST_F(Cli, DynamicWithoutRhoUsesLoggedDefault) {
  ASSERT_EQ(run("train --algorithm AdaFM-D --rounds 2 --iterations 1000" + split_args() + " --out " + path("m")),
            0)
      << err();
  EXPECT_NE(err().find("rho not given; using default rho=0.3"), std::string::npos);
  const auto meta = slurp(path("m/meta.txt"));
  EXPECT_NE(meta.find("rho = 0.3\n"), std::string::npos);
  EXPECT_NE(meta.find("sampler = dynamic\n"), std::string::npos);
}

TEST_F(Cli, RerunFromMetaIsByteIdentical) {
  ASSERT_EQ(run("train --algorithm AdaFM-W --rounds 2 --iterations 1500" + split_args() + " --out " + path("a")),
            0)
      << err();
  ASSERT_EQ(run("train --config " + path("a/meta.txt") + " --out " + path("b")), 0) << err();
  EXPECT_EQ(slurp(path("a/model.txt")), slurp(path("b/model.txt")));
  EXPECT_EQ(slurp(path("a/rounds.csv")), slurp(path("b/rounds.csv")));
  // The config of another command is refused.
  EXPECT_EQ(run("evaluate --config " + path("a/meta.txt")), 2);
}

TEST_F(Cli, EvaluateOracleConstantAndDeterminism) {
  const auto oracle = write_oracle();
  ASSERT_EQ(run("evaluate --model " + oracle + split_args() + " --out " + path("e1")), 0) << err();
  EXPECT_EQ(slurp(path("e1/report.txt")).rfind("metric=auc value=1 users=20 skipped=0\n", 0), 0u)
      << slurp(path("e1/report.txt"));

  EnsembleModel zero;
  zero.add(1.0, FmParams(36, 1));
  save_model(path("zero.txt"), zero);
  ASSERT_EQ(run("evaluate --model " + path("zero.txt") + split_args() + " --out " + path("e2")), 0) << err();
  EXPECT_EQ(slurp(path("e2/report.txt")).rfind("metric=auc value=0.5 ", 0), 0u);

  ASSERT_EQ(run("train --iterations 2000" + split_args() + " --out " + path("m")), 0) << err();
  const std::string ev = "evaluate --metric ndcg@5 --per-user --model " + path("m/model.txt") + split_args();
  ASSERT_EQ(run(ev + " --out " + path("e3")), 0) << err();
  ASSERT_EQ(run(ev + " --out " + path("e4")), 0) << err();
  EXPECT_EQ(slurp(path("e3/report.txt")), slurp(path("e4/report.txt")));
  EXPECT_EQ(slurp(path("e3/per_user.csv")), slurp(path("e4/per_user.csv")));
  EXPECT_EQ(slurp(path("e3/report.txt")).rfind("metric=ndcg@5 value=", 0), 0u);
}

TEST_F(Cli, EvaluateRejectsDimensionMismatch) {
  EnsembleModel m;
  m.add(1.0, FmParams(10, 1));
  save_model(path("small.txt"), m);
  EXPECT_EQ(run("evaluate --model " + path("small.txt") + split_args() + " --out " + path("e")), 2);
  EXPECT_NE(err().find("error: "), std::string::npos);
}

TEST_F(Cli, PredictOracleAndCatalog) {
  const auto oracle = write_oracle();
  const auto d = load_prepared(path("data/train.tsv"), path("data/test.tsv"));
  for (UserId u = 0; u < d.test.n_users(); ++u) {
    const auto held = d.test.items_of(u);
    if (held.size() != 1) continue;
    const auto& user = d.test.user_tokens()[u];
    ASSERT_EQ(run("predict --n 1 --user " + user + " --model " + oracle + split_args() + " --out " + path("p")), 0)
        << err();
    EXPECT_EQ(out(), "1\t" + d.test.item_tokens()[held[0].item] + "\t1\n") << user;
  }
  ASSERT_EQ(run("predict --n 100 --user u1 --include-seen --model " + oracle + split_args() + " --out " +
                path("p")),
            0);
  const auto listing = out();
  EXPECT_EQ(std::count(listing.begin(), listing.end(), '\n'), 16);
  EXPECT_EQ(slurp(path("p/predictions.tsv")), listing);
  EXPECT_EQ(run("predict --n 1 --user nobody --model " + oracle + split_args()), 2);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("train --algorithm LFM-S --sampler uniform" + split_args() + " --out " + path("x")), 2);
  EXPECT_EQ(run("train --algorithm PRFM --rounds 3" + split_args() + " --out " + path("x")), 2);
  EXPECT_EQ(run("train --k 0" + split_args() + " --out " + path("x")), 2);
  EXPECT_EQ(run("train --train " + path("missing.tsv") + " --test " + path("missing.tsv")), 2);
  EXPECT_EQ(run("train --no-such-flag 1"), 2);
  EXPECT_EQ(run("train --eta 1e200 --iterations 100" + split_args() + " --out " + path("x")), 3);
  EXPECT_NE(err().find("error: "), std::string::npos);
}

TEST_F(Cli, SweepAndCvEta) {
  ASSERT_EQ(run("sweep --values 1,2,4 --iterations 1000" + split_args() + " --out " + path("s")), 0) << err();
  const auto csv = slurp(path("s/sweep.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv.rfind("x,metric_value,algorithm,seed,status\n1,", 0), 0u);

  ASSERT_EQ(run("cv-eta --folds 2 --eta-grid 0.1,0.01 --iterations 500 --train " + path("data/train.tsv") +
                " --out " + path("cv")),
            0)
      << err();
  const auto report = slurp(path("cv/report.txt"));
  EXPECT_EQ(report.rfind("eta=0.1 metric=auc value=", 0), 0u);
  EXPECT_NE(report.find("\nbest_eta="), std::string::npos);
}
