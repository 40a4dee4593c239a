#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(NEMR_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "nemr_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    ASSERT_EQ(run("prepare " + std::string(NEMR_SOURCE_DIR) + "/data/toy --out " + (root_ / "toy").string()), 0);
  }

  static fs::path write_config(const std::string& name, const std::string& body) {
    const auto path = root_ / name;
    std::ofstream(path) << "[run]\ndataset = toy\nout = runs/" << name << "\n"
                        << "[split]\nval_frac = 0.1\ntest_frac = 0.2\n"
                        << "[train]\nbackend = 2N\nembedding_dim = 8\nlearning_rate = 0.01\nepochs = 20\n"
                        << "batch_pairs = 64\nmax_len = 5\npatience = 0\n"
                        << "[eval]\nclassify_train_fraction = 0.5\nclassify_repetitions = 2\n"
                        << body;
    return path;
  }

  static inline fs::path root_;
};

}  // namespace

TEST_F(Cli, PrepareIsIdempotentAndRejectsUnknownLayouts) {
  const auto again = root_ / "toy_again";
  ASSERT_EQ(run("prepare " + std::string(NEMR_SOURCE_DIR) + "/data/toy --out " + again.string()), 0);
  for (const char* f : {"edges.txt", "labels.txt", "nodes.txt", "stats.json"}) {
    EXPECT_EQ(slurp(root_ / "toy" / f), slurp(again / f)) << f;
  }
  auto stats = nlohmann::json::parse(slurp(again / "stats.json"));
  EXPECT_EQ(stats["nodes"], 22);
  EXPECT_EQ(stats["edges"], 39);
  EXPECT_EQ(stats["labels"], 3);
  fs::create_directories(root_ / "empty");
  EXPECT_EQ(run("prepare " + (root_ / "empty").string() + " --out " + (root_ / "x").string()), 2);
}

TEST_F(Cli, ConfigErrorsExitTwo) {
  const auto bad_backend = root_ / "bad_backend.ini";
  std::ofstream(bad_backend) << "[run]\ndataset = toy\n[train]\nbackend = GCN\n";
  EXPECT_EQ(run("train --config " + bad_backend.string()), 2);
  EXPECT_EQ(run("train --config " + write_config("bad_key.ini", "[model]\nx = 1\n").string()), 2);
  EXPECT_EQ(run("train --config " + (root_ / "missing.ini").string()), 2);
  EXPECT_EQ(run("bogus"), 2);
  EXPECT_EQ(run("train"), 2);
}

TEST_F(Cli, MissingDatasetIsConfigErrorAndCorruptDataIsRuntimeError) {
  const auto missing = root_ / "no_data.ini";
  std::ofstream(missing) << "[run]\ndataset = nowhere\nout = runs/no_data\n";
  EXPECT_EQ(run("train --config " + missing.string()), 2);

  fs::copy(root_ / "toy", root_ / "corrupt", fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  std::ofstream(root_ / "corrupt" / "edges.txt", std::ios::app) << "7\n";
  const auto corrupt = root_ / "corrupt.ini";
  std::ofstream(corrupt) << "[run]\ndataset = corrupt\nout = runs/corrupt\n";
  EXPECT_EQ(run("train --config " + corrupt.string()), 3);
}

TEST_F(Cli, TrainWritesRunDirectoryQuickly) {
  const auto cfg = write_config("train.ini", "");
  const auto out = root_ / "runs" / "train.ini";
  const auto start = std::chrono::steady_clock::now();
  ASSERT_EQ(run("train --config " + cfg.string() + " --seed 4 --threads 1"), 0);
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 10.0);
  for (const char* f : {"config.ini", "metadata.json", "metrics.json", "model.ckpt", "history.csv", "split/train.txt",
                        "pools/multi.txt", "pools/single.txt"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  auto meta = nlohmann::json::parse(slurp(out / "metadata.json"));
  EXPECT_EQ(meta["seed"], 4);
  EXPECT_EQ(meta["train_config"]["lambda"], 0.5);
  EXPECT_TRUE(meta.contains("build"));
  EXPECT_TRUE(meta.contains("wall_seconds"));
  EXPECT_FALSE(fs::exists(out / ".lock"));
}

TEST_F(Cli, EvalIsDeterministic) {
  const auto cfg = write_config("eval.ini", "");
  const auto out = root_ / "runs" / "eval.ini";
  ASSERT_EQ(run("train --config " + cfg.string()), 0);
  ASSERT_EQ(run("eval --config " + cfg.string()), 0);
  const auto first = slurp(out / "metrics.json");
  ASSERT_EQ(run("eval --config " + cfg.string()), 0);
  EXPECT_EQ(slurp(out / "metrics.json"), first);
  auto metrics = nlohmann::json::parse(first);
  EXPECT_TRUE(metrics.contains("auc"));
  EXPECT_TRUE(metrics.contains("ap"));
  EXPECT_TRUE(metrics.contains("classification"));
  EXPECT_EQ(run("eval --config " + cfg.string() + " --checkpoint " + (root_ / "none.ckpt").string()), 3);
}

TEST_F(Cli, SweepResumesWithoutDuplicates) {
  const auto cfg = write_config("sweep.ini", "[sweep]\nparam = embedding_dim\nvalues = 4, 8\ntrials = 2\n");
  const auto csv = root_ / "runs" / "sweep.ini" / "sweep.csv";
  ASSERT_EQ(run("sweep --config " + cfg.string()), 0);
  std::string full = slurp(csv);
  EXPECT_EQ(std::count(full.begin(), full.end(), '\n'), 5);
  EXPECT_EQ(full.substr(0, full.find('\n')), "param,value,trial,auc,ap,micro_f1");

  // Drop the last row and resume: only that row comes back.
  std::string truncated = full.substr(0, full.rfind('\n', full.size() - 2) + 1);
  std::ofstream(csv, std::ios::trunc) << truncated;
  ASSERT_EQ(run("sweep --config " + cfg.string()), 0);
  EXPECT_EQ(slurp(csv), full);
  EXPECT_EQ(run("sweep --config " + cfg.string() + " --range 15-85"), 2);
}
