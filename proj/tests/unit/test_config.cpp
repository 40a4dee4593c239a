#include "nemr/checkpoint.hpp"
#include "nemr/config.hpp"
#include "nemr/objective.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace nemr;

namespace {

void expect_same(const RunConfig& a, const RunConfig& b) {
  EXPECT_EQ(to_ini(a), to_ini(b));
  EXPECT_EQ(a.dataset, b.dataset);
  EXPECT_EQ(a.train.lambda, b.train.lambda);
  EXPECT_EQ(a.train.learning_rate, b.train.learning_rate);
  EXPECT_EQ(a.split.val_frac, b.split.val_frac);
  EXPECT_EQ(a.sweep.values, b.sweep.values);
}

}  // namespace

TEST(RunConfig, DefaultsWhenKeysMissing) {
  auto cfg = parse_run_config("[train]\nbackend = 2N\n");
  EXPECT_EQ(cfg.train.lambda, 0.5);
  EXPECT_EQ(cfg.train.embedding_dim, 128);
  EXPECT_EQ(cfg.train.learning_rate, 0.001);
  EXPECT_EQ(cfg.train.backend, Backend::TwoNorm);
  EXPECT_EQ(cfg.split.val_frac, 0.05);
  EXPECT_EQ(cfg.split.test_frac, 0.10);
  EXPECT_EQ(cfg.eval.classify_repetitions, 10);
  EXPECT_EQ(cfg.split_seed(), cfg.train.seed);
}

TEST(RunConfig, RoundTripsLosslessly) {
  auto cfg = parse_run_config(
      "[run]\ndataset = data/x\nout = runs/x\nthreads = 2\n"
      "[split]\nval_frac = 0.07\ntest_frac = 0.13\nseed = 5\n"
      "[train]\nlambda = 0.1\nlearning_rate = 0.0003\nbackend = MLP\nsingle_path_loss_mode = paper-literal\n"
      "symmetric_kl = true\nmax_pairs = 123\n"
      "[eval]\nclassify_train_fraction = 0.2\n"
      "[sweep]\nparam = embedding_dim\nvalues = 4, 8,16\ntrials = 3\n",
      "/base");
  EXPECT_EQ(cfg.dataset, std::filesystem::path("/base/data/x"));
  EXPECT_EQ(cfg.sweep.values, (std::vector<std::string>{"4", "8", "16"}));
  EXPECT_TRUE(cfg.train.symmetric_kl);
  EXPECT_EQ(cfg.split_seed(), 5u);
  expect_same(parse_run_config(to_ini(cfg)), cfg);

  auto defaults = RunConfig{};
  expect_same(parse_run_config(to_ini(defaults)), defaults);
}

TEST(RunConfig, RejectsUnknownAndInvalid) {
  EXPECT_THROW(parse_run_config("[train]\nbackend = GCN\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[train]\nlamda = 0.3\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[model]\nx = 1\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[train]\nepochs = ten\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[train]\nlambda = 2\n").validate(), ConfigError);
  EXPECT_THROW(parse_run_config("[split]\nval_frac = 0.5\ntest_frac = 0.6\n").validate(), ConfigError);
  EXPECT_THROW(parse_run_config("[sweep]\nparam = lambda\nvalues = 0.1, 7\n").validate(), ConfigError);
}

TEST(RunConfig, OverridesAndFractionGrid) {
  RunConfig cfg;
  apply_override(cfg, "train_fraction", "0.6");
  EXPECT_NEAR(cfg.split.test_frac, 0.35, 1e-12);
  apply_override(cfg, "embedding_dim", "4");
  EXPECT_EQ(cfg.train.embedding_dim, 4);
  apply_override(cfg, "backend", "VI");
  EXPECT_EQ(cfg.train.backend, Backend::Variational);
  EXPECT_THROW(apply_override(cfg, "nonsense", "1"), ConfigError);

  auto grid = train_fraction_grid();
  EXPECT_EQ(grid.front(), "0.30");
  EXPECT_EQ(grid.back(), "0.85");
  EXPECT_EQ(train_fraction_grid(true).front(), "0.15");
  auto swept = parse_run_config("[sweep]\nparam = train_fraction\n");
  EXPECT_EQ(swept.sweep.values, grid);
}

TEST(TrainConfigJson, RoundTrip) {
  TrainConfig cfg;
  cfg.lambda = 0.25;
  cfg.backend = Backend::Mlp;
  cfg.max_pairs = 17;
  auto back = train_config_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
}

TEST(Checkpoint, RoundTripsStateAndMoments) {
  TrainConfig cfg;
  cfg.backend = Backend::Variational;
  cfg.embedding_dim = 3;
  cfg.hidden_dim = 4;
  auto state = init_state(cfg, 7);
  Gradients g;
  for (auto* t : state.trainables()) g.push_back(MatrixXd::Random(t->rows(), t->cols()));
  adam_step(state, g, 0.01);
  const auto path = std::filesystem::temp_directory_path() / "nemr_test.ckpt";
  save_checkpoint(path, cfg, state, 12);
  auto ck = load_checkpoint(path);
  EXPECT_EQ(ck.epoch, 12);
  EXPECT_EQ(ck.state.backend, Backend::Variational);
  EXPECT_EQ(ck.state.adam.step, 1);
  EXPECT_EQ(to_json(ck.config), to_json(cfg));
  auto a = state.trainables();
  auto b = ck.state.trainables();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(*a[k], *b[k]);
    EXPECT_EQ(state.adam.m[k], ck.state.adam.m[k]);
    EXPECT_EQ(state.adam.v[k], ck.state.adam.v[k]);
  }
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const auto path = std::filesystem::temp_directory_path() / "nemr_bad.ckpt";
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACKPT";
  }
  EXPECT_THROW(load_checkpoint(path), Error);
  EXPECT_THROW(load_checkpoint(path.string() + ".missing"), Error);

  TrainConfig cfg;
  cfg.backend = Backend::TwoNorm;
  cfg.embedding_dim = 2;
  save_checkpoint(path, cfg, init_state(cfg, 3), 0);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
  EXPECT_THROW(load_checkpoint(path), Error);
}
