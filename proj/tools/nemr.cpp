#include "nemr/pipeline.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>
#include <optional>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required) {
  auto* opt = cmd->add_option("--config", f.config, "Run configuration (INI)");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "Output directory (overrides run.out)");
  cmd->add_option("--seed", f.seed, "Training seed (overrides train.seed)");
  cmd->add_option("--threads", f.threads, "Worker threads (overrides run.threads)")->check(CLI::PositiveNumber);
}

nemr::RunConfig resolve(const CommonFlags& f) {
  nemr::RunConfig cfg = f.config.empty() ? nemr::RunConfig{} : nemr::load_run_config(f.config);
  if (!f.out.empty()) cfg.out = f.out;
  if (f.seed) cfg.train.seed = *f.seed;
  if (f.threads) cfg.threads = *f.threads;
  cfg.validate();
  return cfg;
}

void log_epoch(const nemr::EpochRecord& r) {
  spdlog::info("epoch {} step {} loss {:.6g} (mul {:.6g}, sin {:.6g}, elbo {:.6g}) val_auc {:.4f}", r.epoch, r.step,
               r.loss, r.loss_mul, r.loss_sin, r.elbo, r.validation);
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("nemr"));
  spdlog::set_pattern("[%H:%M:%S] %v");

  CLI::App app{"NEMR network embedding: prepare datasets, train, evaluate, sweep"};
  app.require_subcommand(1);
  app.set_version_flag("--version", nemr::build_version());

  std::string raw_dir;
  CommonFlags prep_flags;
  auto* prepare = app.add_subcommand("prepare", "Normalize a raw dataset directory");
  prepare->add_option("raw", raw_dir, "Raw dataset directory")->required()->check(CLI::ExistingDirectory);
  add_common(prepare, prep_flags, false);

  CommonFlags train_flags;
  auto* train = app.add_subcommand("train", "Split, extract paths, train, and score a run");
  add_common(train, train_flags, true);

  CommonFlags eval_flags;
  std::string checkpoint, split_dir;
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a split");
  add_common(eval, eval_flags, true);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint (default <out>/model.ckpt)");
  eval->add_option("--split", split_dir, "Split directory (default <out>/split)");

  CommonFlags sweep_flags;
  std::string range;
  auto* sweep = app.add_subcommand("sweep", "Run a one-parameter sweep into sweep.csv");
  add_common(sweep, sweep_flags, true);
  sweep->add_option("--range", range, "Replace the train_fraction grid with 0.30-0.85 or 0.15-0.85")
      ->check(CLI::IsMember({"30-85", "15-85"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*prepare) {
      if (prep_flags.out.empty()) throw nemr::ConfigError("prepare needs --out");
      const auto stats = nemr::prepare_dataset(raw_dir, prep_flags.out);
      std::cout << stats.dump(2) << '\n';
    } else if (*train) {
      auto cfg = resolve(train_flags);
      spdlog::info("training {} (K={}, lambda={}) into {}", nemr::to_string(cfg.train.backend),
                   cfg.train.embedding_dim, cfg.train.lambda, cfg.out.string());
      const auto meta = nemr::train_command(cfg, log_epoch);
      std::cout << meta["metrics"].dump(2) << '\n';
      spdlog::info("done in {:.1f}s, best epoch {}", meta["wall_seconds"].get<double>(),
                   meta["best_epoch"].get<int>());
    } else if (*eval) {
      auto cfg = resolve(eval_flags);
      if (cfg.out.empty()) throw nemr::ConfigError("eval needs --out or run.out");
      const auto ck = checkpoint.empty() ? cfg.out / "model.ckpt" : std::filesystem::path(checkpoint);
      const auto split = split_dir.empty() ? cfg.out / "split" : std::filesystem::path(split_dir);
      std::cout << nemr::eval_command(ck, split, cfg, cfg.out).dump(2) << '\n';
    } else if (*sweep) {
      auto cfg = resolve(sweep_flags);
      if (!range.empty()) {
        if (cfg.sweep.param != "train_fraction") throw nemr::ConfigError("--range applies to train_fraction sweeps");
        cfg.sweep.range = range;
        cfg.sweep.values = nemr::train_fraction_grid(range == "15-85");
      }
      const auto rows = nemr::sweep_command(cfg, [](const std::string& line) { spdlog::info("{}", line); });
      spdlog::info("{} new rows in {}", rows, (cfg.out / "sweep.csv").string());
    }
  } catch (const nemr::ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return 0;
}
