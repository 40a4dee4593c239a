#pragma once

#include "nemr/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace nemr {

struct SplitConfig {
  double val_frac = 0.05;
  double test_frac = 0.10;
  // 0 means "use train.seed".
  std::uint64_t seed = 0;
};

struct EvalConfig {
  double classify_train_fraction = 0.10;
  int classify_repetitions = 10;
};

// One parameter swept over a list of values, each value run `trials` times
// with seeds train.seed + trial.
struct SweepConfig {
  std::string param;
  // May be left empty for train_fraction, which then uses `range`.
  std::vector<std::string> values;
  int trials = 10;
  std::string range = "30-85";  // or "15-85"
};

struct RunConfig {
  std::filesystem::path dataset;  // prepared dataset directory
  std::filesystem::path out;      // run directory
  int threads = 1;
  SplitConfig split;
  TrainConfig train;
  EvalConfig eval;
  SweepConfig sweep;

  // Throws ConfigError.
  void validate() const;
  std::uint64_t split_seed() const { return split.seed != 0 ? split.seed : train.seed; }
};

// INI text with sections [run] [split] [train] [eval] [sweep]. Unknown
// sections or keys are errors; missing keys keep their defaults. Relative
// paths resolve against `base_dir`.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Every field, defaults included; parse_run_config(to_ini(c)) == c.
std::string to_ini(const RunConfig& config);

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Sets one key such as "embedding_dim", "lambda", "backend" or
// "train_fraction" (which sets split.test_frac = 1 - value - split.val_frac).
void apply_override(RunConfig& config, const std::string& key, const std::string& value);

// Training-edge fraction grids for sweeps.
std::vector<std::string> train_fraction_grid(bool extended = false);

}  // namespace nemr
