#pragma once

#include "nemr/model.hpp"
#include "nemr/objective.hpp"
#include "nemr/paths.hpp"

#include <filesystem>
#include <functional>
#include <limits>
#include <vector>

namespace nemr {

struct EpochRecord {
  int epoch = 0;
  long step = 0;  // optimizer steps taken so far
  double loss = 0.0;
  double loss_mul = 0.0;
  double loss_sin = 0.0;
  double elbo = 0.0;
  double validation = std::numeric_limits<double>::quiet_NaN();
};

struct TrainHooks {
  // Validation score, higher is better; drives early stopping and best-state
  // selection when set.
  std::function<double(const ModelState&)> validate;
  std::function<void(const ModelState&, const EpochRecord&)> checkpoint;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  ModelState state;  // best state by validation when validate is set, else last
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_validation = std::numeric_limits<double>::quiet_NaN();
  bool stopped_early = false;
};

// Each step draws batch_pairs multi-path sets (a shuffled pass per epoch) and
// batch_pairs single-path entries (cycling through their own shuffle), takes
// one Adam step on the combined objective, and records per-epoch means.
TrainResult train(ModelState initial, const Graph& train_graph, const std::vector<MultiPathSet>& multi,
                  const SinglePathSet& single, const TrainConfig& cfg, const TrainHooks& hooks = {});

// step,loss,loss_mul,loss_sin,elbo
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace nemr
