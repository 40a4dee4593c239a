#pragma once

#include "nemr/config.hpp"
#include "nemr/evaluation.hpp"
#include "nemr/graph.hpp"
#include "nemr/paths.hpp"
#include "nemr/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

namespace nemr {

using Json = nlohmann::ordered_json;

// Raw layouts understood by prepare_dataset:
//   cora      cora.cites (cited citing) + cora.content (id ... class)
//   edgelist  edges.txt (u v) [+ labels.txt (id<TAB>class)]
// Either layout may carry SHA256SUMS (sha256sum format), which is verified.
// Writes edges.txt (dense ids), nodes.txt (dense<TAB>raw), labels.txt when
// labels exist, and stats.json; returns the stats.
Json prepare_dataset(const std::filesystem::path& raw_dir, const std::filesystem::path& out_dir);
LabeledDataset load_prepared(const std::filesystem::path& dir);

std::string sha256_file(const std::filesystem::path& path);

struct Pools {
  std::vector<MultiPathSet> multi;
  SinglePathSet single;
  PoolStats multi_stats;
  PoolStats single_stats;
};

Pools build_pools(const Graph& train_graph, const TrainConfig& cfg, int threads);
Json pool_summary(const Pools& pools);

struct ExperimentResult {
  EdgeSplit split;
  TrainResult training;
  LinkMetrics test;
  std::optional<ClassifierReport> classification;
  // Same protocol with labels permuted among labeled nodes.
  std::optional<ClassifierReport> shuffled;
  Json pools;
  double seconds = 0.0;
};

struct ExperimentHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(const ModelState&, const EpochRecord&)> checkpoint;
  // Called once the split exists, before pool extraction.
  std::function<void(const EdgeSplit&)> on_split;
  std::function<void(const Pools&)> on_pools;
};

// split -> pools -> train (early stopping on validation AUC) -> test AUC/AP,
// plus node classification when the dataset has labels.
ExperimentResult run_experiment(const LabeledDataset& data, const RunConfig& cfg, const ExperimentHooks& hooks = {});

// Label-permutation baseline for classify_nodes.
ClassifierReport shuffled_baseline(const MatrixXd& embeddings, std::span<const int> labels, int num_classes,
                                   double train_fraction, std::uint64_t seed, int repetitions);

// Output of `git describe` captured when the build was configured.
std::string build_version();

// Exclusive ownership of a run directory via <dir>/.lock. A lock left by a
// dead process is taken over.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

// Run directory: config.ini, split/, pools/, model.ckpt, history.csv,
// metadata.json, metrics.json.
Json train_command(const RunConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {});
// Scores a checkpoint on a split directory and writes metrics.json into `out`.
Json eval_command(const std::filesystem::path& checkpoint, const std::filesystem::path& split_dir,
                  const RunConfig& cfg, const std::filesystem::path& out);
// Appends to <out>/sweep.csv, skipping (param, value, trial) rows already
// present. Failed points are logged to <out>/sweep_errors.log. Returns the
// number of rows written.
std::size_t sweep_command(const RunConfig& cfg, const std::function<void(const std::string&)>& log = {});

inline constexpr int kMetricsFormatVersion = 1;
inline constexpr const char* kSweepHeader = "param,value,trial,auc,ap,micro_f1";

}  // namespace nemr
