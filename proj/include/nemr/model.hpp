#pragma once

#include "nemr/graph.hpp"
#include "nemr/relation.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace nemr {

enum class SinglePathMode {
  BoundedSurrogate,  // exp(R - r'), floor 0
  PaperLiteral,      // -exp(r' - R), unbounded below
};

SinglePathMode parse_single_path_mode(std::string_view name);  // "bounded-surrogate" | "paper-literal"
std::string_view to_string(SinglePathMode m);

struct TrainConfig {
  double lambda = 0.5;
  int embedding_dim = 128;
  int hidden_dim = 128;
  double learning_rate = 0.001;
  int epochs = 200;
  int batch_pairs = 512;
  int max_len = 10;
  std::size_t max_paths = 10;
  // 0 means 10 * (number of train edges).
  std::size_t max_pairs = 0;
  std::size_t max_expansions = 20000;
  int mc_samples = 1;
  Backend backend = Backend::Variational;
  SinglePathMode single_path_mode = SinglePathMode::BoundedSurrogate;
  bool symmetric_kl = false;
  double elbo_weight = 1.0;
  // Global gradient-norm clip; applied in paper-literal mode only.
  double clip_norm = 5.0;
  // Early stopping on validation AUC, in epochs; 0 disables.
  int patience = 20;
  int checkpoint_every = 0;
  std::uint64_t seed = 1;

  // Throws ConfigError.
  void validate() const;
  std::size_t resolved_max_pairs(std::size_t train_edges) const {
    return max_pairs == 0 ? 10 * train_edges : max_pairs;
  }
};

struct AdamState {
  std::vector<MatrixXd> m;
  std::vector<MatrixXd> v;
  long step = 0;
};

struct ModelState {
  Backend backend = Backend::TwoNorm;
  MatrixXd embeddings;  // N x K
  MetricParams<double> metric;
  AdamState adam;

  Eigen::Index dim() const { return embeddings.cols(); }

  // Trainable tensors in a fixed order: embeddings first, then metric
  // tensors in MetricParams::for_each order.
  std::vector<MatrixXd*> trainables();
  std::vector<const MatrixXd*> trainables() const;
  std::vector<std::string> trainable_names() const;
  bool all_finite() const;
};

// Embeddings i.i.d. uniform on [-1/sqrt(K), 1/sqrt(K)]; weights uniform on
// [-1/sqrt(fan_in), 1/sqrt(fan_in)], zero biases; Adam moments zeroed.
ModelState init_state(const TrainConfig& cfg, NodeId num_nodes);

}  // namespace nemr
