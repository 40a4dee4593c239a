#pragma once

#include "nemr/model.hpp"
#include "nemr/paths.hpp"

#include <cstdint>
#include <vector>

namespace nemr {

struct Batch {
  std::vector<const MultiPathSet*> multi;
  std::vector<const SinglePathEntry*> single;

  static Batch whole(const std::vector<MultiPathSet>& multi, const SinglePathSet& single);
};

struct LossTerms {
  double total = 0.0;
  double mul = 0.0;   // mean over multi-path sets of the summed path-pair discrepancy
  double sin = 0.0;   // mean over single-path entries of the summed order terms
  double elbo = 0.0;  // mean over relation rows; 0 unless variational
};

// Tensors shaped like ModelState::trainables().
using Gradients = std::vector<MatrixXd>;

// Evaluates lambda * L_mul + (1 - lambda) * L_sin (minus elbo_weight * ELBO
// for the variational backend) on one batch. When `grads` is non-null it
// receives the exact gradient of `total`. ELBO noise is drawn from
// `noise_seed`, so repeated calls with the same seed are bit-identical.
LossTerms evaluate_objective(const ModelState& state, const Graph& train_graph, const Batch& batch,
                             const TrainConfig& cfg, std::uint64_t noise_seed, Gradients* grads = nullptr);

double loss_mul(const std::vector<MultiPathSet>& pool, const ModelState& state, const Graph& train_graph,
                const TrainConfig& cfg);
double loss_sin(const SinglePathSet& pool, const ModelState& state, const Graph& train_graph, const TrainConfig& cfg);
LossTerms total_loss(const ModelState& state, const std::vector<MultiPathSet>& multi, const SinglePathSet& single,
                     const Graph& train_graph, const TrainConfig& cfg, std::uint64_t noise_seed = 0);
Gradients gradients(const ModelState& state, const std::vector<MultiPathSet>& multi, const SinglePathSet& single,
                    const Graph& train_graph, const TrainConfig& cfg, std::uint64_t noise_seed = 0);

// Bias-corrected Adam (beta1 0.9, beta2 0.999, eps 1e-8). Moments are
// created on first use.
void adam_step(ModelState& state, const Gradients& grads, double learning_rate);

double global_norm(const Gradients& grads);

}  // namespace nemr
