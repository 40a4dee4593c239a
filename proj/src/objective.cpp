#include "nemr/objective.hpp"

#include "nemr/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <unordered_map>

namespace nemr {

Batch Batch::whole(const std::vector<MultiPathSet>& multi, const SinglePathSet& single) {
  Batch b;
  for (const auto& s : multi) b.multi.push_back(&s);
  for (const auto& e : single.entries) b.single.push_back(&e);
  return b;
}

namespace {

using ad::Var;

// Deduplicates the ordered node pairs whose relation the batch needs.
class PairRows {
 public:
  int row(NodeId a, NodeId b) {
    const auto key = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
    auto [it, inserted] = rows_.emplace(key, static_cast<int>(from.size()));
    if (inserted) {
      from.push_back(a);
      to.push_back(b);
    }
    return it->second;
  }
  int size() const { return static_cast<int>(from.size()); }

  std::vector<int> from, to;

 private:
  std::unordered_map<std::uint64_t, int> rows_;
};

// Sparse path-by-relation incidence matrix built row by row.
class PathRows {
 public:
  int add(std::span<const int> relation_rows) {
    for (int r : relation_rows) triplets_.emplace_back(rows_, r, 1.0);
    return rows_++;
  }
  int size() const { return rows_; }
  ad::SparseRows matrix(int cols) const {
    ad::SparseRows s(rows_, cols);
    s.setFromTriplets(triplets_.begin(), triplets_.end());
    return s;
  }

 private:
  std::vector<Eigen::Triplet<double>> triplets_;
  int rows_ = 0;
};

struct Layer {
  Var weight, bias;
};

Var dense(Var x, const Layer& l) { return ad::add_rowwise(ad::matmul(x, l.weight), l.bias); }

// D_KL(p || q) per row for diagonal Gaussians given as (mean, var) rows.
Var kl_rows(Var mean_p, Var var_p, Var mean_q, Var var_q) {
  Var ratio = ad::cwise_div(var_p, var_q);
  Var shift = ad::cwise_div(ad::square(mean_q - mean_p), var_q);
  Var logs = ad::log(var_q) - ad::log(var_p);
  return 0.5 * ad::row_sum(ad::add_scalar(ratio + shift + logs, -1.0));
}

}  // namespace

LossTerms evaluate_objective(const ModelState& state, const Graph& train_graph, const Batch& batch,
                             const TrainConfig& cfg, std::uint64_t noise_seed, Gradients* grads) {
  const Backend backend = state.backend;
  const Eigen::Index dim = state.dim();

  PairRows pairs;
  PathRows multi_paths, single_paths;
  std::vector<int> first_path, second_path;
  for (const MultiPathSet* set : batch.multi) {
    const int base = multi_paths.size();
    for (const Path& p : set->paths) {
      std::vector<int> rel;
      for (std::size_t t = 0; t + 1 < p.nodes.size(); ++t) rel.push_back(pairs.row(p.nodes[t], p.nodes[t + 1]));
      multi_paths.add(rel);
    }
    const int count = static_cast<int>(set->paths.size());
    for (int a = 0; a < count; ++a) {
      for (int b = a + 1; b < count; ++b) {
        first_path.push_back(base + a);
        second_path.push_back(base + b);
      }
    }
  }
  std::vector<int> direct;
  for (const SinglePathEntry* entry : batch.single) {
    const auto& n = entry->path.nodes;
    std::vector<int> edge_rows;
    for (std::size_t t = 0; t + 1 < n.size(); ++t) edge_rows.push_back(pairs.row(n[t], n[t + 1]));
    for (std::size_t a = 0; a < n.size(); ++a) {
      for (std::size_t b = a + 2; b < n.size(); ++b) {
        if (train_graph.has_edge(n[a], n[b])) continue;
        single_paths.add(std::span<const int>(edge_rows).subspan(a, b - a));
        direct.push_back(pairs.row(n[a], n[b]));
      }
    }
  }

  const auto trainable_count = state.trainables().size();
  if (pairs.size() == 0) {
    if (grads) {
      grads->clear();
      for (const MatrixXd* t : state.trainables()) grads->push_back(MatrixXd::Zero(t->rows(), t->cols()));
    }
    return {};
  }

  ad::Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(trainable_count);
  for (const MatrixXd* t : state.trainables()) leaves.push_back(tape.variable(*t));
  auto layer = [&](std::size_t first) { return Layer{leaves.at(first), leaves.at(first + 1)}; };

  Var phi = leaves[0];
  Var lhs = ad::gather_rows(phi, pairs.from);
  Var rhs = ad::gather_rows(phi, pairs.to);

  // Relation per pair row: `rel` is what path sums add up, `magnitude` its
  // scalar reduction used for order constraints.
  Var rel, magnitude, mean, var, logvar;
  switch (backend) {
    case Backend::TwoNorm:
      rel = ad::row_norm(lhs - rhs);
      magnitude = rel;
      break;
    case Backend::Mlp:
      rel = dense(ad::relu(dense(ad::hcat(lhs, rhs), layer(1))), layer(3));
      magnitude = ad::row_norm(rel);
      break;
    case Backend::Variational: {
      Var hidden = ad::relu(dense(lhs - rhs, layer(1)));
      mean = dense(hidden, layer(3));
      logvar = ad::clamp(dense(hidden, layer(5)), kLogVarMin, kLogVarMax);
      var = ad::exp(logvar);
      rel = mean;
      magnitude = ad::row_norm(mean);
      break;
    }
  }

  LossTerms terms;
  std::vector<Var> parts;
  std::vector<double> weights;

  if (!first_path.empty()) {
    auto incidence = multi_paths.matrix(pairs.size());
    Var g;
    if (backend == Backend::Variational) {
      Var sum_mean = ad::spmm(incidence, mean);
      Var sum_var = ad::spmm(incidence, var);
      Var m1 = ad::gather_rows(sum_mean, first_path), v1 = ad::gather_rows(sum_var, first_path);
      Var m2 = ad::gather_rows(sum_mean, second_path), v2 = ad::gather_rows(sum_var, second_path);
      Var kl = kl_rows(m1, v1, m2, v2);
      if (cfg.symmetric_kl) kl = 0.5 * (kl + kl_rows(m2, v2, m1, v1));
      g = ad::square(kl);
    } else {
      Var sums = ad::spmm(incidence, rel);
      g = ad::row_sum(ad::square(ad::gather_rows(sums, first_path) - ad::gather_rows(sums, second_path)));
    }
    Var l_mul = (1.0 / static_cast<double>(batch.multi.size())) * ad::sum(g);
    terms.mul = l_mul.value()(0, 0);
    parts.push_back(l_mul);
    weights.push_back(cfg.lambda);
  }

  if (!direct.empty()) {
    auto incidence = single_paths.matrix(pairs.size());
    Var along = backend == Backend::TwoNorm ? ad::spmm(incidence, rel) : ad::row_norm(ad::spmm(incidence, rel));
    Var straight = ad::gather_rows(magnitude, direct);
    Var per_pair = cfg.single_path_mode == SinglePathMode::BoundedSurrogate ? ad::exp(along - straight)
                                                                            : -ad::exp(straight - along);
    Var l_sin = (1.0 / static_cast<double>(batch.single.size())) * ad::sum(per_pair);
    terms.sin = l_sin.value()(0, 0);
    parts.push_back(l_sin);
    weights.push_back(1.0 - cfg.lambda);
  }

  if (backend == Backend::Variational && cfg.elbo_weight != 0.0) {
    const auto rows = static_cast<double>(pairs.size());
    const int samples = std::max(1, cfg.mc_samples);
    Var target = ad::hcat(lhs, rhs);
    Var sigma = ad::exp(0.5 * logvar);
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> normal;
    Var squared_error;
    for (int l = 0; l < samples; ++l) {
      ad::Mat eps(pairs.size(), dim);
      for (Eigen::Index c = 0; c < eps.cols(); ++c) {
        for (Eigen::Index r = 0; r < eps.rows(); ++r) eps(r, c) = normal(rng);
      }
      Var z = mean + ad::cwise_mul(sigma, tape.constant(std::move(eps)));
      Var decoded = dense(ad::relu(dense(z, layer(7))), layer(9));
      Var err = ad::sum(ad::square(target - decoded));
      squared_error = squared_error.valid() ? squared_error + err : err;
    }
    const double log_norm = -0.5 * static_cast<double>(2 * dim) * std::log(2.0 * std::numbers::pi);
    Var recon = ad::add_scalar((-0.5 / (rows * samples)) * squared_error, log_norm);
    Var kl_prior = (0.5 / rows) * ad::sum(ad::add_scalar(var + ad::square(mean) - logvar, -1.0));
    Var elbo = recon - kl_prior;
    terms.elbo = elbo.value()(0, 0);
    parts.push_back(elbo);
    weights.push_back(-cfg.elbo_weight);
  }

  if (parts.empty()) {
    if (grads) {
      grads->clear();
      for (const MatrixXd* t : state.trainables()) grads->push_back(MatrixXd::Zero(t->rows(), t->cols()));
    }
    return terms;
  }

  Var total = weights[0] * parts[0];
  for (std::size_t k = 1; k < parts.size(); ++k) total = total + weights[k] * parts[k];
  terms.total = total.value()(0, 0);
  if (!std::isfinite(terms.total)) {
    throw NumericalError("non-finite loss (mul=" + std::to_string(terms.mul) + ", sin=" + std::to_string(terms.sin) +
                         ", elbo=" + std::to_string(terms.elbo) + ")");
  }

  if (grads) {
    tape.backward(total);
    grads->clear();
    const auto names = state.trainable_names();
    for (std::size_t k = 0; k < leaves.size(); ++k) {
      grads->push_back(tape.grad(leaves[k]));
      if (!grads->back().allFinite()) throw NumericalError("non-finite gradient in " + names[k]);
    }
  }
  return terms;
}

double loss_mul(const std::vector<MultiPathSet>& pool, const ModelState& state, const Graph& train_graph,
                const TrainConfig& cfg) {
  Batch b;
  for (const auto& s : pool) b.multi.push_back(&s);
  TrainConfig only = cfg;
  only.elbo_weight = 0.0;
  return evaluate_objective(state, train_graph, b, only, 0).mul;
}

double loss_sin(const SinglePathSet& pool, const ModelState& state, const Graph& train_graph, const TrainConfig& cfg) {
  Batch b;
  for (const auto& e : pool.entries) b.single.push_back(&e);
  TrainConfig only = cfg;
  only.elbo_weight = 0.0;
  return evaluate_objective(state, train_graph, b, only, 0).sin;
}

LossTerms total_loss(const ModelState& state, const std::vector<MultiPathSet>& multi, const SinglePathSet& single,
                     const Graph& train_graph, const TrainConfig& cfg, std::uint64_t noise_seed) {
  return evaluate_objective(state, train_graph, Batch::whole(multi, single), cfg, noise_seed);
}

Gradients gradients(const ModelState& state, const std::vector<MultiPathSet>& multi, const SinglePathSet& single,
                    const Graph& train_graph, const TrainConfig& cfg, std::uint64_t noise_seed) {
  Gradients g;
  evaluate_objective(state, train_graph, Batch::whole(multi, single), cfg, noise_seed, &g);
  return g;
}

void adam_step(ModelState& state, const Gradients& grads, double learning_rate) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  auto params = state.trainables();
  if (grads.size() != params.size()) throw std::invalid_argument("gradient count does not match trainables");
  AdamState& adam = state.adam;
  if (adam.m.size() != params.size()) {
    adam.m.clear();
    adam.v.clear();
    for (const MatrixXd* p : params) {
      adam.m.push_back(MatrixXd::Zero(p->rows(), p->cols()));
      adam.v.push_back(MatrixXd::Zero(p->rows(), p->cols()));
    }
  }
  ++adam.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(adam.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(adam.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].rows() != params[k]->rows() || grads[k].cols() != params[k]->cols()) {
      throw std::invalid_argument("gradient shape mismatch for " + state.trainable_names()[k]);
    }
    adam.m[k] = beta1 * adam.m[k] + (1.0 - beta1) * grads[k];
    adam.v[k] = beta2 * adam.v[k] + (1.0 - beta2) * grads[k].cwiseAbs2();
    params[k]->array() -= learning_rate * (adam.m[k].array() / c1) / ((adam.v[k].array() / c2).sqrt() + eps);
  }
}

double global_norm(const Gradients& grads) {
  double s = 0.0;
  for (const auto& g : grads) s += g.squaredNorm();
  return std::sqrt(s);
}

}  // namespace nemr
