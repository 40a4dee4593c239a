#include "nemr/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>

namespace nemr {

SinglePathMode parse_single_path_mode(std::string_view name) {
  if (name == "bounded-surrogate") return SinglePathMode::BoundedSurrogate;
  if (name == "paper-literal") return SinglePathMode::PaperLiteral;
  throw ConfigError("unknown single_path_loss_mode '" + std::string(name) +
                    "' (expected bounded-surrogate or paper-literal)");
}

std::string_view to_string(SinglePathMode m) {
  return m == SinglePathMode::BoundedSurrogate ? "bounded-surrogate" : "paper-literal";
}

void TrainConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  need(lambda >= 0.0 && lambda <= 1.0, "lambda must lie in [0, 1]");
  need(embedding_dim >= 1, "embedding_dim must be >= 1");
  need(hidden_dim >= 1, "hidden_dim must be >= 1");
  need(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be positive");
  need(epochs >= 1, "epochs must be >= 1");
  need(batch_pairs >= 1, "batch_pairs must be >= 1");
  need(max_len >= 1, "max_len must be >= 1");
  need(max_paths >= 1, "max_paths must be >= 1");
  need(max_expansions >= 1, "max_expansions must be >= 1");
  need(mc_samples >= 1, "mc_samples must be >= 1");
  need(clip_norm > 0.0, "clip_norm must be positive");
  need(patience >= 0, "patience must be >= 0");
  need(checkpoint_every >= 0, "checkpoint_every must be >= 0");
  need(elbo_weight >= 0.0, "elbo_weight must be >= 0");
}

std::vector<MatrixXd*> ModelState::trainables() {
  std::vector<MatrixXd*> out{&embeddings};
  metric.for_each([&](const std::string&, MatrixXd& t) { out.push_back(&t); });
  return out;
}

std::vector<const MatrixXd*> ModelState::trainables() const {
  std::vector<const MatrixXd*> out{&embeddings};
  metric.for_each([&](const std::string&, const MatrixXd& t) { out.push_back(&t); });
  return out;
}

std::vector<std::string> ModelState::trainable_names() const {
  std::vector<std::string> out{"embeddings"};
  metric.for_each([&](const std::string& name, const MatrixXd&) { out.push_back(name); });
  return out;
}

bool ModelState::all_finite() const {
  for (const MatrixXd* t : trainables()) {
    if (!t->allFinite()) return false;
  }
  return true;
}

ModelState init_state(const TrainConfig& cfg, NodeId num_nodes) {
  cfg.validate();
  ModelState s;
  s.backend = cfg.backend;
  std::mt19937_64 rng(cfg.seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.embedding_dim));
  std::uniform_real_distribution<double> embed(-bound, bound);
  s.embeddings.resize(num_nodes, cfg.embedding_dim);
  for (Eigen::Index r = 0; r < s.embeddings.rows(); ++r) {
    for (Eigen::Index c = 0; c < s.embeddings.cols(); ++c) s.embeddings(r, c) = embed(rng);
  }
  s.metric = MetricParams<double>::zeros(cfg.backend, cfg.embedding_dim, cfg.hidden_dim);
  s.metric.for_each([&](const std::string& name, MatrixXd& t) {
    if (name.ends_with(".bias")) return;
    std::uniform_real_distribution<double> fan_in(-1.0 / std::sqrt(static_cast<double>(t.rows())),
                                                  1.0 / std::sqrt(static_cast<double>(t.rows())));
    for (Eigen::Index c = 0; c < t.cols(); ++c) {
      for (Eigen::Index r = 0; r < t.rows(); ++r) t(r, c) = fan_in(rng);
    }
  });
  return s;
}

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

TrainResult train(ModelState initial, const Graph& train_graph, const std::vector<MultiPathSet>& multi,
                  const SinglePathSet& single, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  check_shapes(initial.metric, initial.backend, initial.dim());
  TrainResult result;
  result.state = std::move(initial);
  ModelState& state = result.state;
  ModelState best;
  bool have_best = false;

  std::mt19937_64 rng(mix(cfg.seed, 0x747261696eULL));
  std::vector<std::size_t> multi_order(multi.size()), single_order(single.entries.size());
  std::iota(multi_order.begin(), multi_order.end(), 0);
  std::iota(single_order.begin(), single_order.end(), 0);
  std::shuffle(single_order.begin(), single_order.end(), rng);
  std::size_t single_cursor = 0;

  const auto batch = static_cast<std::size_t>(cfg.batch_pairs);
  const std::size_t largest = std::max(multi.size(), single.entries.size());
  const std::size_t steps_per_epoch = std::max<std::size_t>(1, (largest + batch - 1) / batch);
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(multi_order.begin(), multi_order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      Batch b;
      for (std::size_t k = step * batch; k < std::min(multi.size(), (step + 1) * batch); ++k) {
        b.multi.push_back(&multi[multi_order[k]]);
      }
      for (std::size_t k = 0; k < std::min(batch, single_order.size()); ++k) {
        b.single.push_back(&single.entries[single_order[single_cursor]]);
        if (++single_cursor == single_order.size()) {
          single_cursor = 0;
          std::shuffle(single_order.begin(), single_order.end(), rng);
        }
      }
      Gradients grads;
      LossTerms terms;
      try {
        terms = evaluate_objective(state, train_graph, b, cfg, mix(cfg.seed, static_cast<std::uint64_t>(state.adam.step)),
                                   &grads);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(state.adam.step));
      }
      if (cfg.single_path_mode == SinglePathMode::PaperLiteral) {
        const double norm = global_norm(grads);
        if (norm > cfg.clip_norm) {
          for (auto& g : grads) g *= cfg.clip_norm / norm;
        }
      }
      adam_step(state, grads, cfg.learning_rate);
      if (!state.all_finite()) {
        throw NumericalError("non-finite parameters after step " + std::to_string(state.adam.step));
      }
      rec.loss += terms.total;
      rec.loss_mul += terms.mul;
      rec.loss_sin += terms.sin;
      rec.elbo += terms.elbo;
    }
    const auto n = static_cast<double>(steps_per_epoch);
    rec.loss /= n;
    rec.loss_mul /= n;
    rec.loss_sin /= n;
    rec.elbo /= n;
    rec.step = state.adam.step;

    bool stop = false;
    if (hooks.validate) {
      rec.validation = hooks.validate(state);
      if (!have_best || rec.validation > result.best_validation) {
        best = state;
        have_best = true;
        result.best_validation = rec.validation;
        result.best_epoch = epoch;
        since_best = 0;
      } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
        stop = true;
      }
    }
    result.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (hooks.checkpoint && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      hooks.checkpoint(state, rec);
    }
    if (stop) {
      result.stopped_early = true;
      break;
    }
  }
  if (have_best) {
    result.state = std::move(best);
  } else {
    result.best_epoch = static_cast<int>(result.history.size()) - 1;
  }
  return result;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "step,loss,loss_mul,loss_sin,elbo\n" << std::setprecision(10);
  for (const auto& r : history) {
    out << r.step << ',' << r.loss << ',' << r.loss_mul << ',' << r.loss_sin << ',' << r.elbo << '\n';
  }
}

}  // namespace nemr
