#pragma once

#include "nemr/graph.hpp"
#include "nemr/objective.hpp"
#include "nemr/paths.hpp"

#include <algorithm>
#include <functional>
#include <random>
#include <set>
#include <vector>

namespace nemr::testing {

inline Graph make_graph(NodeId n, std::initializer_list<std::pair<NodeId, NodeId>> edges) {
  std::vector<Edge> list;
  for (auto [a, b] : edges) list.emplace_back(a, b);
  return Graph(n, list);
}

inline Graph cycle(NodeId n) {
  std::vector<Edge> list;
  for (NodeId v = 0; v < n; ++v) list.emplace_back(v, (v + 1) % n);
  return Graph(n, list);
}

inline Graph path_graph(NodeId n) {
  std::vector<Edge> list;
  for (NodeId v = 0; v + 1 < n; ++v) list.emplace_back(v, v + 1);
  return Graph(n, list);
}

inline Graph complete(NodeId n) {
  std::vector<Edge> list;
  for (NodeId a = 0; a < n; ++a) {
    for (NodeId b = a + 1; b < n; ++b) list.emplace_back(a, b);
  }
  return Graph(n, list);
}

inline Graph random_graph(NodeId n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  std::vector<Edge> list;
  for (NodeId a = 0; a < n; ++a) {
    for (NodeId b = a + 1; b < n; ++b) {
      if (coin(rng)) list.emplace_back(a, b);
    }
  }
  return Graph(n, list);
}

// Plain recursive enumeration of simple i -> j paths with <= max_len edges,
// scanning every node id as a successor.
inline std::set<std::vector<NodeId>> brute_force_paths(const Graph& g, NodeId i, NodeId j, int max_len) {
  std::set<std::vector<NodeId>> out;
  std::vector<NodeId> seq{i};
  std::vector<bool> used(g.num_nodes(), false);
  used[i] = true;
  std::function<void()> extend = [&] {
    if (static_cast<int>(seq.size()) - 1 >= max_len) return;
    for (NodeId next = 0; next < g.num_nodes(); ++next) {
      if (used[next] || !g.has_edge(seq.back(), next)) continue;
      seq.push_back(next);
      if (next == j) {
        out.insert(seq);
      } else {
        used[next] = true;
        extend();
        used[next] = false;
      }
      seq.pop_back();
    }
  };
  extend();
  return out;
}

inline std::set<std::vector<NodeId>> as_set(const std::vector<Path>& paths) {
  std::set<std::vector<NodeId>> out;
  for (const auto& p : paths) out.insert(p.nodes);
  return out;
}

struct GradientCheck {
  double max_relative_error = 0.0;
  int coordinates = 0;
};

// Central differences on `coordinates` random entries drawn across all
// trainables, at least one per tensor. Relative error uses a 1e-6 floor on
// the denominator.
inline GradientCheck check_gradients(const ModelState& state, const Graph& g, const std::vector<MultiPathSet>& multi,
                                     const SinglePathSet& single, const TrainConfig& cfg, std::mt19937_64& rng,
                                     int coordinates = 100, double h = 1e-5) {
  const std::uint64_t noise_seed = 12345;
  const Gradients analytic = gradients(state, multi, single, g, cfg, noise_seed);
  ModelState probe = state;
  auto tensors = probe.trainables();
  std::vector<std::pair<std::size_t, Eigen::Index>> picks;
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    picks.emplace_back(t, std::uniform_int_distribution<Eigen::Index>(0, tensors[t]->size() - 1)(rng));
  }
  std::vector<double> sizes;
  for (auto* t : tensors) sizes.push_back(static_cast<double>(t->size()));
  std::discrete_distribution<std::size_t> which(sizes.begin(), sizes.end());
  while (static_cast<int>(picks.size()) < coordinates) {
    const std::size_t t = which(rng);
    picks.emplace_back(t, std::uniform_int_distribution<Eigen::Index>(0, tensors[t]->size() - 1)(rng));
  }
  GradientCheck out;
  for (auto [t, i] : picks) {
    double& x = tensors[t]->data()[i];
    const double keep = x;
    x = keep + h;
    const double up = total_loss(probe, multi, single, g, cfg, noise_seed).total;
    x = keep - h;
    const double down = total_loss(probe, multi, single, g, cfg, noise_seed).total;
    x = keep;
    const double numeric = (up - down) / (2 * h);
    const double a = analytic[t].data()[i];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
    out.max_relative_error = std::max(out.max_relative_error, rel);
    ++out.coordinates;
  }
  return out;
}

}  // namespace nemr::testing
