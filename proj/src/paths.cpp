#include "nemr/paths.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace nemr {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t pair_seed(std::uint64_t seed, Edge e) {
  return splitmix64(seed ^ splitmix64((static_cast<std::uint64_t>(e.u) << 32) | static_cast<std::uint32_t>(e.v)));
}

}  // namespace

bool is_simple_path(const Graph& g, const Path& p) {
  if (p.nodes.size() < 2) return false;
  std::set<NodeId> seen;
  for (std::size_t k = 0; k < p.nodes.size(); ++k) {
    if (!seen.insert(p.nodes[k]).second) return false;
    if (k > 0 && !g.has_edge(p.nodes[k - 1], p.nodes[k])) return false;
  }
  return true;
}

PathEnumerator::PathEnumerator(const Graph& g)
    : g_(g), dist_to_target_(g.num_nodes(), -1), on_stack_(g.num_nodes(), 0) {}

// Iterative deepening over the exact path length so that, when the budget
// runs out, every shorter path has already been seen. Calls on_path(nodes)
// for each simple i -> j path; on_path returns false to stop. Returns false
// when the expansion budget was exhausted.
template <typename OnPath>
bool PathEnumerator::dfs(NodeId i, NodeId j, int max_len, std::size_t max_expansions, OnPath&& on_path) {
  for (NodeId v : touched_) dist_to_target_[v] = -1;
  touched_.clear();
  // Bounded BFS from the target: dist_to_target_ is a lower bound on the
  // remaining hops from any node.
  dist_to_target_[j] = 0;
  touched_.push_back(j);
  for (std::size_t head = 0; head < touched_.size(); ++head) {
    NodeId x = touched_[head];
    if (dist_to_target_[x] >= max_len) continue;
    for (NodeId y : g_.neighbors(x)) {
      if (dist_to_target_[y] == -1) {
        dist_to_target_[y] = dist_to_target_[x] + 1;
        touched_.push_back(y);
      }
    }
  }
  if (dist_to_target_[i] < 0) return true;

  struct Frame {
    NodeId node;
    std::size_t next;
  };
  std::vector<Frame> stack;
  std::vector<NodeId> nodes;
  std::size_t expansions = 0;

  for (int exact = std::max(1, dist_to_target_[i]); exact <= max_len; ++exact) {
    stack.assign(1, {i, 0});
    nodes.assign(1, i);
    on_stack_[i] = 1;
    bool stop = false;
    while (!stack.empty() && !stop) {
      Frame& f = stack.back();
      auto nb = g_.neighbors(f.node);
      const int depth = static_cast<int>(stack.size()) - 1;
      if (f.next == nb.size()) {
        on_stack_[f.node] = 0;
        stack.pop_back();
        nodes.pop_back();
        continue;
      }
      NodeId y = nb[f.next++];
      if (on_stack_[y]) continue;
      const int d = dist_to_target_[y];
      if (d < 0 || depth + 1 + d > exact) continue;
      if (y == j) {
        if (depth + 1 == exact) {
          nodes.push_back(j);
          if (!on_path(nodes)) stop = true;
          nodes.pop_back();
        }
        continue;
      }
      if (++expansions > max_expansions) {
        for (const Frame& fr : stack) on_stack_[fr.node] = 0;
        return false;
      }
      on_stack_[y] = 1;
      stack.push_back({y, 0});
      nodes.push_back(y);
    }
    for (const Frame& fr : stack) on_stack_[fr.node] = 0;
    if (stop) return true;
  }
  return true;
}

SearchResult PathEnumerator::enumerate(NodeId i, NodeId j, const SearchLimits& limits, std::uint64_t seed) {
  SearchResult result;
  if (i == j || limits.max_len < 1 || limits.max_paths == 0) return result;
  std::mt19937_64 rng(seed);
  auto keep = [&](const std::vector<NodeId>& nodes) {
    const std::size_t k = result.found++;
    if (k < limits.max_paths) {
      result.paths.push_back(Path{nodes});
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, k);
      std::size_t r = pick(rng);
      if (r < limits.max_paths) result.paths[r] = Path{nodes};
    }
    return true;
  };
  result.truncated = !dfs(i, j, limits.max_len, limits.max_expansions, keep);
  std::sort(result.paths.begin(), result.paths.end());
  return result;
}

PathEnumerator::Count PathEnumerator::count(NodeId i, NodeId j, int max_len, std::size_t stop_at,
                                            std::size_t max_expansions) {
  Count c;
  if (i == j || max_len < 1) return c;
  auto tally = [&](const std::vector<NodeId>& nodes) {
    if (c.paths++ == 0) c.first = Path{nodes};
    return c.paths < stop_at;
  };
  c.complete = dfs(i, j, max_len, max_expansions, tally);
  return c;
}

std::vector<Path> enumerate_simple_paths(const Graph& g, NodeId i, NodeId j, int max_len, std::size_t max_paths,
                                         std::uint64_t seed) {
  PathEnumerator walker(g);
  return walker.enumerate(i, j, {max_len, max_paths, kUnlimited}, seed).paths;
}

namespace {

std::size_t effective_threads(int requested) {
  return static_cast<std::size_t>(std::max(1, requested));
}

// Evaluates `fn(walker, candidate)` for a block of candidates on a worker
// pool; results land in candidate order.
template <typename Result, typename Fn>
std::vector<Result> evaluate_block(const Graph& g, std::span<const Edge> block, int threads, Fn fn) {
  std::vector<Result> out(block.size());
  const std::size_t workers = std::min(effective_threads(threads), std::max<std::size_t>(1, block.size()));
  auto run = [&](std::size_t w) {
    PathEnumerator walker(g);
    for (std::size_t k = w; k < block.size(); k += workers) out[k] = fn(walker, block[k]);
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
  }
  return out;
}

// Ordered list of non-adjacent node pairs within max_len hops, either all of
// them shuffled or a uniform sample drawn with replacement-rejection.
std::vector<Edge> distant_candidates(const Graph& g, const PoolOptions& opts, std::size_t wanted,
                                     const std::set<Edge>& exclude, std::mt19937_64& rng) {
  const NodeId n = g.num_nodes();
  std::vector<std::size_t> ball(n, 0);
  std::size_t total = 0;
  for (NodeId s = 0; s < n; ++s) {
    auto dist = bfs_distances(g, s, opts.max_len);
    for (NodeId t = s + 1; t < n; ++t) {
      if (dist[t] >= 2) ++ball[s];
    }
    total += ball[s];
  }
  std::vector<Edge> out;
  if (total <= opts.exhaustive_limit) {
    out.reserve(total);
    for (NodeId s = 0; s < n; ++s) {
      if (ball[s] == 0) continue;
      auto dist = bfs_distances(g, s, opts.max_len);
      for (NodeId t = s + 1; t < n; ++t) {
        if (dist[t] >= 2 && !exclude.count(Edge(s, t))) out.emplace_back(s, t);
      }
    }
    std::shuffle(out.begin(), out.end(), rng);
    if (out.size() > wanted) out.resize(wanted);
    return out;
  }
  // Source drawn proportional to its count of later in-range nodes, target
  // uniform among them: uniform over unordered in-range pairs.
  std::discrete_distribution<NodeId> pick_source(ball.begin(), ball.end());
  std::set<Edge> taken(exclude);
  std::size_t attempts = 0;
  while (out.size() < wanted && attempts++ < 4 * wanted + 1000) {
    NodeId s = pick_source(rng);
    auto dist = bfs_distances(g, s, opts.max_len);
    std::uniform_int_distribution<std::size_t> pick_rank(0, ball[s] - 1);
    std::size_t rank = pick_rank(rng);
    for (NodeId t = s + 1; t < n; ++t) {
      if (dist[t] >= 2 && rank-- == 0) {
        if (taken.insert(Edge(s, t)).second) out.emplace_back(s, t);
        break;
      }
    }
  }
  return out;
}

constexpr std::size_t kBlock = 2048;

std::size_t candidate_budget(const PoolOptions& opts) {
  return opts.max_pairs == kUnlimited ? kUnlimited : 4 * opts.max_pairs;
}

}  // namespace

std::vector<MultiPathSet> build_multipath_pool(const Graph& g, const PoolOptions& opts, PoolStats* stats) {
  PoolStats local;
  std::vector<MultiPathSet> pool;
  std::mt19937_64 rng(splitmix64(opts.seed ^ 0x6d756c7469ULL));
  const SearchLimits limits{opts.max_len, opts.max_paths, opts.max_expansions};

  auto consume = [&](std::span<const Edge> candidates) {
    for (std::size_t start = 0; start < candidates.size() && pool.size() < opts.max_pairs; start += kBlock) {
      auto block = candidates.subspan(start, std::min(kBlock, candidates.size() - start));
      auto results = evaluate_block<SearchResult>(g, block, opts.threads, [&](PathEnumerator& w, Edge e) {
        return w.enumerate(e.u, e.v, limits, pair_seed(opts.seed, e));
      });
      for (std::size_t k = 0; k < block.size() && pool.size() < opts.max_pairs; ++k) {
        ++local.candidates_examined;
        if (results[k].truncated) ++local.truncated_searches;
        if (results[k].paths.size() >= 2) pool.push_back({block[k], std::move(results[k].paths)});
      }
    }
  };

  std::vector<Edge> adjacent = g.edges();
  std::shuffle(adjacent.begin(), adjacent.end(), rng);
  consume(adjacent);

  if (pool.size() < opts.max_pairs && opts.max_len >= 2) {
    const std::size_t budget = candidate_budget(opts);
    auto distant = distant_candidates(g, opts, budget, {}, rng);
    consume(distant);
  }

  std::sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) { return a.endpoints < b.endpoints; });
  if (stats) *stats = local;
  return pool;
}

SinglePathSet build_singlepath_pool(const Graph& g, const PoolOptions& opts, PoolStats* stats) {
  PoolStats local;
  SinglePathSet out;
  std::mt19937_64 rng(splitmix64(opts.seed ^ 0x73696e676c65ULL));
  const NodeId n = g.num_nodes();

  // Pairs inside one tree of the bridge forest have exactly one simple path
  // in g; it is the tree path.
  Graph forest(n, find_bridges(g));
  std::vector<SinglePathEntry> guaranteed;
  std::set<Edge> guaranteed_pairs;
  std::vector<NodeId> parent(n, -1);
  for (NodeId s = 0; s < n; ++s) {
    if (forest.degree(s) == 0) continue;
    auto dist = bfs_distances(forest, s, opts.max_len);
    std::vector<NodeId> frontier{s};
    for (std::size_t h = 0; h < frontier.size(); ++h) {
      NodeId x = frontier[h];
      for (NodeId y : forest.neighbors(x)) {
        if (dist[y] == dist[x] + 1 && parent[y] == -1 && y != s) {
          parent[y] = x;
          frontier.push_back(y);
        }
      }
    }
    for (NodeId t : frontier) {
      if (t <= s) continue;
      Path p;
      for (NodeId x = t; x != -1; x = parent[x]) p.nodes.push_back(x);
      std::reverse(p.nodes.begin(), p.nodes.end());
      guaranteed.push_back({Edge(s, t), std::move(p)});
      guaranteed_pairs.insert(Edge(s, t));
    }
    for (NodeId t : frontier) parent[t] = -1;
  }
  local.bridge_pairs = guaranteed.size();
  std::shuffle(guaranteed.begin(), guaranteed.end(), rng);
  for (auto& entry : guaranteed) {
    if (out.entries.size() >= opts.max_pairs) break;
    ++local.candidates_examined;
    out.entries.push_back(std::move(entry));
  }

  auto consume = [&](std::span<const Edge> candidates) {
    for (std::size_t start = 0; start < candidates.size() && out.entries.size() < opts.max_pairs; start += kBlock) {
      auto block = candidates.subspan(start, std::min(kBlock, candidates.size() - start));
      auto results = evaluate_block<PathEnumerator::Count>(g, block, opts.threads, [&](PathEnumerator& w, Edge e) {
        return w.count(e.u, e.v, opts.max_len, 2, opts.max_expansions);
      });
      for (std::size_t k = 0; k < block.size() && out.entries.size() < opts.max_pairs; ++k) {
        ++local.candidates_examined;
        if (!results[k].complete) ++local.truncated_searches;
        if (results[k].complete && results[k].paths == 1) {
          out.entries.push_back({block[k], std::move(results[k].first)});
        }
      }
    }
  };

  if (out.entries.size() < opts.max_pairs) {
    // Adjacent non-bridge pairs can still be single-path when every cycle
    // through them is longer than max_len.
    std::vector<Edge> adjacent;
    for (const Edge& e : g.edges()) {
      if (!guaranteed_pairs.count(e)) adjacent.push_back(e);
    }
    std::shuffle(adjacent.begin(), adjacent.end(), rng);
    consume(adjacent);
  }
  if (out.entries.size() < opts.max_pairs && opts.max_len >= 2) {
    auto distant = distant_candidates(g, opts, candidate_budget(opts), guaranteed_pairs, rng);
    consume(distant);
  }

  std::sort(out.entries.begin(), out.entries.end(),
            [](const auto& a, const auto& b) { return a.endpoints < b.endpoints; });
  if (stats) *stats = local;
  return out;
}

namespace {

void write_record(std::ostream& out, Edge e, std::span<const Path> paths) {
  out << e.u << ' ' << e.v << ' ' << paths.size() << '\n';
  for (const Path& p : paths) {
    for (std::size_t k = 0; k < p.nodes.size(); ++k) out << (k ? " " : "") << p.nodes[k];
    out << '\n';
  }
}

template <typename OnRecord>
void read_records(const std::filesystem::path& path, const std::string& kind, OnRecord on_record) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line.rfind("# nemr-pool v1 " + kind, 0) != 0) {
    throw ParseError("not a '" + kind + "' pool file", line_no);
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream head(line);
    NodeId u, v;
    std::size_t count;
    if (!(head >> u >> v >> count)) throw ParseError("expected '<u> <v> <count>'", line_no);
    std::vector<Path> paths(count);
    for (auto& p : paths) {
      if (!std::getline(in, line)) throw ParseError("truncated record", line_no);
      ++line_no;
      std::istringstream seq(line);
      NodeId x;
      while (seq >> x) p.nodes.push_back(x);
      if (p.nodes.size() < 2 || Edge(p.front(), p.back()) != Edge(u, v)) {
        throw ParseError("path does not join the record endpoints", line_no);
      }
    }
    on_record(Edge(u, v), std::move(paths));
  }
}

}  // namespace

void write_pool(const std::filesystem::path& path, const std::vector<MultiPathSet>& pool) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "# nemr-pool v1 multi " << pool.size() << '\n';
  for (const auto& set : pool) write_record(out, set.endpoints, set.paths);
}

void write_pool(const std::filesystem::path& path, const SinglePathSet& pool) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "# nemr-pool v1 single " << pool.entries.size() << '\n';
  for (const auto& entry : pool.entries) write_record(out, entry.endpoints, std::span(&entry.path, 1));
}

std::vector<MultiPathSet> read_multipath_pool(const std::filesystem::path& path) {
  std::vector<MultiPathSet> pool;
  read_records(path, "multi", [&](Edge e, std::vector<Path> paths) { pool.push_back({e, std::move(paths)}); });
  return pool;
}

SinglePathSet read_singlepath_pool(const std::filesystem::path& path) {
  SinglePathSet pool;
  read_records(path, "single", [&](Edge e, std::vector<Path> paths) {
    if (paths.size() != 1) throw Error("single-path record with " + std::to_string(paths.size()) + " paths");
    pool.entries.push_back({e, std::move(paths.front())});
  });
  return pool;
}

}  // namespace nemr
