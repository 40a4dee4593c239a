#pragma once

#include "nemr/graph.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

namespace nemr {

inline constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

struct Path {
  std::vector<NodeId> nodes;

  std::size_t length() const { return nodes.empty() ? 0 : nodes.size() - 1; }
  NodeId front() const { return nodes.front(); }
  NodeId back() const { return nodes.back(); }

  friend auto operator<=>(const Path&, const Path&) = default;
};

// True when consecutive nodes are adjacent, no node repeats and the path has
// at least one edge.
bool is_simple_path(const Graph& g, const Path& p);

struct MultiPathSet {
  Edge endpoints;
  std::vector<Path> paths;  // sorted, all oriented endpoints.u -> endpoints.v
};

struct SinglePathEntry {
  Edge endpoints;
  Path path;  // oriented endpoints.u -> endpoints.v
};

struct SinglePathSet {
  std::vector<SinglePathEntry> entries;  // sorted by endpoints
};

struct SearchLimits {
  int max_len = 10;
  std::size_t max_paths = 10;
  // Upper bound on DFS node expansions for one pair; the search stops early
  // and reports truncation when reached.
  std::size_t max_expansions = 200000;
};

struct SearchResult {
  std::vector<Path> paths;   // sorted lexicographically
  std::size_t found = 0;     // total paths seen before any subsampling
  bool truncated = false;    // expansion budget ran out
};

// Reusable depth-first enumerator; keeps scratch buffers across queries.
class PathEnumerator {
 public:
  explicit PathEnumerator(const Graph& g);

  // Simple paths i -> j with at most `limits.max_len` edges. When more than
  // `max_paths` exist, a uniform reservoir sample under `seed` is kept.
  SearchResult enumerate(NodeId i, NodeId j, const SearchLimits& limits, std::uint64_t seed = 0);

  // Counts simple paths up to `stop_at`, exiting early once reached.
  // `complete` is false when the expansion budget was exhausted first.
  struct Count {
    std::size_t paths = 0;
    bool complete = true;
    Path first;
  };
  Count count(NodeId i, NodeId j, int max_len, std::size_t stop_at, std::size_t max_expansions = 200000);

 private:
  template <typename OnPath>
  bool dfs(NodeId i, NodeId j, int max_len, std::size_t max_expansions, OnPath&& on_path);

  const Graph& g_;
  std::vector<int> dist_to_target_;
  std::vector<char> on_stack_;
  std::vector<NodeId> touched_;
};

std::vector<Path> enumerate_simple_paths(const Graph& g, NodeId i, NodeId j, int max_len,
                                         std::size_t max_paths = kUnlimited, std::uint64_t seed = 0);

struct PoolOptions {
  int max_len = 10;
  std::size_t max_paths = 10;
  std::size_t max_pairs = kUnlimited;
  std::size_t max_expansions = 200000;
  std::uint64_t seed = 0;
  int threads = 1;
  // Pairs at distance <= max_len are listed exhaustively below this many
  // candidates; above it they are sampled.
  std::size_t exhaustive_limit = 8'000'000;
};

struct PoolStats {
  std::size_t candidates_examined = 0;
  std::size_t truncated_searches = 0;
  std::size_t bridge_pairs = 0;
};

// Adjacent pairs first (in seeded random order), then non-adjacent pairs
// within max_len hops drawn uniformly. A pair enters with >= 2 paths.
std::vector<MultiPathSet> build_multipath_pool(const Graph& g, const PoolOptions& opts,
                                               PoolStats* stats = nullptr);

// Pairs with exactly one simple path of <= max_len edges. Pairs joined
// through bridge edges alone are taken first and need no counting.
SinglePathSet build_singlepath_pool(const Graph& g, const PoolOptions& opts, PoolStats* stats = nullptr);

// Text sidecar. Header line, then one record per pair:
//   "<u> <v> <count>" followed by `count` lines of space-separated node ids.
void write_pool(const std::filesystem::path& path, const std::vector<MultiPathSet>& pool);
void write_pool(const std::filesystem::path& path, const SinglePathSet& pool);
std::vector<MultiPathSet> read_multipath_pool(const std::filesystem::path& path);
SinglePathSet read_singlepath_pool(const std::filesystem::path& path);

}  // namespace nemr
