#pragma once

#include "nemr/types.hpp"

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace nemr {

// Immutable simple undirected graph in CSR form. Neighbor lists are sorted.
class Graph {
 public:
  Graph() = default;

  // Builds from an edge list over nodes 0..num_nodes-1. Self-loops and
  // duplicates must already be removed; violations throw.
  Graph(NodeId num_nodes, std::vector<Edge> edges);

  NodeId num_nodes() const { return num_nodes_; }
  std::size_t num_edges() const { return edges_.size(); }
  // Sorted, each edge stored once with u < v.
  const std::vector<Edge>& edges() const { return edges_; }

  std::span<const NodeId> neighbors(NodeId v) const {
    return {adjacency_.data() + offsets_[v], adjacency_.data() + offsets_[v + 1]};
  }
  std::size_t degree(NodeId v) const { return offsets_[v + 1] - offsets_[v]; }
  bool has_edge(NodeId a, NodeId b) const;

  // Number of connected components (isolated nodes count as components).
  std::size_t num_components() const;

 private:
  NodeId num_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_{0};
  std::vector<NodeId> adjacency_;
};

struct LoadReport {
  std::size_t lines = 0;
  std::size_t duplicates_dropped = 0;
  std::size_t self_loops_dropped = 0;
};

// Dense remapping of arbitrary string node ids, in order of first appearance.
class NodeIndex {
 public:
  NodeId intern(const std::string& raw);
  std::optional<NodeId> find(const std::string& raw) const;
  const std::string& raw(NodeId id) const { return raw_[id]; }
  NodeId size() const { return static_cast<NodeId>(raw_.size()); }

 private:
  std::map<std::string, NodeId> ids_;
  std::vector<std::string> raw_;
};

struct LoadedGraph {
  Graph graph;
  NodeIndex index;
  LoadReport report;
};

// Whitespace-separated id pairs, one edge per line; '#' starts a comment line.
// Ids are arbitrary tokens remapped to 0..N-1 by first appearance, unless
// `index` is supplied, in which case it is extended.
LoadedGraph load_edge_list(std::istream& in, NodeIndex index = {});
LoadedGraph load_edge_list(const std::filesystem::path& path, NodeIndex index = {});

void write_edge_list(std::ostream& out, std::span<const Edge> edges);
void write_edge_list(const std::filesystem::path& path, std::span<const Edge> edges);
// Reads an edge list whose ids are already dense integers (no remapping).
std::vector<Edge> read_dense_edge_list(const std::filesystem::path& path);

void write_node_index(const std::filesystem::path& path, const NodeIndex& index);
NodeIndex read_node_index(const std::filesystem::path& path);

struct LabeledDataset {
  Graph graph;
  NodeIndex index;
  // label[v] == -1 when node v carries no label.
  std::vector<int> labels;
  std::vector<std::string> class_names;

  int num_classes() const { return static_cast<int>(class_names.size()); }
  bool has_labels() const { return !class_names.empty(); }
  double label_coverage() const;
};

// `node_id<TAB>class_label` lines; classes are numbered in sorted name order.
// Nodes absent from the index are ignored and counted in the return value.
std::size_t load_labels(std::istream& in, LabeledDataset& dataset);
void write_labels(const std::filesystem::path& path, const LabeledDataset& dataset);

struct EdgeSplit {
  Graph train_graph;
  std::vector<Edge> val_pos, val_neg, test_pos, test_neg;
  double val_frac = 0.0;
  double test_frac = 0.0;
  std::uint64_t seed = 0;
};

// Holds out floor(val_frac*E) and floor(test_frac*E) edges, and samples an
// equal number of negatives uniformly from non-edges of `g`, disjoint across
// val and test.
EdgeSplit split_edges(const Graph& g, double val_frac, double test_frac, std::uint64_t seed);

// train.txt, val_pos.txt, val_neg.txt, test_pos.txt, test_neg.txt, split.json
void write_split(const std::filesystem::path& dir, const EdgeSplit& split);
EdgeSplit read_split(const std::filesystem::path& dir, NodeId num_nodes);

// Tarjan low-link, iterative. Result is sorted.
std::vector<Edge> find_bridges(const Graph& g);

// Hop distances from `source`, -1 for unreachable or beyond `max_hops`.
std::vector<int> bfs_distances(const Graph& g, NodeId source, int max_hops);

}  // namespace nemr
