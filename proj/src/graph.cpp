#include "nemr/graph.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>

namespace nemr {

Graph::Graph(NodeId num_nodes, std::vector<Edge> edges) : num_nodes_(num_nodes), edges_(std::move(edges)) {
  if (num_nodes_ < 0) throw Error("negative node count");
  std::sort(edges_.begin(), edges_.end());
  for (std::size_t k = 0; k < edges_.size(); ++k) {
    const Edge& e = edges_[k];
    if (e.u == e.v) throw Error("self-loop at node " + std::to_string(e.u));
    if (e.u < 0 || e.v >= num_nodes_) throw Error("edge endpoint out of range");
    if (k > 0 && edges_[k - 1] == e) throw Error("duplicate edge");
  }

  std::vector<std::size_t> deg(num_nodes_, 0);
  for (const Edge& e : edges_) {
    ++deg[e.u];
    ++deg[e.v];
  }
  offsets_.assign(num_nodes_ + 1, 0);
  for (NodeId v = 0; v < num_nodes_; ++v) offsets_[v + 1] = offsets_[v] + deg[v];
  adjacency_.resize(offsets_.back());
  std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
  for (const Edge& e : edges_) {
    adjacency_[cursor[e.u]++] = e.v;
    adjacency_[cursor[e.v]++] = e.u;
  }
  for (NodeId v = 0; v < num_nodes_; ++v) {
    std::sort(adjacency_.begin() + offsets_[v], adjacency_.begin() + offsets_[v + 1]);
  }
}

bool Graph::has_edge(NodeId a, NodeId b) const {
  if (a < 0 || b < 0 || a >= num_nodes_ || b >= num_nodes_) return false;
  auto nb = neighbors(a);
  return std::binary_search(nb.begin(), nb.end(), b);
}

std::size_t Graph::num_components() const {
  std::vector<char> seen(num_nodes_, 0);
  std::vector<NodeId> stack;
  std::size_t count = 0;
  for (NodeId s = 0; s < num_nodes_; ++s) {
    if (seen[s]) continue;
    ++count;
    seen[s] = 1;
    stack.push_back(s);
    while (!stack.empty()) {
      NodeId x = stack.back();
      stack.pop_back();
      for (NodeId y : neighbors(x)) {
        if (!seen[y]) {
          seen[y] = 1;
          stack.push_back(y);
        }
      }
    }
  }
  return count;
}

NodeId NodeIndex::intern(const std::string& raw) {
  auto [it, inserted] = ids_.emplace(raw, static_cast<NodeId>(raw_.size()));
  if (inserted) raw_.push_back(raw);
  return it->second;
}

std::optional<NodeId> NodeIndex::find(const std::string& raw) const {
  auto it = ids_.find(raw);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

namespace {

bool is_blank_or_comment(const std::string& line) {
  auto pos = line.find_first_not_of(" \t\r");
  return pos == std::string::npos || line[pos] == '#';
}

}  // namespace

LoadedGraph load_edge_list(std::istream& in, NodeIndex index) {
  LoadedGraph out;
  std::set<Edge> seen;
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    std::istringstream fields(line);
    std::string a, b, extra;
    if (!(fields >> a >> b)) throw ParseError("expected two node ids", line_no);
    if (fields >> extra) throw ParseError("unexpected trailing field '" + extra + "'", line_no);
    ++out.report.lines;
    NodeId ia = index.intern(a);
    NodeId ib = index.intern(b);
    if (ia == ib) {
      ++out.report.self_loops_dropped;
      continue;
    }
    Edge e(ia, ib);
    if (!seen.insert(e).second) {
      ++out.report.duplicates_dropped;
      continue;
    }
    edges.push_back(e);
  }
  if (index.size() == 0) throw Error("empty graph: no edges in input");
  out.graph = Graph(index.size(), std::move(edges));
  out.index = std::move(index);
  return out;
}

LoadedGraph load_edge_list(const std::filesystem::path& path, NodeIndex index) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return load_edge_list(in, std::move(index));
}

void write_edge_list(std::ostream& out, std::span<const Edge> edges) {
  for (const Edge& e : edges) out << e.u << ' ' << e.v << '\n';
}

void write_edge_list(const std::filesystem::path& path, std::span<const Edge> edges) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_edge_list(out, edges);
}

std::vector<Edge> read_dense_edge_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    std::istringstream fields(line);
    long a, b;
    if (!(fields >> a >> b)) throw ParseError("expected two integer node ids", line_no);
    edges.emplace_back(static_cast<NodeId>(a), static_cast<NodeId>(b));
  }
  return edges;
}

void write_node_index(const std::filesystem::path& path, const NodeIndex& index) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (NodeId v = 0; v < index.size(); ++v) out << v << '\t' << index.raw(v) << '\n';
}

NodeIndex read_node_index(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  NodeIndex index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    std::istringstream fields(line);
    long dense;
    std::string raw;
    if (!(fields >> dense >> raw)) throw ParseError("expected dense id and raw id", line_no);
    if (index.intern(raw) != dense) throw ParseError("node map is not dense and ordered", line_no);
  }
  return index;
}

double LabeledDataset::label_coverage() const {
  if (labels.empty()) return 0.0;
  auto n = std::count_if(labels.begin(), labels.end(), [](int c) { return c >= 0; });
  return static_cast<double>(n) / static_cast<double>(labels.size());
}

std::size_t load_labels(std::istream& in, LabeledDataset& dataset) {
  std::vector<std::pair<NodeId, std::string>> raw_labels;
  std::set<std::string> names;
  std::size_t unknown = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("expected node_id<TAB>class_label", line_no);
    std::string node = line.substr(0, tab);
    std::string label = line.substr(tab + 1);
    while (!label.empty() && (label.back() == '\r' || label.back() == ' ')) label.pop_back();
    if (label.empty()) throw ParseError("empty class label", line_no);
    auto id = dataset.index.find(node);
    if (!id) {
      ++unknown;
      continue;
    }
    raw_labels.emplace_back(*id, label);
    names.insert(label);
  }
  dataset.class_names.assign(names.begin(), names.end());
  dataset.labels.assign(dataset.graph.num_nodes(), -1);
  for (const auto& [node, label] : raw_labels) {
    auto it = std::lower_bound(dataset.class_names.begin(), dataset.class_names.end(), label);
    dataset.labels[node] = static_cast<int>(it - dataset.class_names.begin());
  }
  return unknown;
}

void write_labels(const std::filesystem::path& path, const LabeledDataset& dataset) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (NodeId v = 0; v < dataset.graph.num_nodes(); ++v) {
    if (dataset.labels[v] >= 0) out << dataset.index.raw(v) << '\t' << dataset.class_names[dataset.labels[v]] << '\n';
  }
}

EdgeSplit split_edges(const Graph& g, double val_frac, double test_frac, std::uint64_t seed) {
  if (val_frac < 0 || test_frac < 0 || val_frac + test_frac >= 1.0) {
    throw ConfigError("split fractions must be non-negative and sum to less than 1");
  }
  const std::size_t num_edges = g.num_edges();
  const auto n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(num_edges)));
  const auto n_test = static_cast<std::size_t>(std::floor(test_frac * static_cast<double>(num_edges)));
  if (n_val + n_test > num_edges) throw Error("requested held-out edges exceed available edges");

  const double n = static_cast<double>(g.num_nodes());
  const double non_edges = n * (n - 1) / 2 - static_cast<double>(num_edges);
  if (static_cast<double>(n_val + n_test) > non_edges) {
    throw Error("not enough non-edges to sample " + std::to_string(n_val + n_test) + " negatives");
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(num_edges);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  EdgeSplit split;
  split.seed = seed;
  split.val_frac = val_frac;
  split.test_frac = test_frac;
  const auto& all = g.edges();
  for (std::size_t k = 0; k < n_val; ++k) split.val_pos.push_back(all[order[k]]);
  for (std::size_t k = n_val; k < n_val + n_test; ++k) split.test_pos.push_back(all[order[k]]);
  std::vector<Edge> train;
  train.reserve(num_edges - n_val - n_test);
  for (std::size_t k = n_val + n_test; k < num_edges; ++k) train.push_back(all[order[k]]);
  split.train_graph = Graph(g.num_nodes(), std::move(train));

  // Rejection sampling over uniformly drawn node pairs.
  std::uniform_int_distribution<NodeId> pick(0, g.num_nodes() - 1);
  std::set<Edge> taken;
  auto draw = [&](std::size_t count, std::vector<Edge>& into) {
    while (into.size() < count) {
      NodeId a = pick(rng), b = pick(rng);
      if (a == b || g.has_edge(a, b)) continue;
      Edge e(a, b);
      if (taken.insert(e).second) into.push_back(e);
    }
  };
  draw(n_val, split.val_neg);
  draw(n_test, split.test_neg);
  return split;
}

void write_split(const std::filesystem::path& dir, const EdgeSplit& split) {
  std::filesystem::create_directories(dir);
  write_edge_list(dir / "train.txt", split.train_graph.edges());
  write_edge_list(dir / "val_pos.txt", split.val_pos);
  write_edge_list(dir / "val_neg.txt", split.val_neg);
  write_edge_list(dir / "test_pos.txt", split.test_pos);
  write_edge_list(dir / "test_neg.txt", split.test_neg);
  nlohmann::ordered_json meta;
  meta["format_version"] = 1;
  meta["seed"] = split.seed;
  meta["val_frac"] = split.val_frac;
  meta["test_frac"] = split.test_frac;
  meta["num_nodes"] = split.train_graph.num_nodes();
  meta["train_edges"] = split.train_graph.num_edges();
  meta["val_pos"] = split.val_pos.size();
  meta["test_pos"] = split.test_pos.size();
  meta["train_components"] = split.train_graph.num_components();
  std::ofstream(dir / "split.json") << meta.dump(2) << '\n';
}

EdgeSplit read_split(const std::filesystem::path& dir, NodeId num_nodes) {
  std::ifstream meta_in(dir / "split.json");
  if (!meta_in) throw Error("missing split.json in " + dir.string());
  auto meta = nlohmann::json::parse(meta_in);
  if (meta.at("num_nodes").get<NodeId>() != num_nodes) {
    throw ConfigError("split node count does not match the model");
  }
  EdgeSplit split;
  split.seed = meta.at("seed").get<std::uint64_t>();
  split.val_frac = meta.at("val_frac").get<double>();
  split.test_frac = meta.at("test_frac").get<double>();
  split.train_graph = Graph(num_nodes, read_dense_edge_list(dir / "train.txt"));
  split.val_pos = read_dense_edge_list(dir / "val_pos.txt");
  split.val_neg = read_dense_edge_list(dir / "val_neg.txt");
  split.test_pos = read_dense_edge_list(dir / "test_pos.txt");
  split.test_neg = read_dense_edge_list(dir / "test_neg.txt");
  return split;
}

std::vector<Edge> find_bridges(const Graph& g) {
  const NodeId n = g.num_nodes();
  std::vector<int> order(n, -1), low(n, 0);
  std::vector<Edge> bridges;
  struct Frame {
    NodeId node;
    NodeId parent;
    std::size_t next;
  };
  std::vector<Frame> stack;
  int counter = 0;
  for (NodeId root = 0; root < n; ++root) {
    if (order[root] != -1) continue;
    order[root] = low[root] = counter++;
    stack.push_back({root, -1, 0});
    while (!stack.empty()) {
      Frame& f = stack.back();
      auto nb = g.neighbors(f.node);
      if (f.next < nb.size()) {
        NodeId w = nb[f.next++];
        if (w == f.parent) continue;  // simple graph: one parent edge
        if (order[w] == -1) {
          order[w] = low[w] = counter++;
          stack.push_back({w, f.node, 0});
        } else {
          low[f.node] = std::min(low[f.node], order[w]);
        }
      } else {
        Frame done = f;
        stack.pop_back();
        if (done.parent >= 0) {
          low[done.parent] = std::min(low[done.parent], low[done.node]);
          if (low[done.node] > order[done.parent]) bridges.emplace_back(done.parent, done.node);
        }
      }
    }
  }
  std::sort(bridges.begin(), bridges.end());
  return bridges;
}

std::vector<int> bfs_distances(const Graph& g, NodeId source, int max_hops) {
  std::vector<int> dist(g.num_nodes(), -1);
  std::queue<NodeId> queue;
  dist[source] = 0;
  queue.push(source);
  while (!queue.empty()) {
    NodeId x = queue.front();
    queue.pop();
    if (dist[x] >= max_hops) continue;
    for (NodeId y : g.neighbors(x)) {
      if (dist[y] == -1) {
        dist[y] = dist[x] + 1;
        queue.push(y);
      }
    }
  }
  return dist;
}

}  // namespace nemr
