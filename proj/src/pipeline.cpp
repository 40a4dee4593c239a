#include "nemr/pipeline.hpp"

#include "nemr/checkpoint.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <fcntl.h>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <unistd.h>

#ifndef NEMR_GIT_DESCRIBE
#define NEMR_GIT_DESCRIBE "unknown"
#endif

namespace nemr {

namespace fs = std::filesystem;

std::string build_version() { return NEMR_GIT_DESCRIBE; }

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 unavailable");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream hex;
  for (unsigned int k = 0; k < len; ++k) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[k]);
  return hex.str();
}

namespace {

std::vector<std::string> fields_of(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string f; in >> f;) out.push_back(f);
  return out;
}

void verify_checksums(const fs::path& raw_dir) {
  const auto sums = raw_dir / "SHA256SUMS";
  if (!fs::exists(sums)) return;
  std::ifstream in(sums);
  std::string line;
  while (std::getline(in, line)) {
    auto f = fields_of(line);
    if (f.empty()) continue;
    if (f.size() != 2) throw Error("malformed SHA256SUMS line: " + line);
    std::string name = f[1];
    if (!name.empty() && name[0] == '*') name.erase(0, 1);
    if (sha256_file(raw_dir / name) != f[0]) throw Error("checksum mismatch for " + name);
  }
}

}  // namespace

Json prepare_dataset(const fs::path& raw_dir, const fs::path& out_dir) {
  std::string layout;
  if (fs::exists(raw_dir / "cora.cites") && fs::exists(raw_dir / "cora.content")) {
    layout = "cora";
  } else if (fs::exists(raw_dir / "edges.txt")) {
    layout = "edgelist";
  } else {
    throw ConfigError("unrecognized dataset layout in " + raw_dir.string() +
                      "; expected cora.cites + cora.content (cora) or edges.txt [+ labels.txt] (edgelist)");
  }
  verify_checksums(raw_dir);

  LabeledDataset data;
  std::vector<std::pair<std::string, std::string>> raw_labels;
  std::vector<fs::path> inputs;
  NodeIndex seed_index;
  if (layout == "cora") {
    inputs = {raw_dir / "cora.cites", raw_dir / "cora.content"};
    std::ifstream content(inputs[1]);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(content, line)) {
      ++line_no;
      auto f = fields_of(line);
      if (f.empty()) continue;
      if (f.size() < 2) throw ParseError("expected id ... class in cora.content", line_no);
      seed_index.intern(f.front());
      raw_labels.emplace_back(f.front(), f.back());
    }
  } else {
    inputs = {raw_dir / "edges.txt"};
    if (fs::exists(raw_dir / "labels.txt")) inputs.push_back(raw_dir / "labels.txt");
  }

  auto loaded = load_edge_list(inputs[0], seed_index);
  data.graph = std::move(loaded.graph);
  data.index = std::move(loaded.index);
  std::size_t unknown_labels = 0;
  if (layout == "cora") {
    std::ostringstream tsv;
    for (const auto& [id, cls] : raw_labels) tsv << id << '\t' << cls << '\n';
    std::istringstream in(tsv.str());
    unknown_labels = load_labels(in, data);
  } else if (inputs.size() > 1) {
    std::ifstream in(inputs[1]);
    unknown_labels = load_labels(in, data);
  }

  fs::create_directories(out_dir);
  write_edge_list(out_dir / "edges.txt", data.graph.edges());
  write_node_index(out_dir / "nodes.txt", data.index);
  if (data.has_labels()) write_labels(out_dir / "labels.txt", data);

  Json stats;
  stats["format_version"] = 1;
  stats["layout"] = layout;
  stats["nodes"] = data.graph.num_nodes();
  stats["edges"] = data.graph.num_edges();
  stats["raw_edge_lines"] = loaded.report.lines;
  stats["duplicates_dropped"] = loaded.report.duplicates_dropped;
  stats["self_loops_dropped"] = loaded.report.self_loops_dropped;
  stats["labels"] = data.num_classes();
  stats["label_coverage"] = data.has_labels() ? data.label_coverage() : 0.0;
  stats["unknown_label_ids"] = unknown_labels;
  stats["components"] = data.graph.num_components();
  Json sums = Json::object();
  for (const auto& p : inputs) sums[p.filename().string()] = sha256_file(p);
  stats["input_sha256"] = sums;
  std::ofstream(out_dir / "stats.json") << stats.dump(2) << '\n';
  return stats;
}

LabeledDataset load_prepared(const fs::path& dir) {
  if (!fs::exists(dir / "edges.txt") || !fs::exists(dir / "nodes.txt")) {
    throw ConfigError(dir.string() + " is not a prepared dataset (run `nemr prepare` first)");
  }
  LabeledDataset data;
  data.index = read_node_index(dir / "nodes.txt");
  data.graph = Graph(data.index.size(), read_dense_edge_list(dir / "edges.txt"));
  if (fs::exists(dir / "labels.txt")) {
    std::ifstream in(dir / "labels.txt");
    if (load_labels(in, data) != 0) throw Error("labels.txt references unknown nodes");
  }
  return data;
}

Pools build_pools(const Graph& train_graph, const TrainConfig& cfg, int threads) {
  PoolOptions opts;
  opts.max_len = cfg.max_len;
  opts.max_paths = cfg.max_paths;
  opts.max_pairs = cfg.resolved_max_pairs(train_graph.num_edges());
  opts.max_expansions = cfg.max_expansions;
  opts.seed = cfg.seed;
  opts.threads = threads;
  Pools pools;
  pools.multi = build_multipath_pool(train_graph, opts, &pools.multi_stats);
  pools.single = build_singlepath_pool(train_graph, opts, &pools.single_stats);
  return pools;
}

Json pool_summary(const Pools& pools) {
  std::size_t paths = 0;
  for (const auto& s : pools.multi) paths += s.paths.size();
  Json j;
  j["multi_pairs"] = pools.multi.size();
  j["multi_paths"] = paths;
  j["multi_candidates_examined"] = pools.multi_stats.candidates_examined;
  j["multi_truncated_searches"] = pools.multi_stats.truncated_searches;
  j["single_pairs"] = pools.single.entries.size();
  j["single_bridge_pairs"] = pools.single_stats.bridge_pairs;
  j["single_candidates_examined"] = pools.single_stats.candidates_examined;
  j["single_truncated_searches"] = pools.single_stats.truncated_searches;
  return j;
}

ClassifierReport shuffled_baseline(const MatrixXd& embeddings, std::span<const int> labels, int num_classes,
                                   double train_fraction, std::uint64_t seed, int repetitions) {
  std::vector<int> permuted(labels.begin(), labels.end());
  std::vector<std::size_t> labeled;
  for (std::size_t v = 0; v < permuted.size(); ++v) {
    if (permuted[v] >= 0) labeled.push_back(v);
  }
  std::vector<int> values;
  for (auto v : labeled) values.push_back(permuted[v]);
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::shuffle(values.begin(), values.end(), rng);
  for (std::size_t k = 0; k < labeled.size(); ++k) permuted[labeled[k]] = values[k];
  return classify_nodes(embeddings, permuted, num_classes, train_fraction, seed, repetitions);
}

ExperimentResult run_experiment(const LabeledDataset& data, const RunConfig& cfg, const ExperimentHooks& hooks) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult r;
  r.split = split_edges(data.graph, cfg.split.val_frac, cfg.split.test_frac, cfg.split_seed());
  if (hooks.on_split) hooks.on_split(r.split);
  Pools pools = build_pools(r.split.train_graph, cfg.train, cfg.threads);
  r.pools = pool_summary(pools);
  if (hooks.on_pools) hooks.on_pools(pools);

  TrainHooks th;
  th.on_epoch = hooks.on_epoch;
  th.checkpoint = hooks.checkpoint;
  th.validate = [&](const ModelState& s) { return evaluate_links(s, r.split.val_pos, r.split.val_neg).auc; };
  r.training = train(init_state(cfg.train, data.graph.num_nodes()), r.split.train_graph, pools.multi, pools.single,
                     cfg.train, th);
  r.test = evaluate_links(r.training.state, r.split.test_pos, r.split.test_neg);
  if (data.has_labels()) {
    const auto& emb = r.training.state.embeddings;
    r.classification = classify_nodes(emb, data.labels, data.num_classes(), cfg.eval.classify_train_fraction,
                                      cfg.train.seed, cfg.eval.classify_repetitions);
    r.shuffled = shuffled_baseline(emb, data.labels, data.num_classes(), cfg.eval.classify_train_fraction,
                                   cfg.train.seed, cfg.eval.classify_repetitions);
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

RunLock::RunLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid()) + "\n";
      [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      return;
    }
    if (errno != EEXIST) throw Error("cannot create lock " + path_.string());
    long owner = 0;
    std::ifstream(path_) >> owner;
    if (owner > 0 && (::kill(static_cast<pid_t>(owner), 0) == 0 || errno == EPERM)) {
      throw Error(dir.string() + " is in use by process " + std::to_string(owner) + " (" + path_.string() + ")");
    }
    fs::remove(path_);
  }
  throw Error("cannot acquire " + path_.string());
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

namespace {

Json report_json(const ClassifierReport& c) {
  Json j;
  j["micro_f1"] = c.micro_f1;
  j["macro_f1"] = c.macro_f1;
  j["precision"] = c.precision;
  j["recall"] = c.recall;
  j["train_fraction"] = c.train_fraction;
  j["repetitions"] = c.repetitions;
  return j;
}

Json metrics_json(const ModelState& state, const EdgeSplit& split, const LinkMetrics& links,
                  const std::optional<ClassifierReport>& classification,
                  const std::optional<ClassifierReport>& shuffled) {
  Json j;
  j["format_version"] = kMetricsFormatVersion;
  j["backend"] = to_string(state.backend);
  j["auc"] = links.auc;
  j["ap"] = links.ap;
  j["test_positives"] = split.test_pos.size();
  j["test_negatives"] = split.test_neg.size();
  if (classification) {
    j["classification"] = report_json(*classification);
    j["classification_shuffled_labels"] = report_json(*shuffled);
  }
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

Json train_command(const RunConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  if (cfg.out.empty()) throw ConfigError("no output directory (set run.out or --out)");
  const auto data = load_prepared(cfg.dataset);
  RunLock lock(cfg.out);
  write_text(cfg.out / "config.ini", to_ini(cfg));
  const auto wall_start = std::chrono::system_clock::now();

  ExperimentHooks hooks;
  hooks.on_split = [&](const EdgeSplit& s) { write_split(cfg.out / "split", s); };
  hooks.on_pools = [&](const Pools& p) {
    fs::create_directories(cfg.out / "pools");
    write_pool(cfg.out / "pools" / "multi.txt", p.multi);
    write_pool(cfg.out / "pools" / "single.txt", p.single);
  };
  hooks.checkpoint = [&](const ModelState& s, const EpochRecord& rec) {
    save_checkpoint(cfg.out / "last.ckpt", cfg.train, s, rec.epoch);
  };
  std::vector<EpochRecord> seen;
  hooks.on_epoch = [&](const EpochRecord& rec) {
    seen.push_back(rec);
    write_history_csv(cfg.out / "history.csv", seen);
    if (on_epoch) on_epoch(rec);
  };
  auto r = run_experiment(data, cfg, hooks);
  save_checkpoint(cfg.out / "model.ckpt", cfg.train, r.training.state, r.training.best_epoch);
  write_history_csv(cfg.out / "history.csv", r.training.history);
  const Json metrics = metrics_json(r.training.state, r.split, r.test, r.classification, r.shuffled);
  write_text(cfg.out / "metrics.json", metrics.dump(2) + "\n");

  Json meta;
  meta["format_version"] = kMetricsFormatVersion;
  meta["build"] = build_version();
  meta["seed"] = cfg.train.seed;
  meta["split_seed"] = cfg.split_seed();
  meta["threads"] = cfg.threads;
  meta["config"] = to_ini(cfg);
  meta["train_config"] = to_json(cfg.train);
  meta["objective"] = cfg.train.backend == Backend::Variational
                          ? "lambda*L_mul + (1-lambda)*L_sin - elbo_weight*ELBO (ELBO maximized)"
                          : "lambda*L_mul + (1-lambda)*L_sin";
  meta["pools"] = r.pools;
  meta["epochs_run"] = r.training.history.size();
  meta["best_epoch"] = r.training.best_epoch;
  meta["best_validation_auc"] = r.training.best_validation;
  meta["stopped_early"] = r.training.stopped_early;
  meta["started_at"] = std::chrono::duration_cast<std::chrono::seconds>(wall_start.time_since_epoch()).count();
  meta["wall_seconds"] = r.seconds;
  meta["metrics"] = metrics;
  write_text(cfg.out / "metadata.json", meta.dump(2) + "\n");
  return meta;
}

Json eval_command(const fs::path& checkpoint, const fs::path& split_dir, const RunConfig& cfg, const fs::path& out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const NodeId n = static_cast<NodeId>(ck.state.embeddings.rows());
  const EdgeSplit split = read_split(split_dir, n);
  std::optional<ClassifierReport> classification, shuffled;
  if (!cfg.dataset.empty()) {
    const auto data = load_prepared(cfg.dataset);
    if (data.graph.num_nodes() != n) throw ConfigError("checkpoint node count does not match the dataset");
    if (data.has_labels()) {
      classification = classify_nodes(ck.state.embeddings, data.labels, data.num_classes(),
                                      cfg.eval.classify_train_fraction, ck.config.seed, cfg.eval.classify_repetitions);
      shuffled = shuffled_baseline(ck.state.embeddings, data.labels, data.num_classes(),
                                   cfg.eval.classify_train_fraction, ck.config.seed, cfg.eval.classify_repetitions);
    }
  }
  const auto links = evaluate_links(ck.state, split.test_pos, split.test_neg);
  Json metrics = metrics_json(ck.state, split, links, classification, shuffled);
  fs::create_directories(out);
  write_text(out / "metrics.json", metrics.dump(2) + "\n");
  return metrics;
}

namespace {

std::string format_metric(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

std::set<std::tuple<std::string, std::string, int>> completed_rows(const fs::path& csv) {
  std::set<std::tuple<std::string, std::string, int>> done;
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string param, value, trial;
    if (std::getline(ss, param, ',') && std::getline(ss, value, ',') && std::getline(ss, trial, ',')) {
      done.emplace(param, value, std::stoi(trial));
    }
  }
  return done;
}

}  // namespace

std::size_t sweep_command(const RunConfig& cfg, const std::function<void(const std::string&)>& log) {
  cfg.validate();
  if (cfg.sweep.param.empty()) throw ConfigError("sweep.param is not set");
  if (cfg.out.empty()) throw ConfigError("no output directory (set run.out or --out)");
  const auto data = load_prepared(cfg.dataset);
  RunLock lock(cfg.out);
  write_text(cfg.out / "config.ini", to_ini(cfg));
  const auto csv_path = cfg.out / "sweep.csv";
  const auto done = completed_rows(csv_path);
  const bool fresh = !fs::exists(csv_path) || fs::file_size(csv_path) == 0;
  std::ofstream csv(csv_path, std::ios::app);
  if (!csv) throw Error("cannot write " + csv_path.string());
  if (fresh) csv << kSweepHeader << '\n' << std::flush;
  std::ofstream errors;

  struct Point {
    std::string value;
    int trial;
  };
  std::vector<Point> todo;
  for (const auto& value : cfg.sweep.values) {
    for (int t = 0; t < cfg.sweep.trials; ++t) {
      if (!done.count({cfg.sweep.param, value, t})) todo.push_back({value, t});
    }
  }
  // Points run concurrently in groups of `threads`; each point is single-threaded.
  const auto width = static_cast<std::size_t>(cfg.threads);
  std::size_t written = 0;
  for (std::size_t start = 0; start < todo.size(); start += width) {
    const std::size_t end = std::min(todo.size(), start + width);
    std::vector<std::string> rows(end - start), failures(end - start);
    auto work = [&](std::size_t k) {
      const Point& p = todo[start + k];
      try {
        RunConfig c = cfg;
        c.threads = 1;
        c.sweep = {};
        apply_override(c, cfg.sweep.param, p.value);
        c.train.seed = cfg.train.seed + static_cast<std::uint64_t>(p.trial);
        c.split.seed = cfg.split_seed() + static_cast<std::uint64_t>(p.trial);
        const auto r = run_experiment(data, c);
        rows[k] = cfg.sweep.param + "," + p.value + "," + std::to_string(p.trial) + "," + format_metric(r.test.auc) +
                  "," + format_metric(r.test.ap) + "," +
                  (r.classification ? format_metric(r.classification->micro_f1) : std::string());
      } catch (const std::exception& e) {
        failures[k] = cfg.sweep.param + "=" + p.value + " trial " + std::to_string(p.trial) + ": " + e.what();
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t k = 1; k < end - start; ++k) pool.emplace_back(work, k);
    work(0);
    for (auto& t : pool) t.join();
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (!rows[k].empty()) {
        csv << rows[k] << '\n' << std::flush;
        ++written;
        if (log) log(rows[k]);
      } else {
        if (!errors.is_open()) errors.open(cfg.out / "sweep_errors.log", std::ios::app);
        errors << failures[k] << '\n' << std::flush;
        if (log) log("failed: " + failures[k]);
      }
    }
  }
  return written;
}

}  // namespace nemr
