// Acceptance checks. Prints one PASS/FAIL line per criterion; exits nonzero
// when any selected criterion fails.
//
//   nemr_acceptance [--criterion N]... [--work DIR]

#include "../unit/helpers.hpp"

#include "nemr/pipeline.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace nemr;
using namespace nemr::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << std::fixed << v;
  return os.str();
}

fs::path g_work;

fs::path cora_dir() {
  const auto dir = g_work / "data" / "cora";
  if (!fs::exists(dir / "stats.json")) prepare_dataset(fs::path(NEMR_SOURCE_DIR) / "data" / "cora", dir);
  return dir;
}

RunConfig cora_config(const std::string& name) {
  auto cfg = load_run_config(fs::path(NEMR_SOURCE_DIR) / "configs" / name);
  cfg.dataset = cora_dir();
  cfg.out = g_work / "runs" / fs::path(name).stem();
  cfg.validate();
  return cfg;
}

PoolOptions exhaustive(int max_len) {
  PoolOptions o;
  o.max_len = max_len;
  o.max_paths = kUnlimited;
  o.max_pairs = kUnlimited;
  o.max_expansions = kUnlimited;
  return o;
}

// 1. Reverse-mode gradients against central differences.
Outcome gradients_match() {
  std::mt19937_64 rng(101);
  const auto g = random_graph(10, 0.35, rng);
  std::ostringstream detail;
  bool pass = true;
  for (auto b : {Backend::TwoNorm, Backend::Mlp, Backend::Variational}) {
    for (auto mode : {SinglePathMode::BoundedSurrogate, SinglePathMode::PaperLiteral}) {
      TrainConfig cfg;
      cfg.backend = b;
      cfg.single_path_mode = mode;
      cfg.embedding_dim = 8;
      cfg.hidden_dim = 8;
      cfg.max_len = 5;
      cfg.max_paths = 5;
      cfg.seed = 7;
      PoolOptions o;
      o.max_len = cfg.max_len;
      o.max_paths = cfg.max_paths;
      o.seed = cfg.seed;
      const auto multi = build_multipath_pool(g, o);
      const auto single = build_singlepath_pool(g, o);
      const auto state = init_state(cfg, g.num_nodes());
      const auto check = check_gradients(state, g, multi, single, cfg, rng, 100);
      pass = pass && check.coordinates >= 100 && check.max_relative_error <= 1e-4;
      detail << to_string(b) << "/" << to_string(mode) << " " << std::scientific << std::setprecision(1)
             << check.max_relative_error << " ";
    }
  }
  return {pass, "max rel err " + detail.str()};
}

// 2. Path enumeration and pool qualification against brute force.
Outcome paths_match_brute_force() {
  std::mt19937_64 rng(102);
  std::size_t pairs = 0, mismatches = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const NodeId n = 4 + trial % 7;
    const auto g = random_graph(n, 0.25 + 0.05 * (trial % 5), rng);
    for (int max_len = 1; max_len <= 6; ++max_len) {
      std::map<Edge, std::set<std::vector<NodeId>>> multi_expected;
      std::map<Edge, std::vector<NodeId>> single_expected;
      for (NodeId i = 0; i < n; ++i) {
        for (NodeId j = 0; j < n; ++j) {
          if (i == j) continue;
          const auto truth = brute_force_paths(g, i, j, max_len);
          const auto got = enumerate_simple_paths(g, i, j, max_len);
          ++pairs;
          bool ok = as_set(got) == truth && got.size() == truth.size();
          for (const auto& p : got) ok = ok && is_simple_path(g, p);
          mismatches += !ok;
          if (i < j && truth.size() >= 2) multi_expected[Edge(i, j)] = truth;
          if (i < j && truth.size() == 1) single_expected[Edge(i, j)] = *truth.begin();
        }
      }
      const auto multi = build_multipath_pool(g, exhaustive(max_len));
      const auto single = build_singlepath_pool(g, exhaustive(max_len));
      std::map<Edge, std::set<std::vector<NodeId>>> multi_got;
      for (const auto& s : multi) multi_got[s.endpoints] = as_set(s.paths);
      std::map<Edge, std::vector<NodeId>> single_got;
      for (const auto& e : single.entries) single_got[e.endpoints] = e.path.nodes;
      mismatches += multi_got != multi_expected;
      mismatches += single_got != single_expected;
    }
  }
  return {mismatches == 0, std::to_string(pairs) + " ordered pairs, 300 pool builds, " +
                               std::to_string(mismatches) + " mismatches"};
}

// 3. KL against Monte Carlo, KL zero iff equal, Gaussian path sums.
Outcome gaussian_algebra() {
  std::mt19937_64 rng(103);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> variance(0.2, 3.0);
  const int samples = 100000;
  const int dim = 3;
  auto draw = [&] {
    Gaussian<double> g{VectorXd(dim), VectorXd(dim)};
    for (int d = 0; d < dim; ++d) g.mean[d] = normal(rng), g.var[d] = variance(rng);
    return g;
  };
  auto log_density = [](const Gaussian<double>& g, const VectorXd& x) {
    return (-0.5 * ((x - g.mean).array().square() / g.var.array() + (2 * std::numbers::pi * g.var.array()).log()))
        .sum();
  };
  int mc_fail = 0;
  double worst_z = 0;
  for (int t = 0; t < 20; ++t) {
    const auto p = draw(), q = draw();
    double sum = 0, sum_sq = 0;
    for (int s = 0; s < samples; ++s) {
      VectorXd eps(dim);
      for (int d = 0; d < dim; ++d) eps[d] = normal(rng);
      const VectorXd x = reparameterize(p, eps);
      const double v = log_density(p, x) - log_density(q, x);
      sum += v;
      sum_sq += v * v;
    }
    const double mean = sum / samples;
    const double se = std::sqrt((sum_sq / samples - mean * mean) / samples);
    const double z = std::abs(kl_gaussian(p, q) - mean) / se;
    worst_z = std::max(worst_z, z);
    mc_fail += z > 3.0;
  }
  int sign_fail = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto p = draw(), q = draw();
    sign_fail += !(kl_gaussian(p, q) > 1e-9) || std::abs(kl_gaussian(p, p)) > 1e-9;
  }
  int sum_fail = 0;
  for (int t = 0; t < 100; ++t) {
    auto params = MetricParams<double>::zeros(Backend::Variational, dim, 6);
    params.for_each([&](const std::string&, MatrixXd& m) { m = m.unaryExpr([&](double) { return 0.5 * normal(rng); }); });
    const MatrixXd phi = MatrixXd::NullaryExpr(6, dim, [&] { return normal(rng); });
    Path path{{0, 1, 2, 3, 4, 5}};
    std::shuffle(path.nodes.begin(), path.nodes.end(), rng);
    const auto total = std::get<Gaussian<double>>(path_sum(path, Backend::Variational, phi, params));
    VectorXd mean = VectorXd::Zero(dim), var = VectorXd::Zero(dim);
    for (std::size_t k = 0; k + 1 < path.nodes.size(); ++k) {
      const auto g = g_vi(phi.row(path.nodes[k]).transpose(), phi.row(path.nodes[k + 1]).transpose(), params);
      mean += g.mean;
      var += g.var;
    }
    sum_fail += total.mean != mean || total.var != var;
  }
  return {mc_fail == 0 && sign_fail == 0 && sum_fail == 0,
          "MC worst |z| " + fmt(worst_z, 2) + " (" + std::to_string(mc_fail) + "/20 > 3), KL sign failures " +
              std::to_string(sign_fail) + ", path-sum mismatches " + std::to_string(sum_fail)};
}

// 4. Multi-path equivalence on the 4-cycle and single-path order on a path graph.
Outcome constraints_satisfiable() {
  TrainConfig cycle_cfg;
  cycle_cfg.backend = Backend::TwoNorm;
  cycle_cfg.embedding_dim = 8;
  cycle_cfg.lambda = 1.0;
  cycle_cfg.learning_rate = 0.01;
  cycle_cfg.max_len = 3;
  cycle_cfg.epochs = 500;
  cycle_cfg.patience = 0;
  cycle_cfg.seed = 4;
  const auto square = cycle(4);
  const auto multi = build_multipath_pool(square, exhaustive(3));
  const auto trained = train(init_state(cycle_cfg, 4), square, multi, {}, cycle_cfg);
  const double l_mul = loss_mul(multi, trained.state, square, cycle_cfg);
  const long steps = trained.state.adam.step;

  // The 2-norm obeys the triangle inequality, so r' > R needs the perceptron.
  TrainConfig path_cfg;
  path_cfg.backend = Backend::Mlp;
  path_cfg.embedding_dim = 8;
  path_cfg.hidden_dim = 16;
  path_cfg.lambda = 0.0;
  path_cfg.learning_rate = 0.01;
  path_cfg.max_len = 4;
  path_cfg.epochs = 500;
  path_cfg.patience = 0;
  path_cfg.seed = 4;
  const auto line = path_graph(5);
  const auto single = build_singlepath_pool(line, exhaustive(4));
  const auto fitted = train(init_state(path_cfg, 5), line, {}, single, path_cfg);
  double min_margin = std::numeric_limits<double>::infinity();
  int pairs = 0;
  for (NodeId i = 0; i < 5; ++i) {
    for (NodeId j = i + 2; j < 5; ++j) {
      std::vector<NodeId> nodes;
      for (NodeId v = i; v <= j; ++v) nodes.push_back(v);
      const auto& s = fitted.state;
      const double direct = scalarize(relation(Backend::Mlp, s.embeddings.row(i).transpose(),
                                               s.embeddings.row(j).transpose(), s.metric));
      const double along = scalarize(path_sum(Path{nodes}, Backend::Mlp, s.embeddings, s.metric));
      min_margin = std::min(min_margin, direct - along);
      ++pairs;
    }
  }
  return {l_mul < 1e-3 && steps <= 500 && min_margin > 0,
          "4-cycle L_mul " + fmt(l_mul, 8) + " after " + std::to_string(steps) + " steps; path graph (MLP) min r'-R " +
              fmt(min_margin) + " over " + std::to_string(pairs) + " pairs"};
}

// Trains a run directory, reusing a finished one with an identical config echo.
Json ensure_run(const RunConfig& cfg) {
  const auto echo = cfg.out / "config.ini";
  if (fs::exists(cfg.out / "metrics.json") && fs::exists(echo)) {
    std::ifstream in(echo);
    std::stringstream text;
    text << in.rdbuf();
    if (text.str() == to_ini(cfg)) {
      std::ifstream m(cfg.out / "metadata.json");
      return Json::parse(m);
    }
  }
  fs::remove_all(cfg.out);
  return train_command(cfg, [](const EpochRecord& r) {
    std::cerr << "  epoch " << r.epoch << " loss " << r.loss << " val " << r.validation << "\n";
  });
}

// 5. Cora link prediction for all three backends.
Outcome cora_link_prediction() {
  std::ostringstream detail;
  bool pass = true;
  double total_seconds = 0;
  for (const auto& [file, auc_min, ap_min] : {std::tuple{"cora_vi.ini", 0.85, 0.85}, std::tuple{"cora_2n.ini", 0.80, 0.0},
                                              std::tuple{"cora_mlp.ini", 0.80, 0.0}}) {
    auto cfg = cora_config(file);
    fs::remove_all(cfg.out);
    const auto meta = ensure_run(cfg);
    const double a = meta["metrics"]["auc"], p = meta["metrics"]["ap"];
    total_seconds += meta["wall_seconds"].get<double>();
    pass = pass && a >= auc_min && p >= ap_min;
    detail << to_string(cfg.train.backend) << " AUC " << fmt(a) << " AP " << fmt(p) << "; ";
  }
  pass = pass && total_seconds <= 1800;
  detail << fmt(total_seconds, 0) << " s";
  return {pass, detail.str()};
}

std::map<std::string, std::vector<double>> sweep_auc(const RunConfig& cfg) {
  sweep_command(cfg, [](const std::string& line) { std::cerr << "  " << line << "\n"; });
  std::ifstream in(cfg.out / "sweep.csv");
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::vector<double>> out;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() >= 4 && !cells[3].empty()) out[cells[1]].push_back(std::stod(cells[3]));
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(v.size());
}

// 6. Embedding-size and training-fraction trends.
Outcome cora_sensitivity() {
  auto dims = cora_config("cora_sweep_dim.ini");
  fs::remove_all(dims.out);
  dims.sweep.values = {"4", "128"};
  const auto by_dim = sweep_auc(dims);
  const double k4 = mean_of(by_dim.count("4") ? by_dim.at("4") : std::vector<double>{});
  const double k128 = mean_of(by_dim.count("128") ? by_dim.at("128") : std::vector<double>{});
  const bool dim_ok = by_dim.count("4") && by_dim.count("128") && by_dim.at("4").size() == 10 &&
                      by_dim.at("128").size() == 10 && k128 >= k4 - 0.02 && k4 >= 0.70;

  auto fractions = cora_config("cora_sweep_fraction.ini");
  fs::remove_all(fractions.out);
  const auto by_fraction = sweep_auc(fractions);
  std::vector<double> curve;
  bool complete = true;
  for (const auto& v : fractions.sweep.values) {
    complete = complete && by_fraction.count(v) && by_fraction.at(v).size() == 10;
    curve.push_back(by_fraction.count(v) ? mean_of(by_fraction.at(v)) : std::numeric_limits<double>::quiet_NaN());
  }
  int inversions = 0;
  bool small = true;
  for (std::size_t k = 1; k < curve.size(); ++k) {
    if (curve[k] < curve[k - 1]) {
      ++inversions;
      small = small && curve[k - 1] - curve[k] <= 0.01;
    }
  }
  const bool fraction_ok = complete && (inversions == 0 || (inversions == 1 && small));
  std::ostringstream detail;
  detail << "K=4 " << fmt(k4) << " K=128 " << fmt(k128) << "; fraction curve";
  for (double c : curve) detail << " " << fmt(c, 3);
  detail << " (" << inversions << " inversions)";
  return {dim_ok && fraction_ok, detail.str()};
}

// 7. Node classification with VI embeddings against the label-shuffle baseline.
Outcome cora_classification() {
  const auto cfg = cora_config("cora_vi.ini");
  const auto meta = ensure_run(cfg);
  const auto& m = meta["metrics"];
  if (!m.contains("classification")) return {false, "no labels"};
  const double f1 = m["classification"]["micro_f1"], shuffled = m["classification_shuffled_labels"]["micro_f1"];
  const int reps = m["classification"]["repetitions"];
  const double fraction = m["classification"]["train_fraction"];
  return {f1 >= 0.55 && f1 - shuffled >= 0.20 && reps == 10 && std::abs(fraction - 0.10) < 1e-12,
          "micro-F1 " + fmt(f1) + " vs shuffled " + fmt(shuffled) + " (" + std::to_string(reps) + " trials, " +
              fmt(fraction * 100, 0) + "% train)"};
}

// 8. Ranking-metric properties.
Outcome metric_invariants() {
  std::mt19937_64 rng(108);
  std::uniform_real_distribution<double> u(-2, 2);
  std::bernoulli_distribution coin(0.5);
  int cases = 0, failures = 0;
  for (int t = 0; t < 1000; ++t) {
    LinkScores s;
    const int n = 4 + t % 20;
    for (int k = 0; k < n; ++k) s.push_back({Edge(k, n + k), std::round(u(rng) * 8) / 8, coin(rng)});
    s[0].positive = true;
    s[1].positive = false;
    auto mapped = s;
    for (auto& p : mapped) p.score = std::atan(p.score) * 5 + std::exp(p.score);
    failures += auc(mapped) != auc(s);
    ++cases;

    double min_pos = std::numeric_limits<double>::infinity(), max_neg = -min_pos;
    for (const auto& p : s) {
      if (p.positive) min_pos = std::min(min_pos, p.score);
      else max_neg = std::max(max_neg, p.score);
    }
    const bool perfect = min_pos > max_neg;
    if (min_pos != max_neg) {
      failures += (auc(s) == 1.0) != perfect || (average_precision(s) == 1.0) != perfect;
      ++cases;
    }
    auto separated = s;
    for (auto& p : separated) p.score += p.positive ? 10.0 : 0.0;
    failures += auc(separated) != 1.0 || average_precision(separated) != 1.0;
    ++cases;
  }
  for (auto b : {Backend::TwoNorm, Backend::Mlp, Backend::Variational}) {
    TrainConfig cfg;
    cfg.backend = b;
    cfg.embedding_dim = 6;
    cfg.hidden_dim = 8;
    cfg.seed = 108;
    const auto state = init_state(cfg, 40);
    for (int t = 0; t < 400; ++t) {
      const NodeId i = static_cast<NodeId>(rng() % 40), j = static_cast<NodeId>(rng() % 40);
      failures += score_pair(state, i, j) != score_pair(state, j, i);
      ++cases;
    }
  }
  return {failures == 0 && cases >= 1000, std::to_string(cases) + " cases, " + std::to_string(failures) + " failures"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NEMR acceptance checks"};
  std::vector<int> selected;
  std::string work = NEMR_WORK_DIR;
  app.add_option("--criterion", selected, "Criterion number (repeatable); default all")->check(CLI::Range(1, 8));
  app.add_option("--work", work, "Scratch directory for prepared data and runs");
  CLI11_PARSE(app, argc, argv);
  g_work = work;
  fs::create_directories(g_work);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8};

  const std::map<int, std::pair<std::string, Outcome (*)()>> criteria{
      {1, {"gradient correctness", gradients_match}},
      {2, {"path enumeration oracle", paths_match_brute_force}},
      {3, {"gaussian algebra", gaussian_algebra}},
      {4, {"constraint satisfiability", constraints_satisfiable}},
      {5, {"cora link prediction", cora_link_prediction}},
      {6, {"cora sensitivity trends", cora_sensitivity}},
      {7, {"cora node classification", cora_classification}},
      {8, {"metric invariants", metric_invariants}},
  };
  bool all = true;
  for (int c : selected) {
    const auto& [name, fn] = criteria.at(c);
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << c << " " << name << ": " << o.detail << " [" << fmt(seconds, 1)
              << " s]" << std::endl;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
