#include "nemr/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace nemr {

namespace pt = boost::property_tree;

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("invalid value '" + text + "' for " + key);
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("invalid boolean '" + text + "' for " + key);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

void set_train_key(TrainConfig& t, const std::string& key, const std::string& v) {
  const std::string name = "train." + key;
  if (key == "lambda") t.lambda = parse_number<double>(name, v);
  else if (key == "embedding_dim") t.embedding_dim = parse_number<int>(name, v);
  else if (key == "hidden_dim") t.hidden_dim = parse_number<int>(name, v);
  else if (key == "learning_rate") t.learning_rate = parse_number<double>(name, v);
  else if (key == "epochs") t.epochs = parse_number<int>(name, v);
  else if (key == "batch_pairs") t.batch_pairs = parse_number<int>(name, v);
  else if (key == "max_len") t.max_len = parse_number<int>(name, v);
  else if (key == "max_paths") t.max_paths = parse_number<std::size_t>(name, v);
  else if (key == "max_pairs") t.max_pairs = parse_number<std::size_t>(name, v);
  else if (key == "max_expansions") t.max_expansions = parse_number<std::size_t>(name, v);
  else if (key == "mc_samples") t.mc_samples = parse_number<int>(name, v);
  else if (key == "backend") t.backend = parse_backend(v);
  else if (key == "single_path_loss_mode") t.single_path_mode = parse_single_path_mode(v);
  else if (key == "symmetric_kl") t.symmetric_kl = parse_bool(name, v);
  else if (key == "elbo_weight") t.elbo_weight = parse_number<double>(name, v);
  else if (key == "clip_norm") t.clip_norm = parse_number<double>(name, v);
  else if (key == "patience") t.patience = parse_number<int>(name, v);
  else if (key == "checkpoint_every") t.checkpoint_every = parse_number<int>(name, v);
  else if (key == "seed") t.seed = parse_number<std::uint64_t>(name, v);
  else throw ConfigError("unknown key " + name);
}

void set_key(RunConfig& c, const std::string& section, const std::string& key, const std::string& v,
             const std::filesystem::path& base) {
  const std::string name = section + "." + key;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base.empty() ? (base / path).lexically_normal() : path;
  };
  if (section == "run") {
    if (key == "dataset") c.dataset = resolve(v);
    else if (key == "out") c.out = resolve(v);
    else if (key == "threads") c.threads = parse_number<int>(name, v);
    else throw ConfigError("unknown key " + name);
  } else if (section == "split") {
    if (key == "val_frac") c.split.val_frac = parse_number<double>(name, v);
    else if (key == "test_frac") c.split.test_frac = parse_number<double>(name, v);
    else if (key == "seed") c.split.seed = parse_number<std::uint64_t>(name, v);
    else throw ConfigError("unknown key " + name);
  } else if (section == "train") {
    set_train_key(c.train, key, v);
  } else if (section == "eval") {
    if (key == "classify_train_fraction") c.eval.classify_train_fraction = parse_number<double>(name, v);
    else if (key == "classify_repetitions") c.eval.classify_repetitions = parse_number<int>(name, v);
    else throw ConfigError("unknown key " + name);
  } else if (section == "sweep") {
    if (key == "param") c.sweep.param = v;
    else if (key == "values") c.sweep.values = split_list(v);
    else if (key == "trials") c.sweep.trials = parse_number<int>(name, v);
    else if (key == "range") c.sweep.range = v;
    else throw ConfigError("unknown key " + name);
  } else {
    throw ConfigError("unknown section [" + section + "]");
  }
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  if (threads < 1) throw ConfigError("run.threads must be >= 1");
  if (!(split.val_frac > 0.0) || !(split.test_frac > 0.0) || split.val_frac + split.test_frac >= 1.0) {
    throw ConfigError("split fractions must be positive and sum to less than 1");
  }
  if (!(eval.classify_train_fraction > 0.0 && eval.classify_train_fraction < 1.0)) {
    throw ConfigError("eval.classify_train_fraction must lie in (0, 1)");
  }
  if (eval.classify_repetitions < 1) throw ConfigError("eval.classify_repetitions must be >= 1");
  if (sweep.trials < 1) throw ConfigError("sweep.trials must be >= 1");
  if (sweep.range != "30-85" && sweep.range != "15-85") throw ConfigError("sweep.range must be 30-85 or 15-85");
  if (!sweep.param.empty()) {
    if (sweep.values.empty()) throw ConfigError("sweep.values must not be empty");
    // Every value must apply cleanly.
    for (const auto& v : sweep.values) {
      RunConfig probe = *this;
      probe.sweep = {};
      apply_override(probe, sweep.param, v);
      probe.validate();
    }
  }
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig c;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("key '" + section + "' outside a section");
    for (const auto& [key, value] : body) set_key(c, section, key, value.data(), base_dir);
  }
  if (c.sweep.param == "train_fraction" && c.sweep.values.empty()) {
    c.sweep.values = train_fraction_grid(c.sweep.range == "15-85");
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), std::filesystem::absolute(path).parent_path());
}

std::string to_ini(const RunConfig& c) {
  const TrainConfig& t = c.train;
  std::ostringstream out;
  out << "[run]\n"
      << "dataset = " << c.dataset.string() << "\n"
      << "out = " << c.out.string() << "\n"
      << "threads = " << c.threads << "\n\n"
      << "[split]\n"
      << "val_frac = " << format_double(c.split.val_frac) << "\n"
      << "test_frac = " << format_double(c.split.test_frac) << "\n"
      << "seed = " << c.split.seed << "\n\n"
      << "[train]\n"
      << "lambda = " << format_double(t.lambda) << "\n"
      << "embedding_dim = " << t.embedding_dim << "\n"
      << "hidden_dim = " << t.hidden_dim << "\n"
      << "learning_rate = " << format_double(t.learning_rate) << "\n"
      << "epochs = " << t.epochs << "\n"
      << "batch_pairs = " << t.batch_pairs << "\n"
      << "max_len = " << t.max_len << "\n"
      << "max_paths = " << t.max_paths << "\n"
      << "max_pairs = " << t.max_pairs << "\n"
      << "max_expansions = " << t.max_expansions << "\n"
      << "mc_samples = " << t.mc_samples << "\n"
      << "backend = " << to_string(t.backend) << "\n"
      << "single_path_loss_mode = " << to_string(t.single_path_mode) << "\n"
      << "symmetric_kl = " << (t.symmetric_kl ? "true" : "false") << "\n"
      << "elbo_weight = " << format_double(t.elbo_weight) << "\n"
      << "clip_norm = " << format_double(t.clip_norm) << "\n"
      << "patience = " << t.patience << "\n"
      << "checkpoint_every = " << t.checkpoint_every << "\n"
      << "seed = " << t.seed << "\n\n"
      << "[eval]\n"
      << "classify_train_fraction = " << format_double(c.eval.classify_train_fraction) << "\n"
      << "classify_repetitions = " << c.eval.classify_repetitions << "\n\n"
      << "[sweep]\n"
      << "param = " << c.sweep.param << "\n"
      << "values = ";
  for (std::size_t k = 0; k < c.sweep.values.size(); ++k) out << (k ? ", " : "") << c.sweep.values[k];
  out << "\ntrials = " << c.sweep.trials << "\n"
      << "range = " << c.sweep.range << "\n";
  return out.str();
}

nlohmann::json to_json(const TrainConfig& t) {
  return nlohmann::ordered_json{
      {"lambda", t.lambda},
      {"embedding_dim", t.embedding_dim},
      {"hidden_dim", t.hidden_dim},
      {"learning_rate", t.learning_rate},
      {"epochs", t.epochs},
      {"batch_pairs", t.batch_pairs},
      {"max_len", t.max_len},
      {"max_paths", t.max_paths},
      {"max_pairs", t.max_pairs},
      {"max_expansions", t.max_expansions},
      {"mc_samples", t.mc_samples},
      {"backend", to_string(t.backend)},
      {"single_path_loss_mode", to_string(t.single_path_mode)},
      {"symmetric_kl", t.symmetric_kl},
      {"elbo_weight", t.elbo_weight},
      {"clip_norm", t.clip_norm},
      {"patience", t.patience},
      {"checkpoint_every", t.checkpoint_every},
      {"seed", t.seed},
  };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig t;
  try {
    t.lambda = j.at("lambda").get<double>();
    t.embedding_dim = j.at("embedding_dim").get<int>();
    t.hidden_dim = j.at("hidden_dim").get<int>();
    t.learning_rate = j.at("learning_rate").get<double>();
    t.epochs = j.at("epochs").get<int>();
    t.batch_pairs = j.at("batch_pairs").get<int>();
    t.max_len = j.at("max_len").get<int>();
    t.max_paths = j.at("max_paths").get<std::size_t>();
    t.max_pairs = j.at("max_pairs").get<std::size_t>();
    t.max_expansions = j.at("max_expansions").get<std::size_t>();
    t.mc_samples = j.at("mc_samples").get<int>();
    t.backend = parse_backend(j.at("backend").get<std::string>());
    t.single_path_mode = parse_single_path_mode(j.at("single_path_loss_mode").get<std::string>());
    t.symmetric_kl = j.at("symmetric_kl").get<bool>();
    t.elbo_weight = j.at("elbo_weight").get<double>();
    t.clip_norm = j.at("clip_norm").get<double>();
    t.patience = j.at("patience").get<int>();
    t.checkpoint_every = j.at("checkpoint_every").get<int>();
    t.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad train config: ") + e.what());
  }
  t.validate();
  return t;
}

void apply_override(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "train_fraction") {
    const double f = parse_number<double>(key, value);
    c.split.test_frac = 1.0 - f - c.split.val_frac;
    if (!(c.split.test_frac > 0.0) || !(f > 0.0)) throw ConfigError("train_fraction " + value + " leaves no test edges");
  } else if (key == "val_frac" || key == "test_frac") {
    set_key(c, "split", key, value, {});
  } else {
    set_train_key(c.train, key, value);
  }
}

std::vector<std::string> train_fraction_grid(bool extended) {
  if (extended) return {"0.15", "0.25", "0.35", "0.45", "0.55", "0.65", "0.75", "0.85"};
  return {"0.30", "0.40", "0.50", "0.60", "0.70", "0.80", "0.85"};
}

}  // namespace nemr
