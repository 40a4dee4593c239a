#include "nemr/checkpoint.hpp"

#include "nemr/config.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace nemr {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 8> kMagic{'N', 'E', 'M', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_matrix(std::ostream& out, const MatrixXd& m) {
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

class Reader {
 public:
  explicit Reader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

  template <typename T>
  T get() {
    T v;
    read(&v, sizeof v);
    return v;
  }

  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) throw Error("truncated checkpoint " + name_);
  }

  MatrixXd matrix(std::int64_t rows, std::int64_t cols) {
    MatrixXd m(rows, cols);
    read(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    return m;
  }

 private:
  std::istream& in_;
  std::string name_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainConfig& config, const ModelState& state,
                     int epoch) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(kMagic.data(), kMagic.size());
    put(out, kVersion);
    const std::string cfg = to_json(config).dump();
    put(out, static_cast<std::uint64_t>(cfg.size()));
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    put(out, static_cast<std::int32_t>(epoch));
    put(out, static_cast<std::int64_t>(state.adam.step));
    const auto tensors = state.trainables();
    const auto names = state.trainable_names();
    const bool moments = state.adam.m.size() == tensors.size();
    put(out, static_cast<std::uint32_t>(tensors.size()));
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      put(out, static_cast<std::uint32_t>(names[k].size()));
      out.write(names[k].data(), static_cast<std::streamsize>(names[k].size()));
      put(out, static_cast<std::int64_t>(tensors[k]->rows()));
      put(out, static_cast<std::int64_t>(tensors[k]->cols()));
      put_matrix(out, *tensors[k]);
      put(out, static_cast<std::uint8_t>(moments));
      if (moments) {
        put_matrix(out, state.adam.m[k]);
        put_matrix(out, state.adam.v[k]);
      }
    }
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  Reader r(in, path.string());
  std::array<char, 8> magic{};
  r.read(magic.data(), magic.size());
  if (magic != kMagic) throw Error(path.string() + " is not a checkpoint");
  if (const auto v = r.get<std::uint32_t>(); v != kVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(v));
  }
  std::string cfg(r.get<std::uint64_t>(), '\0');
  r.read(cfg.data(), cfg.size());
  Checkpoint ck;
  try {
    ck.config = train_config_from_json(nlohmann::json::parse(cfg));
  } catch (const nlohmann::json::exception& e) {
    throw Error("corrupt config in checkpoint: " + std::string(e.what()));
  }
  ck.epoch = r.get<std::int32_t>();
  ck.state.backend = ck.config.backend;
  ck.state.adam.step = r.get<std::int64_t>();

  const auto count = r.get<std::uint32_t>();
  ck.state.embeddings.resize(0, 0);
  ck.state.metric = MetricParams<double>::zeros(ck.config.backend, ck.config.embedding_dim, ck.config.hidden_dim);
  const auto names = ck.state.trainable_names();
  if (count != names.size()) throw Error("checkpoint tensor count does not match its backend");
  std::vector<MatrixXd> values, first, second;
  bool moments = true;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name(r.get<std::uint32_t>(), '\0');
    r.read(name.data(), name.size());
    if (name != names[k]) throw Error("unexpected tensor '" + name + "' in checkpoint");
    const auto rows = r.get<std::int64_t>(), cols = r.get<std::int64_t>();
    if (rows < 0 || cols < 0 || rows * cols > (std::int64_t{1} << 34)) throw Error("bad tensor shape in checkpoint");
    values.push_back(r.matrix(rows, cols));
    if (r.get<std::uint8_t>()) {
      first.push_back(r.matrix(rows, cols));
      second.push_back(r.matrix(rows, cols));
    } else {
      moments = false;
    }
  }
  ck.state.embeddings = values[0];
  auto slots = ck.state.trainables();
  for (std::size_t k = 1; k < slots.size(); ++k) {
    if (slots[k]->rows() != values[k].rows() || slots[k]->cols() != values[k].cols()) {
      throw Error("tensor " + names[k] + " does not match the stored config");
    }
    *slots[k] = values[k];
  }
  if (ck.state.embeddings.cols() != ck.config.embedding_dim) throw Error("embedding width does not match the stored config");
  if (moments) {
    ck.state.adam.m = std::move(first);
    ck.state.adam.v = std::move(second);
  }
  return ck;
}

}  // namespace nemr
