#pragma once

// Relation functions g(phi_i, phi_j) and the Gaussian algebra built on them.
// Everything here is a pure function templated on the scalar type; the
// training objective re-expresses the same maths on the autodiff tape.

#include "nemr/paths.hpp"
#include "nemr/types.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace nemr {

enum class Backend { TwoNorm, Mlp, Variational };

Backend parse_backend(std::string_view name);  // "2N" | "MLP" | "VI"
std::string_view to_string(Backend b);

// Affine layer in row-vector convention: y = x * weight + bias.
template <typename T>
struct DenseLayer {
  Matrix<T> weight;  // in x out
  Matrix<T> bias;    // 1 x out

  DenseLayer() = default;
  DenseLayer(Eigen::Index in, Eigen::Index out) : weight(Matrix<T>::Zero(in, out)), bias(Matrix<T>::Zero(1, out)) {}

  Eigen::Index in() const { return weight.rows(); }
  Eigen::Index out() const { return weight.cols(); }

  // x is a column vector of size in(); returns a column vector of size out().
  template <typename Derived>
  Vector<T> apply(const Eigen::MatrixBase<Derived>& x) const {
    return weight.transpose() * x + bias.transpose();
  }
};

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

// Trainable tensors of the relation functions. Only the ones used by the
// active backend are populated.
template <typename T>
struct MetricParams {
  // perceptron backend: 2K -> hidden -> K
  DenseLayer<T> mlp_hidden, mlp_out;
  // variational encoder: K -> hidden -> (mean K, log-variance K)
  DenseLayer<T> enc_hidden, enc_mean, enc_logvar;
  // decoder: K -> hidden -> 2K reconstruction mean
  DenseLayer<T> dec_hidden, dec_out;

  static MetricParams zeros(Backend backend, Eigen::Index dim, Eigen::Index hidden) {
    MetricParams p;
    if (backend == Backend::Mlp) {
      p.mlp_hidden = DenseLayer<T>(2 * dim, hidden);
      p.mlp_out = DenseLayer<T>(hidden, dim);
    } else if (backend == Backend::Variational) {
      p.enc_hidden = DenseLayer<T>(dim, hidden);
      p.enc_mean = DenseLayer<T>(hidden, dim);
      p.enc_logvar = DenseLayer<T>(hidden, dim);
      p.dec_hidden = DenseLayer<T>(dim, hidden);
      p.dec_out = DenseLayer<T>(hidden, 2 * dim);
    }
    return p;
  }

  // Visits every populated tensor in a fixed order with a stable name.
  template <typename Fn>
  void for_each(Fn&& fn) {
    visit_layers(*this, fn);
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    visit_layers(*this, fn);
  }

 private:
  template <typename Self, typename Fn>
  static void visit_layers(Self& self, Fn& fn) {
    auto layer = [&](const char* name, auto& l) {
      if (l.weight.size() == 0) return;
      fn(std::string(name) + ".weight", l.weight);
      fn(std::string(name) + ".bias", l.bias);
    };
    layer("mlp_hidden", self.mlp_hidden);
    layer("mlp_out", self.mlp_out);
    layer("enc_hidden", self.enc_hidden);
    layer("enc_mean", self.enc_mean);
    layer("enc_logvar", self.enc_logvar);
    layer("dec_hidden", self.dec_hidden);
    layer("dec_out", self.dec_out);
  }
};

// Throws ConfigError unless the populated layers chain for embedding size `dim`.
template <typename T>
void check_shapes(const MetricParams<T>& p, Backend backend, Eigen::Index dim) {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("metric parameter shape mismatch: ") + what);
  };
  auto layer_ok = [](const DenseLayer<T>& l) { return l.bias.rows() == 1 && l.bias.cols() == l.out(); };
  if (backend == Backend::Mlp) {
    need(p.mlp_hidden.in() == 2 * dim, "mlp_hidden input must be 2K");
    need(p.mlp_out.in() == p.mlp_hidden.out(), "mlp_out input must equal hidden size");
    need(p.mlp_out.out() == dim, "mlp_out output must be K");
    need(layer_ok(p.mlp_hidden) && layer_ok(p.mlp_out), "mlp bias");
  } else if (backend == Backend::Variational) {
    need(p.enc_hidden.in() == dim, "enc_hidden input must be K");
    need(p.enc_mean.in() == p.enc_hidden.out() && p.enc_logvar.in() == p.enc_hidden.out(), "encoder heads");
    need(p.enc_mean.out() == dim && p.enc_logvar.out() == dim, "encoder outputs must be K");
    need(p.dec_hidden.in() == dim, "dec_hidden input must be K");
    need(p.dec_out.in() == p.dec_hidden.out() && p.dec_out.out() == 2 * dim, "decoder output must be 2K");
    need(layer_ok(p.enc_hidden) && layer_ok(p.enc_mean) && layer_ok(p.enc_logvar) && layer_ok(p.dec_hidden) &&
             layer_ok(p.dec_out),
         "encoder/decoder bias");
  }
}

// Diagonal Gaussian relation.
template <typename T>
struct Gaussian {
  Vector<T> mean;
  Vector<T> var;
};

// Scalar (2-norm) | vector (perceptron) | diagonal Gaussian (variational).
template <typename T>
using Relation = std::variant<T, Vector<T>, Gaussian<T>>;

template <typename A, typename B>
typename A::Scalar g_2norm(const Eigen::MatrixBase<A>& phi_i, const Eigen::MatrixBase<B>& phi_j) {
  return (phi_i - phi_j).norm();
}

template <typename T, typename A, typename B>
Vector<T> g_mlp(const Eigen::MatrixBase<A>& phi_i, const Eigen::MatrixBase<B>& phi_j, const MetricParams<T>& p) {
  if (phi_i.size() + phi_j.size() != p.mlp_hidden.in()) {
    throw ConfigError("perceptron input size does not match 2K");
  }
  Vector<T> joined(phi_i.size() + phi_j.size());
  joined << phi_i, phi_j;
  return p.mlp_out.apply(relu(p.mlp_hidden.apply(joined)));
}

template <typename T, typename A, typename B>
Gaussian<T> g_vi(const Eigen::MatrixBase<A>& phi_i, const Eigen::MatrixBase<B>& phi_j, const MetricParams<T>& p) {
  if (phi_i.size() != p.enc_hidden.in()) throw ConfigError("encoder input size does not match K");
  Vector<T> h = relu(p.enc_hidden.apply(phi_i - phi_j));
  Gaussian<T> out;
  out.mean = p.enc_mean.apply(h);
  out.var = p.enc_logvar.apply(h).cwiseMax(T(kLogVarMin)).cwiseMin(T(kLogVarMax)).array().exp().matrix();
  if (!out.mean.allFinite() || !out.var.allFinite()) throw NumericalError("non-finite variational relation");
  return out;
}

template <typename T, typename A, typename B>
Relation<T> relation(Backend backend, const Eigen::MatrixBase<A>& phi_i, const Eigen::MatrixBase<B>& phi_j,
                     const MetricParams<T>& p) {
  switch (backend) {
    case Backend::TwoNorm: return T(g_2norm(phi_i, phi_j));
    case Backend::Mlp: return g_mlp(phi_i, phi_j, p);
    case Backend::Variational: return g_vi(phi_i, phi_j, p);
  }
  throw ConfigError("unknown backend");
}

// Scalars and vectors add element-wise; independent Gaussians add means and
// variances.
template <typename T>
Relation<T> add(const Relation<T>& a, const Relation<T>& b) {
  if (a.index() != b.index()) throw std::logic_error("adding relations of different kinds");
  if (auto* s = std::get_if<T>(&a)) return *s + std::get<T>(b);
  if (auto* v = std::get_if<Vector<T>>(&a)) return Vector<T>(*v + std::get<Vector<T>>(b));
  const auto& ga = std::get<Gaussian<T>>(a);
  const auto& gb = std::get<Gaussian<T>>(b);
  return Gaussian<T>{ga.mean + gb.mean, ga.var + gb.var};
}

// Sum of g over consecutive node pairs of `path`, in path direction.
template <typename T>
Relation<T> path_sum(std::span<const NodeId> path, Backend backend, const Matrix<T>& embeddings,
                     const MetricParams<T>& p) {
  if (path.size() < 2) throw std::invalid_argument("path_sum needs at least one edge");
  Relation<T> total = relation(backend, embeddings.row(path[0]).transpose(), embeddings.row(path[1]).transpose(), p);
  for (std::size_t t = 1; t + 1 < path.size(); ++t) {
    total = add(total, relation(backend, embeddings.row(path[t]).transpose(),
                                embeddings.row(path[t + 1]).transpose(), p));
  }
  return total;
}

template <typename T>
Relation<T> path_sum(const Path& path, Backend backend, const Matrix<T>& embeddings, const MetricParams<T>& p) {
  return path_sum(std::span<const NodeId>(path.nodes), backend, embeddings, p);
}

// D_KL(p || q) for diagonal Gaussians.
template <typename T>
T kl_gaussian(const Gaussian<T>& p, const Gaussian<T>& q) {
  auto vp = p.var.array();
  auto vq = q.var.array();
  return T(0.5) * (vp / vq + (q.mean - p.mean).array().square() / vq - T(1) + (vq / vp).log()).sum();
}

// Squared difference for scalars/vectors, squared KL for Gaussians. With
// `symmetric`, the Gaussian case uses the averaged two-way KL.
template <typename T>
T discrepancy(const Relation<T>& r1, const Relation<T>& r2, bool symmetric = false) {
  if (r1.index() != r2.index()) throw std::logic_error("discrepancy between relations of different kinds");
  if (auto* s = std::get_if<T>(&r1)) {
    T d = *s - std::get<T>(r2);
    return d * d;
  }
  if (auto* v = std::get_if<Vector<T>>(&r1)) return (*v - std::get<Vector<T>>(r2)).squaredNorm();
  const auto& p = std::get<Gaussian<T>>(r1);
  const auto& q = std::get<Gaussian<T>>(r2);
  T kl = symmetric ? T(0.5) * (kl_gaussian(p, q) + kl_gaussian(q, p)) : kl_gaussian(p, q);
  return kl * kl;
}

// Reduces a relation to a non-negative magnitude: the scalar itself, the
// vector norm, or the norm of the Gaussian mean.
template <typename T>
T scalarize(const Relation<T>& r) {
  if (auto* s = std::get_if<T>(&r)) return *s;
  if (auto* v = std::get_if<Vector<T>>(&r)) return v->norm();
  return std::get<Gaussian<T>>(r).mean.norm();
}

// z = mean + sqrt(var) * noise
template <typename T, typename Derived>
Vector<T> reparameterize(const Gaussian<T>& rel, const Eigen::MatrixBase<Derived>& noise) {
  return rel.mean + (rel.var.array().sqrt() * noise.array()).matrix();
}

// D_KL(N(mean, diag var) || N(0, I))
template <typename T>
T kl_to_standard_normal(const Gaussian<T>& q) {
  return T(0.5) * (q.var.array() + q.mean.array().square() - T(1) - q.var.array().log()).sum();
}

// Unit-variance Gaussian decoder mean for a latent sample.
template <typename T, typename Derived>
Vector<T> decode(const Eigen::MatrixBase<Derived>& z, const MetricParams<T>& p) {
  return p.dec_out.apply(relu(p.dec_hidden.apply(z)));
}

// log N(target; mean, I)
template <typename A, typename B>
typename A::Scalar unit_gaussian_log_density(const Eigen::MatrixBase<A>& target, const Eigen::MatrixBase<B>& mean) {
  using T = typename A::Scalar;
  const T d = static_cast<T>(target.size());
  return T(-0.5) * (target - mean).squaredNorm() - T(0.5) * d * std::log(T(2) * std::numbers::pi_v<T>);
}

struct ElboTerms {
  double reconstruction = 0.0;  // mean over samples of log p(phi_i, phi_j | z)
  double kl = 0.0;              // D_KL(q || N(0, I))
  double value() const { return reconstruction - kl; }
};

// Monte-Carlo ELBO for one node pair. `noise` holds one standard-normal draw
// per row; its row count is the sample count L.
template <typename T, typename A, typename B>
ElboTerms elbo(const Eigen::MatrixBase<A>& phi_i, const Eigen::MatrixBase<B>& phi_j, const MetricParams<T>& p,
               const Matrix<T>& noise) {
  if (noise.rows() < 1) throw std::invalid_argument("elbo needs at least one sample");
  Gaussian<T> q = g_vi(phi_i, phi_j, p);
  Vector<T> target(phi_i.size() + phi_j.size());
  target << phi_i, phi_j;
  ElboTerms out;
  for (Eigen::Index l = 0; l < noise.rows(); ++l) {
    Vector<T> z = reparameterize(q, noise.row(l).transpose());
    out.reconstruction += static_cast<double>(unit_gaussian_log_density(target, decode(z, p)));
  }
  out.reconstruction /= static_cast<double>(noise.rows());
  out.kl = static_cast<double>(kl_to_standard_normal(q));
  return out;
}

}  // namespace nemr
