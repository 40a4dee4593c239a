#include "nemr/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace nemr::ad {

Var Tape::variable(Mat value) {
  nodes_.push_back({std::move(value), Mat(), true, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Mat value) {
  nodes_.push_back({std::move(value), Mat(), false, nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Mat value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (Var in : inputs) needs = needs || nodes_[in.id()].needs_grad;
  nodes_.push_back({std::move(value), Mat(), needs, needs ? std::move(backward) : nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Mat Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate_rows(Var v, const std::vector<int>& index, const Mat& g) {
  Node& n = nodes_[v.id()];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  for (std::size_t k = 0; k < index.size(); ++k) n.grad.row(index[k]) += g.row(static_cast<Eigen::Index>(k));
}

void Tape::backward(Var output) {
  if (value(output).size() != 1) throw std::invalid_argument("backward() needs a 1x1 output");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[output.id()].grad = Mat::Ones(1, 1);
  for (int id = output.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.size() == 0) continue;
    // The closure may touch other nodes; keep a copy of the gradient alive.
    Mat g = n.grad;
    n.backward(*this, g);
  }
}

namespace {

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var operator+(Var a, Var b) {
  require_same_shape(a, b, "add");
  return a.tape().record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var operator-(Var a, Var b) {
  require_same_shape(a, b, "sub");
  return a.tape().record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var operator-(Var a) {
  return a.tape().record(-a.value(), {a}, [a](Tape& t, const Mat& g) { t.accumulate(a, -g); });
}

Var operator*(double s, Var a) {
  return a.tape().record(s * a.value(), {a}, [a, s](Tape& t, const Mat& g) { t.accumulate(a, s * g); });
}

Var add_scalar(Var a, double s) {
  return a.tape().record((a.value().array() + s).matrix(), {a}, [a](Tape& t, const Mat& g) { t.accumulate(a, g); });
}

Var cwise_mul(Var a, Var b) {
  require_same_shape(a, b, "cwise_mul");
  return a.tape().record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g.cwiseProduct(b.value()));
    t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var cwise_div(Var a, Var b) {
  require_same_shape(a, b, "cwise_div");
  return a.tape().record(a.value().cwiseQuotient(b.value()), {a, b}, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g.cwiseQuotient(b.value()));
    t.accumulate(b, (-g.array() * a.value().array() / b.value().array().square()).matrix());
  });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  return a.tape().record(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Mat& g) {
    if (t.needs_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.needs_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Var add_rowwise(Var x, Var row) {
  if (row.rows() != 1 || row.cols() != x.cols()) throw std::invalid_argument("add_rowwise: bias shape");
  Mat out = x.value();
  out.rowwise() += row.value().row(0);
  return x.tape().record(std::move(out), {x, row}, [x, row](Tape& t, const Mat& g) {
    t.accumulate(x, g);
    t.accumulate(row, g.colwise().sum());
  });
}

Var relu(Var a) {
  return a.tape().record(a.value().cwiseMax(0.0), {a}, [a](Tape& t, const Mat& g) {
    t.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
  });
}

Var exp(Var a) {
  Mat out = a.value().array().exp().matrix();
  return a.tape().record(out, {a}, [a, y = out](Tape& t, const Mat& g) { t.accumulate(a, g.cwiseProduct(y)); });
}

Var log(Var a) {
  return a.tape().record(a.value().array().log().matrix(), {a}, [a](Tape& t, const Mat& g) {
    t.accumulate(a, g.cwiseQuotient(a.value()));
  });
}

Var square(Var a) {
  return a.tape().record(a.value().array().square().matrix(), {a}, [a](Tape& t, const Mat& g) {
    t.accumulate(a, 2.0 * g.cwiseProduct(a.value()));
  });
}

Var clamp(Var a, double lo, double hi) {
  return a.tape().record(a.value().cwiseMax(lo).cwiseMin(hi), {a}, [a, lo, hi](Tape& t, const Mat& g) {
    auto inside = (a.value().array() > lo) && (a.value().array() < hi);
    t.accumulate(a, inside.select(g, 0.0));
  });
}

Var gather_rows(Var x, std::vector<int> index) {
  Mat out(static_cast<Eigen::Index>(index.size()), x.cols());
  for (std::size_t k = 0; k < index.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = x.value().row(index[k]);
  return x.tape().record(std::move(out), {x}, [x, index = std::move(index)](Tape& t, const Mat& g) {
    t.accumulate_rows(x, index, g);
  });
}

Var hcat(Var a, Var b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("hcat: row counts differ");
  Mat out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const Eigen::Index ca = a.cols(), cb = b.cols();
  return a.tape().record(std::move(out), {a, b}, [a, b, ca, cb](Tape& t, const Mat& g) {
    t.accumulate(a, g.leftCols(ca));
    t.accumulate(b, g.rightCols(cb));
  });
}

Var row_sum(Var a) {
  return a.tape().record(a.value().rowwise().sum(), {a}, [a](Tape& t, const Mat& g) {
    t.accumulate(a, g.replicate(1, a.cols()));
  });
}

Var row_norm(Var a) {
  Mat norms = a.value().rowwise().norm();
  return a.tape().record(norms, {a}, [a, norms](Tape& t, const Mat& g) {
    Mat scale = Mat::Zero(norms.rows(), 1);
    for (Eigen::Index r = 0; r < norms.rows(); ++r) {
      if (norms(r, 0) > 0.0) scale(r, 0) = g(r, 0) / norms(r, 0);
    }
    t.accumulate(a, (a.value().array().colwise() * scale.col(0).array()).matrix());
  });
}

Var spmm(const SparseRows& s, Var x) {
  if (s.cols() != x.rows()) throw std::invalid_argument("spmm: inner dimensions differ");
  return x.tape().record(s * x.value(), {x}, [x, st = SparseRows(s.transpose())](Tape& t, const Mat& g) {
    t.accumulate(x, st * g);
  });
}

Var sum(Var a) {
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Mat& g) {
    t.accumulate(a, Mat::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean of an empty matrix");
  return (1.0 / n) * sum(a);
}

}  // namespace nemr::ad
