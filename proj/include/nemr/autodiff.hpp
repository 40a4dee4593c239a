#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Tape records every operation as it is evaluated. Each recorded node keeps
// its value, a lazily allocated gradient, and a closure that pushes the
// node's gradient back into its inputs. backward() walks the tape once in
// reverse. Nodes created from constants never receive gradients.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <functional>
#include <vector>

namespace nemr::ad {

using Mat = Eigen::MatrixXd;
using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

class Tape;

// Lightweight handle to a node on a Tape.
class Var {
 public:
  Var() = default;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Mat& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Trainable leaf; its gradient is available after backward().
  Var variable(Mat value);
  Var constant(Mat value);

  // Records an op result. `inputs` decide whether the node needs a gradient.
  Var record(Mat value, std::initializer_list<Var> inputs, Backward backward);

  const Mat& value(Var v) const { return nodes_[v.id()].value; }
  bool needs_grad(Var v) const { return nodes_[v.id()].needs_grad; }
  // Zero matrix of the right shape when nothing flowed into v.
  Mat grad(Var v) const;

  // Adds `g` into v's gradient accumulator (no-op for constants).
  template <typename Derived>
  void accumulate(Var v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.id()];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }
  // Scatter-add of rows: grad(v).row(index[k]) += g.row(k).
  void accumulate_rows(Var v, const std::vector<int>& index, const Mat& g);

  // Reverse sweep from a 1x1 output.
  void backward(Var output);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

inline const Mat& Var::value() const { return tape_->value(*this); }

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator-(Var a);
Var operator*(double s, Var a);
Var add_scalar(Var a, double s);

Var cwise_mul(Var a, Var b);
Var cwise_div(Var a, Var b);
Var matmul(Var a, Var b);
// x (n x m) plus a 1 x m row broadcast to every row.
Var add_rowwise(Var x, Var row);

Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var clamp(Var a, double lo, double hi);

Var gather_rows(Var x, std::vector<int> index);
Var hcat(Var a, Var b);
Var row_sum(Var a);
// Euclidean norm of each row; gradient 0 on zero rows.
Var row_norm(Var a);
// s * x for a fixed sparse s.
Var spmm(const SparseRows& s, Var x);

Var sum(Var a);
Var mean(Var a);

}  // namespace nemr::ad
