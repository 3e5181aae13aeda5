#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

// Minimal reverse-mode automatic differentiation over dense double matrices.
// A Tape records one forward computation; backward() walks it in reverse and
// accumulates gradients into the Parameters that were read.
namespace comve::nn {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr int kIgnoreTarget = -100;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool decay = true;  // subject to weight decay

  Parameter() = default;
  Parameter(std::string name_, Matrix init, bool decay_ = true);

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

struct Var {
  std::size_t id = 0;
};

class Tape {
 public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(Parameter& p);
  // Rows of `table` selected by ids; backward scatters into table.grad.
  Var embedding(Parameter& table, std::span<const int> ids);

  Var add(Var a, Var b);
  Var add_row(Var a, Var row);  // broadcast a 1xN row over every row of a
  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var scale(Var a, double s);
  Var gelu(Var a);
  Var tanh(Var a);
  Var layer_norm(Var x, Var gamma, Var beta, double eps);
  // Row-wise softmax. A non-empty key_mask zeroes probability on columns
  // whose mask entry is 0.
  Var softmax_rows(Var x, std::span<const int> key_mask = {});
  Var dropout(Var x, double rate, std::mt19937_64& rng);
  Var slice_rows(Var x, Index start, Index count);
  Var slice_cols(Var x, Index start, Index count);
  Var concat_cols(std::span<const Var> parts);
  // Mean cross-entropy of row-wise softmax(logits) against targets; rows with
  // target kIgnoreTarget are skipped. Returns a 1x1 node (0 with no targets).
  Var cross_entropy(Var logits, std::span<const int> targets);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }
  double scalar(Var v) const { return nodes_[v.id].value(0, 0); }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  void backward(Var root);

 private:
  using Backward = std::function<void(Tape&, std::size_t)>;

  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Matrix value, bool requires_grad, Backward backward);
  Matrix& grad_of(std::size_t id);

  std::vector<Node> nodes_;
};

}  // namespace comve::nn
