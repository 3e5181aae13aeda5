#include "comve/nn/tape.hpp"

#include <cmath>
#include <limits>

#include "comve/error.hpp"

namespace comve::nn {
namespace {

constexpr const char* kModule = "nn";

void require(bool ok, const char* what) {
  if (!ok) throw ArgumentError(kModule, what);
}

}  // namespace

Parameter::Parameter(std::string name_, Matrix init, bool decay_)
    : name(std::move(name_)), value(std::move(init)), decay(decay_) {
  zero_grad();
}

Var Tape::push(Matrix value, bool requires_grad, Backward backward) {
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad,
                        requires_grad ? std::move(backward) : Backward()});
  return Var{nodes_.size() - 1};
}

Matrix& Tape::grad_of(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, {}); }

Var Tape::parameter(Parameter& p) {
  Parameter* target = &p;
  return push(p.value, true, [target](Tape& t, std::size_t self) {
    if (target->grad.size() == 0) target->zero_grad();
    target->grad += t.nodes_[self].grad;
  });
}

Var Tape::embedding(Parameter& table, std::span<const int> ids) {
  Matrix out(static_cast<Index>(ids.size()), table.value.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    require(ids[i] >= 0 && ids[i] < table.value.rows(), "embedding id out of range");
    out.row(static_cast<Index>(i)) = table.value.row(ids[i]);
  }
  Parameter* target = &table;
  std::vector<int> rows(ids.begin(), ids.end());
  return push(std::move(out), true, [target, rows = std::move(rows)](Tape& t, std::size_t self) {
    if (target->grad.size() == 0) target->zero_grad();
    const Matrix& g = t.nodes_[self].grad;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      target->grad.row(rows[i]) += g.row(static_cast<Index>(i));
    }
  });
}

Var Tape::add(Var a, Var b) {
  require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
          "add: shape mismatch");
  const bool rg = requires_grad(a) || requires_grad(b);
  return push(value(a) + value(b), rg, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.requires_grad(a)) t.grad_of(a.id) += g;
    if (t.requires_grad(b)) t.grad_of(b.id) += g;
  });
}

Var Tape::add_row(Var a, Var row) {
  require(value(row).rows() == 1 && value(row).cols() == value(a).cols(),
          "add_row: shape mismatch");
  Matrix out = value(a).rowwise() + value(row).row(0);
  const bool rg = requires_grad(a) || requires_grad(row);
  return push(std::move(out), rg, [a, row](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.requires_grad(a)) t.grad_of(a.id) += g;
    if (t.requires_grad(row)) t.grad_of(row.id) += g.colwise().sum();
  });
}

Var Tape::matmul(Var a, Var b) {
  require(value(a).cols() == value(b).rows(), "matmul: inner dimension mismatch");
  const bool rg = requires_grad(a) || requires_grad(b);
  return push(value(a) * value(b), rg, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.requires_grad(a)) t.grad_of(a.id).noalias() += g * t.value(b).transpose();
    if (t.requires_grad(b)) t.grad_of(b.id).noalias() += t.value(a).transpose() * g;
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  require(value(a).cols() == value(b).cols(), "matmul_nt: inner dimension mismatch");
  const bool rg = requires_grad(a) || requires_grad(b);
  return push(value(a) * value(b).transpose(), rg, [a, b](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    if (t.requires_grad(a)) t.grad_of(a.id).noalias() += g * t.value(b);
    if (t.requires_grad(b)) t.grad_of(b.id).noalias() += g.transpose() * t.value(a);
  });
}

Var Tape::scale(Var a, double s) {
  return push(value(a) * s, requires_grad(a), [a, s](Tape& t, std::size_t self) {
    t.grad_of(a.id) += t.nodes_[self].grad * s;
  });
}

Var Tape::gelu(Var a) {
  constexpr double k = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double c = 0.044715;
  const Matrix& x = value(a);
  Matrix out = x.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(k * (v + c * v * v * v)));
  });
  return push(std::move(out), requires_grad(a), [a](Tape& t, std::size_t self) {
    const Matrix& x = t.value(a);
    const Matrix& g = t.nodes_[self].grad;
    Matrix d = x.unaryExpr([](double v) {
      const double u = k * (v + c * v * v * v);
      const double th = std::tanh(u);
      return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * k * (1.0 + 3.0 * c * v * v);
    });
    t.grad_of(a.id) += g.cwiseProduct(d);
  });
}

Var Tape::tanh(Var a) {
  Matrix out = value(a).array().tanh().matrix();
  return push(std::move(out), requires_grad(a), [a](Tape& t, std::size_t self) {
    const Matrix& y = t.nodes_[self].value;
    const Matrix& g = t.nodes_[self].grad;
    t.grad_of(a.id) += (g.array() * (1.0 - y.array().square())).matrix();
  });
}

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Matrix& in = value(x);
  const Index n = in.cols();
  require(value(gamma).rows() == 1 && value(gamma).cols() == n, "layer_norm: gamma shape");
  require(value(beta).rows() == 1 && value(beta).cols() == n, "layer_norm: beta shape");
  Matrix xhat(in.rows(), n);
  Eigen::VectorXd inv_std(in.rows());
  for (Index r = 0; r < in.rows(); ++r) {
    const double mean = in.row(r).mean();
    const double var = (in.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (in.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * value(gamma).row(0).array()).matrix();
  out.rowwise() += value(beta).row(0);
  const bool rg = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
  return push(std::move(out), rg,
              [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                  Tape& t, std::size_t self) {
                const Matrix& g = t.nodes_[self].grad;
                const Index n = g.cols();
                if (t.requires_grad(gamma)) {
                  t.grad_of(gamma.id) += g.cwiseProduct(xhat).colwise().sum();
                }
                if (t.requires_grad(beta)) t.grad_of(beta.id) += g.colwise().sum();
                if (t.requires_grad(x)) {
                  Matrix dxhat = (g.array().rowwise() * t.value(gamma).row(0).array()).matrix();
                  Matrix& dx = t.grad_of(x.id);
                  for (Index r = 0; r < g.rows(); ++r) {
                    const double s1 = dxhat.row(r).sum();
                    const double s2 = dxhat.row(r).dot(xhat.row(r));
                    dx.row(r).array() += (inv_std(r) / static_cast<double>(n)) *
                                         (static_cast<double>(n) * dxhat.row(r).array() - s1 -
                                          xhat.row(r).array() * s2);
                  }
                }
              });
}

Var Tape::softmax_rows(Var x, std::span<const int> key_mask) {
  const Matrix& in = value(x);
  require(key_mask.empty() || static_cast<Index>(key_mask.size()) == in.cols(),
          "softmax_rows: mask length");
  Matrix out(in.rows(), in.cols());
  for (Index r = 0; r < in.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    Index live_count = 0;
    for (Index c = 0; c < in.cols(); ++c) {
      if (key_mask.empty() || key_mask[static_cast<std::size_t>(c)]) {
        mx = std::max(mx, in(r, c));
        ++live_count;
      }
    }
    require(live_count > 0, "softmax_rows: every column masked");
    double sum = 0.0;
    for (Index c = 0; c < in.cols(); ++c) {
      const bool live = key_mask.empty() || key_mask[static_cast<std::size_t>(c)];
      out(r, c) = live ? std::exp(in(r, c) - mx) : 0.0;
      sum += out(r, c);
    }
    out.row(r) /= sum;
  }
  return push(std::move(out), requires_grad(x), [x](Tape& t, std::size_t self) {
    const Matrix& y = t.nodes_[self].value;
    const Matrix& g = t.nodes_[self].grad;
    Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
    Matrix dx = y.cwiseProduct(g);
    dx -= (y.array().colwise() * dots.array()).matrix();
    t.grad_of(x.id) += dx;
  });
}

Var Tape::dropout(Var x, double rate, std::mt19937_64& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0, 1)");
  if (rate == 0.0) return x;
  const Matrix& in = value(x);
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix mask(in.rows(), in.cols());
  const double scale = 1.0 / (1.0 - rate);
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? scale : 0.0;
  Matrix out = in.cwiseProduct(mask);
  return push(std::move(out), requires_grad(x), [x, mask = std::move(mask)](Tape& t,
                                                                           std::size_t self) {
    t.grad_of(x.id) += t.nodes_[self].grad.cwiseProduct(mask);
  });
}

Var Tape::slice_rows(Var x, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= value(x).rows(), "slice_rows: range");
  return push(value(x).middleRows(start, count), requires_grad(x),
              [x, start, count](Tape& t, std::size_t self) {
                t.grad_of(x.id).middleRows(start, count) += t.nodes_[self].grad;
              });
}

Var Tape::slice_cols(Var x, Index start, Index count) {
  require(start >= 0 && count >= 0 && start + count <= value(x).cols(), "slice_cols: range");
  return push(value(x).middleCols(start, count), requires_grad(x),
              [x, start, count](Tape& t, std::size_t self) {
                t.grad_of(x.id).middleCols(start, count) += t.nodes_[self].grad;
              });
}

Var Tape::concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const Index rows = value(parts.front()).rows();
  Index cols = 0;
  bool rg = false;
  for (Var p : parts) {
    require(value(p).rows() == rows, "concat_cols: row mismatch");
    cols += value(p).cols();
    rg = rg || requires_grad(p);
  }
  Matrix out(rows, cols);
  Index offset = 0;
  for (Var p : parts) {
    out.middleCols(offset, value(p).cols()) = value(p);
    offset += value(p).cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return push(std::move(out), rg, [inputs = std::move(inputs)](Tape& t, std::size_t self) {
    const Matrix& g = t.nodes_[self].grad;
    Index offset = 0;
    for (Var p : inputs) {
      const Index w = t.value(p).cols();
      if (t.requires_grad(p)) t.grad_of(p.id) += g.middleCols(offset, w);
      offset += w;
    }
  });
}

Var Tape::cross_entropy(Var logits, std::span<const int> targets) {
  const Matrix& z = value(logits);
  require(static_cast<Index>(targets.size()) == z.rows(), "cross_entropy: target count");
  Matrix probs = Matrix::Zero(z.rows(), z.cols());
  double total = 0.0;
  int counted = 0;
  for (Index r = 0; r < z.rows(); ++r) {
    const int target = targets[static_cast<std::size_t>(r)];
    if (target == kIgnoreTarget) continue;
    require(target >= 0 && target < z.cols(), "cross_entropy: target out of range");
    const double mx = z.row(r).maxCoeff();
    const double lse = mx + std::log((z.row(r).array() - mx).exp().sum());
    total += lse - z(r, target);
    probs.row(r) = (z.row(r).array() - lse).exp();
    ++counted;
  }
  if (counted == 0) return constant(Matrix::Zero(1, 1));
  Matrix out(1, 1);
  out(0, 0) = total / counted;
  std::vector<int> tgt(targets.begin(), targets.end());
  return push(std::move(out), requires_grad(logits),
              [logits, tgt = std::move(tgt), probs = std::move(probs), counted](Tape& t,
                                                                                std::size_t self) {
                const double g = t.nodes_[self].grad(0, 0) / counted;
                Matrix& dz = t.grad_of(logits.id);
                for (std::size_t r = 0; r < tgt.size(); ++r) {
                  if (tgt[r] == kIgnoreTarget) continue;
                  const Index row = static_cast<Index>(r);
                  dz.row(row) += g * probs.row(row);
                  dz(row, tgt[r]) -= g;
                }
              });
}

void Tape::backward(Var root) {
  require(value(root).size() == 1, "backward: root must be a scalar");
  if (!requires_grad(root)) return;
  grad_of(root.id).setOnes();
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.grad.size() != 0 && n.backward) n.backward(*this, i);
  }
}

}  // namespace comve::nn
