// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "nhg/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nhg {
namespace {

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string("tape ") + op + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

}  // namespace

Tape::Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tape::Var Tape::leaf(const Tensor& value, Tensor* grad) {
  Node n(Op::Leaf);
  n.value = value.matrix();
  n.grad_sink = grad;
  n.needs_grad = grad != nullptr;
  return push(std::move(n));
}

Tape::Var Tape::constant(Mat value) {
  Node n(Op::Const);
  n.value = std::move(value);
  return push(std::move(n));
}

Tape::Var Tape::row(const Tensor& table, Tensor* grad, int row) {
  if (table.rank() != 2 || row < 0 || static_cast<std::size_t>(row) >= table.rows()) {
    throw std::out_of_range("tape row: id " + std::to_string(row) + " outside table " +
                            table.shape_string());
  }
  Node n(Op::Row);
  n.value = table.matrix().row(row).transpose();
  n.index = row;
  n.grad_sink = grad;
  n.needs_grad = grad != nullptr;
  return push(std::move(n));
}

Tape::Var Tape::matmul(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.cols() != B.rows()) throw std::invalid_argument("tape matmul: inner dimension mismatch");
  Node n(Op::Matmul);
  n.a = a.id;
  n.b = b.id;
  n.value.noalias() = A * B;
  n.needs_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Tape::Var Tape::matmul_tn(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.rows() != B.rows()) throw std::invalid_argument("tape matmul_tn: inner dimension mismatch");
  Node n(Op::MatmulTN);
  n.a = a.id;
  n.b = b.id;
  n.value.noalias() = A.transpose() * B;
  n.needs_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Tape::Var Tape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Node n(Op::Add);
  n.a = a.id;
  n.b = b.id;
  n.value = value(a) + value(b);
  n.needs_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Tape::Var Tape::add(Var a, Var b, Var c) {
  require_same_shape(value(a), value(b), "add");
  require_same_shape(value(a), value(c), "add");
  Node n(Op::Add3);
  n.a = a.id;
  n.b = b.id;
  n.c = c.id;
  n.value = value(a) + value(b) + value(c);
  n.needs_grad = needs(a.id) || needs(b.id) || needs(c.id);
  return push(std::move(n));
}

Tape::Var Tape::add_broadcast(Var m, Var col) {
  const Mat& M = value(m);
  const Mat& C = value(col);
  if (C.cols() != 1 || C.rows() != M.rows()) {
    throw std::invalid_argument("tape add_broadcast: column does not match rows");
  }
  Node n(Op::AddBroadcast);
  n.a = m.id;
  n.b = col.id;
  n.value = M.colwise() + C.col(0);
  n.needs_grad = needs(m.id) || needs(col.id);
  return push(std::move(n));
}

Tape::Var Tape::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Node n(Op::Sub);
  n.a = a.id;
  n.b = b.id;
  n.value = value(a) - value(b);
  n.needs_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Tape::Var Tape::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Node n(Op::Mul);
  n.a = a.id;
  n.b = b.id;
  n.value = value(a).cwiseProduct(value(b));
  n.needs_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Tape::Var Tape::one_minus(Var a) {
  Node n(Op::OneMinus);
  n.a = a.id;
  n.value = 1.0 - value(a).array();
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Tape::Var Tape::sigmoid(Var a) {
  Node n(Op::Sigmoid);
  n.a = a.id;
  n.value = value(a).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Tape::Var Tape::tanh(Var a) {
  Node n(Op::Tanh);
  n.a = a.id;
  n.value = value(a).array().tanh();
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Tape::Var Tape::concat_rows(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.cols() != B.cols()) throw std::invalid_argument("tape concat_rows: column mismatch");
  Node n(Op::ConcatRows);
  n.a = a.id;
  n.b = b.id;
  n.value.resize(A.rows() + B.rows(), A.cols());
  n.value << A, B;
  n.needs_grad = needs(a.id) || needs(b.id);
  return push(std::move(n));
}

Tape::Var Tape::hstack(std::span<const Var> columns) {
  if (columns.empty()) throw std::invalid_argument("tape hstack: no columns");
  const auto rows = value(columns[0]).rows();
  Node n(Op::HStack);
  n.value.resize(rows, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const Mat& c = value(columns[j]);
    if (c.rows() != rows || c.cols() != 1) throw std::invalid_argument("tape hstack: bad column");
    n.value.col(static_cast<Eigen::Index>(j)) = c.col(0);
    n.inputs.push_back(columns[j].id);
    n.needs_grad = n.needs_grad || needs(columns[j].id);
  }
  return push(std::move(n));
}

Tape::Var Tape::column(Var m, int j) {
  const Mat& M = value(m);
  if (j < 0 || j >= M.cols()) throw std::out_of_range("tape column: index out of range");
  Node n(Op::Column);
  n.a = m.id;
  n.index = j;
  n.value = M.col(j);
  n.needs_grad = needs(m.id);
  return push(std::move(n));
}

Tape::Var Tape::softmax(Var col) {
  const Mat& x = value(col);
  if (x.cols() != 1 || x.rows() == 0) throw std::invalid_argument("tape softmax: need a column");
  Node n(Op::Softmax);
  n.a = col.id;
  Mat e = (x.array() - x.maxCoeff()).exp();
  n.value = e / e.sum();
  n.needs_grad = needs(col.id);
  return push(std::move(n));
}

Tape::Var Tape::cross_entropy(Var logits, int target) {
  const Mat& x = value(logits);
  if (x.cols() != 1) throw std::invalid_argument("tape cross_entropy: logits must be a column");
  if (target < 0 || target >= x.rows()) {
    throw std::out_of_range("cross_entropy: target id " + std::to_string(target) +
                            " out of range for " + std::to_string(x.rows()) + " classes");
  }
  Node n(Op::CrossEntropy);
  n.a = logits.id;
  n.index = target;
  const double m = x.maxCoeff();
  Mat e = (x.array() - m).exp();
  const double z = e.sum();
  n.aux = e / z;
  n.value = Mat::Constant(1, 1, -(x(target, 0) - m - std::log(z)));
  n.needs_grad = needs(logits.id);
  return push(std::move(n));
}

Tape::Var Tape::sum(std::span<const Var> scalars) {
  if (scalars.empty()) throw std::invalid_argument("tape sum: empty");
  Node n(Op::Sum);
  double s = 0.0;
  for (Var v : scalars) {
    if (value(v).size() != 1) throw std::invalid_argument("tape sum: non-scalar input");
    s += value(v)(0, 0);
    n.inputs.push_back(v.id);
    n.needs_grad = n.needs_grad || needs(v.id);
  }
  n.value = Mat::Constant(1, 1, s);
  return push(std::move(n));
}

Tape::Var Tape::sum_all(Var a) {
  Node n(Op::SumAll);
  n.a = a.id;
  n.value = Mat::Constant(1, 1, value(a).sum());
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

Tape::Var Tape::scale(Var a, double factor) {
  Node n(Op::Scale);
  n.a = a.id;
  n.factor = factor;
  n.value = value(a) * factor;
  n.needs_grad = needs(a.id);
  return push(std::move(n));
}

double Tape::scalar(Var v) const {
  const Mat& m = value(v);
  if (m.size() != 1) throw std::invalid_argument("tape scalar: value is not 1x1");
  return m(0, 0);
}

void Tape::accumulate(std::uint32_t id, const Mat& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

template <typename Expr>
void Tape::accumulate_expr(std::uint32_t id, const Expr& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var loss) {
  if (!loss.valid() || loss.id >= nodes_.size()) throw std::invalid_argument("backward: bad var");
  if (value(loss).rows() != 1 || value(loss).cols() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar");
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[loss.id].needs_grad) return;
  nodes_[loss.id].grad = Mat::Ones(1, 1);

  for (std::uint32_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    const Mat& g = n.grad;
    switch (n.op) {
      case Op::Leaf:
        n.grad_sink->matrix() += g;
        break;
      case Op::Row:
        n.grad_sink->matrix().row(n.index) += g.col(0).transpose();
        break;
      case Op::Const:
        break;
      case Op::Matmul:
        if (needs(n.a)) accumulate_expr(n.a, g * nodes_[n.b].value.transpose());
        if (needs(n.b)) accumulate_expr(n.b, nodes_[n.a].value.transpose() * g);
        break;
      case Op::MatmulTN:
        // value = A^T B: dA = B g^T, dB = A g
        if (needs(n.a)) accumulate_expr(n.a, nodes_[n.b].value * g.transpose());
        if (needs(n.b)) accumulate_expr(n.b, nodes_[n.a].value * g);
        break;
      case Op::Add:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::Add3:
        accumulate(n.a, g);
        accumulate(n.b, g);
        accumulate(n.c, g);
        break;
      case Op::AddBroadcast:
        accumulate(n.a, g);
        if (needs(n.b)) accumulate_expr(n.b, g.rowwise().sum());
        break;
      case Op::Sub:
        accumulate(n.a, g);
        if (needs(n.b)) accumulate_expr(n.b, -g);
        break;
      case Op::Mul:
        if (needs(n.a)) accumulate_expr(n.a, g.cwiseProduct(nodes_[n.b].value));
        if (needs(n.b)) accumulate_expr(n.b, g.cwiseProduct(nodes_[n.a].value));
        break;
      case Op::OneMinus:
        accumulate_expr(n.a, -g);
        break;
      case Op::Sigmoid:
        accumulate_expr(n.a, (g.array() * n.value.array() * (1.0 - n.value.array())).matrix());
        break;
      case Op::Tanh:
        accumulate_expr(n.a, (g.array() * (1.0 - n.value.array().square())).matrix());
        break;
      case Op::ConcatRows: {
        const auto ra = nodes_[n.a].value.rows();
        if (needs(n.a)) accumulate_expr(n.a, g.topRows(ra));
        if (needs(n.b)) accumulate_expr(n.b, g.bottomRows(g.rows() - ra));
        break;
      }
      case Op::HStack:
        for (std::size_t j = 0; j < n.inputs.size(); ++j) {
          if (needs(n.inputs[j])) accumulate_expr(n.inputs[j], g.col(static_cast<Eigen::Index>(j)));
        }
        break;
      case Op::Column: {
        Node& src = nodes_[n.a];
        if (src.grad.size() == 0) src.grad = Mat::Zero(src.value.rows(), src.value.cols());
        src.grad.col(n.index) += g.col(0);
        break;
      }
      case Op::Softmax: {
        // dx = s * (g - <g, s>)
        const double dot = g.col(0).dot(n.value.col(0));
        accumulate_expr(n.a, (n.value.array() * (g.array() - dot)).matrix());
        break;
      }
      case Op::CrossEntropy: {
        Mat d = n.aux * g(0, 0);
        d(n.index, 0) -= g(0, 0);
        accumulate(n.a, d);
        break;
      }
      case Op::Sum:
        for (std::uint32_t in : n.inputs) accumulate(in, g);
        break;
      case Op::SumAll: {
        const Mat& src = nodes_[n.a].value;
        accumulate_expr(n.a, Mat::Constant(src.rows(), src.cols(), g(0, 0)));
        break;
      }
      case Op::Scale:
        accumulate_expr(n.a, g * n.factor);
        break;
    }
  }
}

}  // namespace nhg
