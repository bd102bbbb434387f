// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nhg/tensor.hpp"

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace nhg {

// Reverse-mode differentiation over the fixed set of primitives the models
// are built from. Nodes are appended in evaluation order; backward() walks
// them in reverse, so gradient accumulation order is deterministic.
class Tape {
 public:
  struct Var {
    std::uint32_t id = UINT32_MAX;
    bool valid() const { return id != UINT32_MAX; }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Parameter leaf. Gradients are added into `grad` on backward(); a null
  // grad makes the leaf a constant (frozen parameter).
  Var leaf(const Tensor& value, Tensor* grad);
  Var constant(Mat value);
  // Row `row` of `table` as a column vector; gradient scatters into that row.
  Var row(const Tensor& table, Tensor* grad, int row);

  Var matmul(Var a, Var b);
  // a^T * b
  Var matmul_tn(Var a, Var b);
  Var add(Var a, Var b);
  Var add(Var a, Var b, Var c);
  // m + col, col broadcast over every column of m.
  Var add_broadcast(Var m, Var col);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var one_minus(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var concat_rows(Var a, Var b);
  Var hstack(std::span<const Var> columns);
  Var column(Var m, int j);
  Var softmax(Var col);
  // Scalar -log softmax(logits)[target].
  Var cross_entropy(Var logits, int target);
  Var sum(std::span<const Var> scalars);
  Var sum_all(Var a);
  Var scale(Var a, double factor);

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const;
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and propagates. Throws std::invalid_argument
  // when `loss` is not 1x1.
  void backward(Var loss);

 private:
  enum class Op : std::uint8_t {
    Leaf, Const, Row, Matmul, MatmulTN, Add, Add3, AddBroadcast, Sub, Mul, OneMinus,
    Sigmoid, Tanh, ConcatRows, HStack, Column, Softmax, CrossEntropy, Sum, SumAll, Scale
  };

  struct Node {
    explicit Node(Op o) : op(o) {}
    Op op;
    bool needs_grad = false;
    std::uint32_t a = UINT32_MAX, b = UINT32_MAX, c = UINT32_MAX;
    int index = 0;
    double factor = 0.0;
    Tensor* grad_sink = nullptr;
    std::vector<std::uint32_t> inputs;
    Mat value;
    Mat grad;
    Mat aux;
  };

  Var push(Node node);
  bool needs(std::uint32_t id) const { return nodes_[id].needs_grad; }
  void accumulate(std::uint32_t id, const Mat& g);
  template <typename Expr>
  void accumulate_expr(std::uint32_t id, const Expr& g);

  std::vector<Node> nodes_;
};

}  // namespace nhg
