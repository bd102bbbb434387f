// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nhg/param_store.hpp"
#include "nhg/tape.hpp"

#include <string>

namespace nhg {

// Binds ParamStore tensors to tape leaves. A tensor whose group is absent
// from `grads` (or when grads is null) is bound as a constant.
class Binder {
 public:
  struct TableRef {
    const Tensor* value = nullptr;
    Tensor* grad = nullptr;
  };

  Binder(Tape& tape, const ParamStore& params, ParamStore* grads)
      : tape_(tape), params_(params), grads_(grads) {}

  Tape& tape() { return tape_; }
  const ParamStore& params() const { return params_; }

  Tape::Var leaf(const std::string& group, const std::string& tensor);
  TableRef table(const std::string& group, const std::string& tensor);
  Tape::Var row(const TableRef& table, int id) { return tape_.row(*table.value, table.grad, id); }

 private:
  Tape& tape_;
  const ParamStore& params_;
  ParamStore* grads_;
};

// Recurrent half of a GRU: U matrices and biases. Input projections are
// supplied per step so that callers can split input weights into blocks.
struct GruRecurrentVars {
  Tape::Var U_z, U_r, U_h, b_z, b_r, b_h;
};

GruRecurrentVars bind_gru_recurrent(Binder& binder, const std::string& group);

// One GRU step given the input projections W_* x (without bias):
//   z = sig(pz + U_z h + b_z), r = sig(pr + U_r h + b_r)
//   c = tanh(ph + U_h (r * h) + b_h), h' = (1 - z) * h + z * c
Tape::Var gru_step(Tape& tape, const GruRecurrentVars& p, Tape::Var proj_z, Tape::Var proj_r,
                   Tape::Var proj_h, Tape::Var h_prev);

}  // namespace nhg
