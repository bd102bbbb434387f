// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "nhg/layers.hpp"

namespace nhg {

Tape::Var Binder::leaf(const std::string& group, const std::string& tensor) {
  Tensor* grad = grads_ == nullptr ? nullptr : grads_->find(group, tensor);
  return tape_.leaf(params_.at(group, tensor), grad);
}

Binder::TableRef Binder::table(const std::string& group, const std::string& tensor) {
  Tensor* grad = grads_ == nullptr ? nullptr : grads_->find(group, tensor);
  return TableRef{&params_.at(group, tensor), grad};
}

GruRecurrentVars bind_gru_recurrent(Binder& b, const std::string& group) {
  return GruRecurrentVars{b.leaf(group, "U_z"), b.leaf(group, "U_r"), b.leaf(group, "U_h"),
                          b.leaf(group, "b_z"), b.leaf(group, "b_r"), b.leaf(group, "b_h")};
}

Tape::Var gru_step(Tape& t, const GruRecurrentVars& p, Tape::Var proj_z, Tape::Var proj_r,
                   Tape::Var proj_h, Tape::Var h_prev) {
  const auto z = t.sigmoid(t.add(proj_z, t.matmul(p.U_z, h_prev), p.b_z));
  const auto r = t.sigmoid(t.add(proj_r, t.matmul(p.U_r, h_prev), p.b_r));
  const auto cand = t.tanh(t.add(proj_h, t.matmul(p.U_h, t.mul(r, h_prev)), p.b_h));
  return t.add(t.mul(t.one_minus(z), h_prev), t.mul(z, cand));
}

}  // namespace nhg
