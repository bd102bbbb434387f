// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "nhg/numerics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nhg {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

Tensor glorot_init(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  if (fan_in == 0 || fan_out == 0) throw std::invalid_argument("glorot_init: zero fan");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t({fan_out, fan_in});
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Vec softmax(const Vec& logits) {
  if (logits.size() == 0) throw std::invalid_argument("softmax of empty vector");
  Vec e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

Vec log_softmax(const Vec& logits) {
  if (logits.size() == 0) throw std::invalid_argument("log_softmax of empty vector");
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

void GRUParams::validate() const {
  const auto h = U_z.rows();
  const auto in = W_z.cols();
  auto check = [&](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("GRUParams: inconsistent ") + what);
  };
  check(h > 0 && in > 0, "empty weights");
  check(W_r.rows() == h && W_h.rows() == h && W_z.rows() == h, "input weight rows");
  check(W_r.cols() == in && W_h.cols() == in, "input weight columns");
  for (const Mat* u : {&U_z, &U_r, &U_h}) check(u->rows() == h && u->cols() == h, "recurrent shape");
  for (const Vec* b : {&b_z, &b_r, &b_h}) check(b->size() == h, "bias size");
}

Vec gru_cell_forward(const GRUParams& p, const Vec& x, const Vec& h_prev) {
  p.validate();
  if (x.size() != p.input_dim() || h_prev.size() != p.hidden()) {
    throw std::invalid_argument("gru_cell_forward: dimension mismatch");
  }
  auto sig = [](const Vec& a) -> Vec { return a.unaryExpr([](double v) { return sigmoid(v); }); };
  const Vec z = sig(p.W_z * x + p.U_z * h_prev + p.b_z);
  const Vec r = sig(p.W_r * x + p.U_r * h_prev + p.b_r);
  const Vec cand = (p.W_h * x + p.U_h * r.cwiseProduct(h_prev) + p.b_h).array().tanh();
  return (1.0 - z.array()) * h_prev.array() + z.array() * cand.array();
}

double global_norm(const ParamStore& grads) { return std::sqrt(grads.squared_norm()); }

double clip_global_norm(ParamStore& grads, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("clip threshold must be positive");
  const double norm = global_norm(grads);
  if (norm > threshold) grads.scale(threshold / norm);
  return norm;
}

void AdamHyper::validate() const {
  if (!(alpha > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) ||
      !(epsilon > 0.0) || !(lambda > 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("invalid Adam hyperparameters");
  }
}

void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state,
               const AdamHyper& hyper) {
  hyper.validate();
  if (state.step == 0 && state.first_moment.groups().empty()) {
    state.first_moment = grads.zeros_like();
    state.second_moment = grads.zeros_like();
  }
  // Validate everything before mutating anything.
  for (const auto& g : grads.groups()) {
    const ParamGroup* pg = params.find_group(g.name);
    const ParamGroup* mg = state.first_moment.find_group(g.name);
    if (pg == nullptr || mg == nullptr) {
      throw std::invalid_argument("adam_step: no parameter/state group '" + g.name + "'");
    }
    for (const auto& [n, t] : g.tensors) {
      const Tensor* p = pg->find(n);
      const Tensor* m = mg->find(n);
      if (p == nullptr || m == nullptr || !p->same_shape(t) || !m->same_shape(t)) {
        throw std::invalid_argument("adam_step: shape mismatch for '" + g.name + "/" + n + "'");
      }
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double beta1_t = hyper.beta1 * std::pow(hyper.lambda, t - 1.0);
  const double correction1 = 1.0 - std::pow(hyper.beta1, t);
  const double correction2 = 1.0 - std::pow(hyper.beta2, t);

  for (const auto& g : grads.groups()) {
    ParamGroup& pg = params.group(g.name);
    ParamGroup& mg = state.first_moment.group(g.name);
    ParamGroup& vg = state.second_moment.group(g.name);
    for (const auto& [n, grad] : g.tensors) {
      Tensor& p = pg.at(n);
      Tensor& m = mg.at(n);
      Tensor& v = vg.at(n);
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = grad[i];
        m[i] = beta1_t * m[i] + (1.0 - beta1_t) * gi;
        v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
        const double m_hat = m[i] / correction1;
        const double v_hat = v[i] / correction2;
        p[i] -= hyper.alpha * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
      }
    }
  }
}

double cross_entropy_seq(std::span<const Vec> logits, std::span<const int> targets,
                         std::span<const std::uint8_t> mask) {
  if (logits.size() != targets.size() || logits.size() != mask.size()) {
    throw std::invalid_argument("cross_entropy_seq: length mismatch");
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    if (!mask[t]) continue;
    if (targets[t] < 0 || targets[t] >= logits[t].size()) {
      throw std::out_of_range("cross_entropy_seq: target id " + std::to_string(targets[t]) +
                              " out of range at position " + std::to_string(t));
    }
    total -= log_softmax(logits[t])(targets[t]);
    ++count;
  }
  if (count == 0) throw std::invalid_argument("cross_entropy_seq: every position is masked");
  return total / static_cast<double>(count);
}

}  // namespace nhg
