// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nhg/param_store.hpp"
#include "nhg/tensor.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace nhg {

using Rng = std::mt19937_64;

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 1469598103934665603ull);

// Uniform Glorot initialization. Shape is (fan_out x fan_in), entries drawn
// from U[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))].
Tensor glorot_init(std::size_t fan_in, std::size_t fan_out, Rng& rng);

// Max-subtracted softmax. Throws on empty input.
Vec softmax(const Vec& logits);
// log(softmax(logits)) computed with log-sum-exp.
Vec log_softmax(const Vec& logits);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Input weights are (hidden x input), recurrent weights (hidden x hidden).
struct GRUParams {
  Mat W_z, W_r, W_h;
  Mat U_z, U_r, U_h;
  Vec b_z, b_r, b_h;

  Eigen::Index hidden() const { return U_z.rows(); }
  Eigen::Index input_dim() const { return W_z.cols(); }
  // Throws std::invalid_argument when the shapes are not mutually consistent.
  void validate() const;
};

// h_t = (1 - z) * h_prev + z * tanh(W_h x + U_h (r * h_prev) + b_h)
Vec gru_cell_forward(const GRUParams& p, const Vec& x, const Vec& h_prev);

// Scales every gradient by threshold / norm when the global L2 norm exceeds
// threshold. Returns the norm before clipping.
double clip_global_norm(ParamStore& grads, double threshold);
double global_norm(const ParamStore& grads);

struct AdamHyper {
  double alpha = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lambda = 1.0 - 1e-8;

  void validate() const;
};

struct AdamState {
  ParamStore first_moment;
  ParamStore second_moment;
  std::uint64_t step = 0;
};

// One Adam update of every group present in `grads`; groups of `params`
// without a gradient are left untouched. beta1 decays as beta1 * lambda^(t-1).
void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state,
               const AdamHyper& hyper);

// Mean over unmasked positions of -log softmax(logits[t])[targets[t]].
// Throws when every position is masked or a target is out of range.
double cross_entropy_seq(std::span<const Vec> logits, std::span<const int> targets,
                         std::span<const std::uint8_t> mask);

}  // namespace nhg
