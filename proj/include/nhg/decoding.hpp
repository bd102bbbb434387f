// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nhg/nhg_model.hpp"

#include <span>

namespace nhg {

struct Hypothesis {
  Ids tokens;  // generated ids, EOS included once finished
  double log_prob = 0.0;
  Vec state;
  bool finished = false;
};

struct BeamResult {
  Ids tokens;  // without the terminating EOS
  double score = 0.0;  // total log probability, EOS included when finished
  bool finished = false;
};

// Length-synchronous beam search from BOS over every id except PAD and BOS.
// Candidates rank by total log probability, then token id, then parent rank.
// Returns the best of the finished hypotheses and those still alive at
// max_len, finished first on ties. No length normalization.
BeamResult beam_search(const ParamStore& store, std::span<const int> document, std::size_t beam,
                       std::size_t max_len);

// Total log probability of `tokens` (plus EOS when `finished`) by teacher
// forcing through the training loss path.
double sequence_log_prob(const ParamStore& store, std::span<const int> document,
                         std::span<const int> tokens, bool finished);

}  // namespace nhg
