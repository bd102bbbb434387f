// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "nhg/decoding.hpp"

#include <algorithm>
#include <stdexcept>

namespace nhg {

BeamResult beam_search(const ParamStore& store, std::span<const int> document, std::size_t beam,
                       std::size_t max_len) {
  if (beam < 1) throw std::invalid_argument("beam size must be >= 1");
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  DecoderSession session(store, document);

  std::vector<Hypothesis> live(1);
  live[0].state = session.initial_state();
  std::vector<Hypothesis> finished;

  struct Candidate {
    double score;
    int token;
    std::size_t parent;
  };

  for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Candidate> candidates;
    std::vector<Vec> next_states(live.size());
    for (std::size_t i = 0; i < live.size(); ++i) {
      const int prev = live[i].tokens.empty() ? Vocabulary::kBos : live[i].tokens.back();
      const auto out = session.step(prev, live[i].state);
      next_states[i] = out.state;
      for (int w = 0; w < out.logits.size(); ++w) {
        if (w == Vocabulary::kPad || w == Vocabulary::kBos) continue;
        candidates.push_back(Candidate{live[i].log_prob + out.logits(w), w, i});
      }
    }
    const std::size_t keep = std::min(beam, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.token != b.token) return a.token < b.token;
                        return a.parent < b.parent;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t k = 0; k < keep; ++k) {
      const auto& c = candidates[k];
      Hypothesis h;
      h.tokens = live[c.parent].tokens;
      h.tokens.push_back(c.token);
      h.log_prob = c.score;
      h.state = next_states[c.parent];
      h.finished = c.token == Vocabulary::kEos;
      (h.finished ? finished : next).push_back(std::move(h));
    }
    live = std::move(next);
    // Scores only decrease with length, so no live hypothesis can overtake
    // a finished one that already beats the best of them.
    if (!finished.empty() && !live.empty()) {
      double best_finished = finished.front().log_prob;
      for (const auto& f : finished) best_finished = std::max(best_finished, f.log_prob);
      if (best_finished >= live.front().log_prob) break;
    }
  }

  // Hypotheses still alive at the end compete on total score; finished ones
  // win ties.
  const Hypothesis* best = nullptr;
  for (const auto* pool : {&finished, &live}) {
    for (const auto& h : *pool) {
      if (best == nullptr || h.log_prob > best->log_prob) best = &h;
    }
  }
  if (best == nullptr) throw std::logic_error("beam search produced no hypotheses");
  BeamResult r;
  r.tokens = best->tokens;
  r.finished = best->finished;
  if (r.finished) r.tokens.pop_back();
  r.score = best->log_prob;
  return r;
}

double sequence_log_prob(const ParamStore& store, std::span<const int> document,
                         std::span<const int> tokens, bool finished) {
  if (tokens.empty()) {
    if (!finished) return 0.0;
    // Only the EOS term; nhg_token_nll needs a non-empty headline, so score
    // a single step directly.
    DecoderSession session(store, document);
    return session.step(Vocabulary::kBos, session.initial_state()).logits(Vocabulary::kEos);
  }
  HeadlinePair pair;
  pair.headline_ids.assign(tokens.begin(), tokens.end());
  pair.document_ids.assign(document.begin(), document.end());
  const auto nll = nhg_token_nll(store, pair);
  double total = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) total -= nll[i];
  if (finished) total -= nll.back();
  return total;
}

}  // namespace nhg
