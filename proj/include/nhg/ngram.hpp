// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nhg/corpus.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace nhg {

// P(word | history) over the event space {UNK, EOS, ordinary tokens}.
class ConditionalModel {
 public:
  virtual ~ConditionalModel() = default;
  virtual double log_prob(std::span<const int> history, int word) const = 0;
};

struct NGramOptions {
  std::size_t order = 3;
  double discount = 0.7;
};

// Interpolated absolute-discounting n-gram model:
//   p_k(w|h) = max(c(h,w) - D, 0) / c(h) + D * N1+(h .) / c(h) * p_{k-1}(w|h')
// with p_0 uniform over the event space and contexts never seen falling
// through to the next lower order. Histories are left-padded with BOS.
class NGramLM : public ConditionalModel {
 public:
  // `vocab_size` counts every id including PAD and BOS, which are never
  // predicted. Throws on an empty corpus.
  static NGramLM train(std::span<const Ids> sentences, std::size_t vocab_size,
                       const NGramOptions& options = {});

  double log_prob(std::span<const int> history, int word) const override;
  double prob(std::span<const int> history, int word) const;

  std::size_t order() const { return options_.order; }
  std::size_t vocab_size() const { return vocab_size_; }
  // Number of predictable outcomes (vocab_size minus PAD and BOS).
  std::size_t event_count() const { return vocab_size_ - 2; }
  static bool is_event(int id);

 private:
  struct KeyHash {
    std::size_t operator()(const std::vector<int>& k) const;
  };
  struct ContextStats {
    std::uint64_t total = 0;
    std::unordered_map<int, std::uint64_t> followers;
  };

  NGramOptions options_;
  std::size_t vocab_size_ = 0;
  // by_order_[k] holds contexts of length k.
  std::vector<std::unordered_map<std::vector<int>, ContextStats, KeyHash>> by_order_;
};

// Per-token log probabilities for each word of `sentence` followed by EOS.
std::vector<double> sentence_log_probs(const ConditionalModel& lm, std::span<const int> sentence);
double corpus_perplexity(const ConditionalModel& lm, std::span<const Ids> sentences);

// (1/|s|) * sum_i [ -ln P_in(w_i|h_i) + ln P_out(w_i|h_i) ] over the words of
// s (EOS not scored). Lower means more in-domain. Throws on empty input.
double ce_diff_score(const ConditionalModel& lm_in, const ConditionalModel& lm_out,
                     std::span<const int> sentence);

struct ScoredSentence {
  std::size_t document = 0;
  std::size_t sentence = 0;
  Ids tokens;
  double score = 0.0;
};

struct SelectionResult {
  // Indices into the scored list, ascending score order.
  std::vector<std::size_t> retained;
  double fraction = 1.0;
  std::vector<double> grid;
  std::vector<double> perplexities;
};

const std::vector<double>& default_cutoff_grid();

// Ascending by score; equal scores keep inventory order.
std::vector<std::size_t> rank_by_score(std::span<const ScoredSentence> scored);
std::size_t retained_count(std::size_t candidates, double fraction);
// Index of the minimal perplexity; exact ties go to the larger fraction.
std::size_t choose_cutoff(std::span<const double> grid, std::span<const double> perplexities);

SelectionResult select_cutoff(std::span<const ScoredSentence> scored,
                              std::span<const Ids> validation_headlines,
                              std::span<const double> cutoff_grid, std::size_t vocab_size,
                              const NGramOptions& options = {});

// Retained sentence indices per document, ascending.
std::vector<std::vector<std::size_t>> filter_sentences(std::size_t num_documents,
                                                       std::span<const ScoredSentence> scored,
                                                       const SelectionResult& selection);

struct SelectionReportEntry {
  std::string document_id;
  std::size_t sentence = 0;
  double score = 0.0;
  bool retained = false;
};

// One "doc_id<TAB>sentence_index<TAB>score<TAB>retained" line per sentence,
// in ascending score order.
void write_selection_report(const std::filesystem::path& path,
                            std::span<const ScoredSentence> scored,
                            const SelectionResult& selection,
                            std::span<const std::string> document_ids);
std::vector<SelectionReportEntry> read_selection_report(const std::filesystem::path& path);

}  // namespace nhg
