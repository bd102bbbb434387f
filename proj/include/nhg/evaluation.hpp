// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nhg/corpus.hpp"
#include "nhg/metrics.hpp"
#include "nhg/param_store.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace nhg {

struct EvalConfig {
  std::size_t beam = 5;
  std::size_t max_len = 30;
  std::size_t max_doc_tokens = 400;
  double ci_level = 0.95;
  double significance_level = 0.95;
  std::size_t resamples = 1000;
  std::uint64_t seed = 1;
};

struct DocumentEval {
  double nll_sum = 0.0;  // headline tokens plus EOS
  std::size_t tokens = 0;
  RougeScore r1;
  RougeScore rl;

  bool operator==(const DocumentEval&) const = default;
};

struct Comparison {
  std::string metric;  // PPL, R1_R, R1_P, RL_R, RL_P
  bool significant = false;
  double p_value = 1.0;

  bool operator==(const Comparison&) const = default;
};

struct EvalReport {
  double ppl = 0.0;
  double ppl_ci_low = 0.0;
  double ppl_ci_high = 0.0;
  double r1_r = 0.0;
  double r1_p = 0.0;
  double rl_r = 0.0;
  double rl_p = 0.0;
  std::vector<DocumentEval> documents;
  std::string baseline;  // empty without a comparison
  std::vector<Comparison> comparisons;

  double ppl_half_width() const { return (ppl_ci_high - ppl_ci_low) / 2.0; }
  // "65.10 ± 1.23"
  std::string ppl_display() const;
  bool operator==(const EvalReport&) const = default;
};

struct EvalOutput {
  EvalReport report;
  std::vector<std::vector<std::string>> headlines;  // generated, in input order
};

// Perplexity with confidence interval, beam generation, macro ROUGE-1/L, and
// paired significance against `baseline` when given.
EvalOutput evaluate_system(const ParamStore& store, std::span<const TokenizedPair> test,
                           const Vocabulary& enc_vocab, const Vocabulary& dec_vocab,
                           const EvalConfig& config, const EvalReport* baseline = nullptr,
                           const std::string& baseline_name = "baseline");

// Significance of `system` against `baseline` over per-document scores.
std::vector<Comparison> compare_reports(const EvalReport& system, const EvalReport& baseline,
                                        const EvalConfig& config);

std::string format_report(const EvalReport& report);
EvalReport parse_report(const std::string& text, const std::string& source);
void write_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& path);

}  // namespace nhg
