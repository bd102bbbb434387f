// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "nhg/metrics.hpp"

#include "nhg/numerics.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace nhg {

namespace {

std::map<std::vector<std::string>, std::size_t> ngram_counts(std::span<const std::string> seq,
                                                             std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    ++counts[std::vector<std::string>(seq.begin() + static_cast<std::ptrdiff_t>(i),
                                      seq.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

RougeScore ratio(double overlap, double cand_total, double ref_total) {
  RougeScore s;
  s.recall = ref_total > 0 ? overlap / ref_total : 0.0;
  s.precision = cand_total > 0 ? overlap / cand_total : 0.0;
  return s;
}

}  // namespace

RougeScore rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference,
                   std::size_t n) {
  if (n == 0) throw std::invalid_argument("rouge_n: n must be >= 1");
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  double overlap = 0;
  for (const auto& [gram, c] : cand) {
    auto it = ref.find(gram);
    if (it != ref.end()) overlap += static_cast<double>(std::min(c, it->second));
  }
  const auto total = [](std::size_t len, std::size_t n) {
    return len >= n ? static_cast<double>(len - n + 1) : 0.0;
  };
  return ratio(overlap, total(candidate.size(), n), total(reference.size(), n));
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference) {
  return ratio(static_cast<double>(lcs_length(candidate, reference)),
               static_cast<double>(candidate.size()), static_cast<double>(reference.size()));
}

SignificanceResult significance_test(std::span<const double> a, std::span<const double> b,
                                     double level, std::size_t resamples, std::uint64_t seed) {
  if (a.size() != b.size()) throw std::invalid_argument("significance_test: unpaired inputs");
  if (a.size() < 2) throw std::invalid_argument("significance_test: need at least 2 documents");
  if (resamples == 0) throw std::invalid_argument("significance_test: resamples must be >= 1");
  if (!(level > 0.5 && level < 1.0)) throw std::invalid_argument("significance_test: level in (0.5, 1)");
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, a.size() - 1);
  double wins = 0;
  for (std::size_t r = 0; r < resamples; ++r) {
    double sa = 0, sb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::size_t k = pick(rng);
      sa += a[k];
      sb += b[k];
    }
    if (sa > sb) wins += 1.0;
    else if (sa == sb) wins += 0.5;
  }
  SignificanceResult out;
  out.fraction = wins / static_cast<double>(resamples);
  out.p_value = std::min(1.0, 2.0 * std::min(out.fraction, 1.0 - out.fraction));
  out.significant = out.fraction >= level || out.fraction <= 1.0 - level;
  return out;
}

}  // namespace nhg
