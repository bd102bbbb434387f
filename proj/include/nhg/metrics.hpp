// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace nhg {

struct RougeScore {
  double recall = 0.0;
  double precision = 0.0;

  bool operator==(const RougeScore&) const = default;
};

// Clipped n-gram overlap. Empty sides score 0.
RougeScore rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference,
                   std::size_t n);
// Longest common subsequence over tokens.
RougeScore rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference);
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

struct SignificanceResult {
  double fraction = 0.0;  // share of resamples where a beats b, ties counting half
  double p_value = 1.0;
  bool significant = false;
};

// Paired bootstrap over per-document scores. Significant when one system wins
// in at least `level` of the resamples.
SignificanceResult significance_test(std::span<const double> a, std::span<const double> b,
                                     double level = 0.95, std::size_t resamples = 1000,
                                     std::uint64_t seed = 1);

}  // namespace nhg
