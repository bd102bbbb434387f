// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "nhg/ngram.hpp"

#include "nhg/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace nhg {

std::size_t NGramLM::KeyHash::operator()(const std::vector<int>& k) const {
  std::size_t h = 1469598103934665603ull;
  for (int v : k) {
    h ^= static_cast<std::size_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  }
  return h;
}

bool NGramLM::is_event(int id) { return id != Vocabulary::kPad && id != Vocabulary::kBos; }

NGramLM NGramLM::train(std::span<const Ids> sentences, std::size_t vocab_size,
                       const NGramOptions& options) {
  if (options.order < 1) throw std::invalid_argument("n-gram order must be >= 1");
  if (!(options.discount > 0.0 && options.discount < 1.0)) {
    throw std::invalid_argument("n-gram discount must be in (0, 1)");
  }
  if (vocab_size < static_cast<std::size_t>(Vocabulary::kNumSpecials)) {
    throw std::invalid_argument("n-gram vocabulary smaller than the special tokens");
  }
  NGramLM lm;
  lm.options_ = options;
  lm.vocab_size_ = vocab_size;
  lm.by_order_.resize(options.order);
  std::size_t events = 0;
  const std::size_t pad = options.order - 1;
  std::vector<int> seq;
  for (const auto& s : sentences) {
    seq.assign(pad, Vocabulary::kBos);
    for (int w : s) {
      if (w < 0 || static_cast<std::size_t>(w) >= vocab_size || !is_event(w)) {
        throw std::out_of_range("n-gram training id " + std::to_string(w) + " is not a predictable token");
      }
      seq.push_back(w);
    }
    seq.push_back(Vocabulary::kEos);
    for (std::size_t i = pad; i < seq.size(); ++i) {
      const int w = seq[i];
      for (std::size_t k = 0; k < options.order; ++k) {
        std::vector<int> ctx(seq.begin() + static_cast<std::ptrdiff_t>(i - k),
                             seq.begin() + static_cast<std::ptrdiff_t>(i));
        auto& stats = lm.by_order_[k][ctx];
        stats.total += 1;
        stats.followers[w] += 1;
      }
      ++events;
    }
  }
  if (events == 0) throw std::invalid_argument("cannot train an n-gram model on an empty corpus");
  return lm;
}

double NGramLM::prob(std::span<const int> history, int word) const {
  if (word < 0 || static_cast<std::size_t>(word) >= vocab_size_ || !is_event(word)) {
    throw std::out_of_range("n-gram query for non-event id " + std::to_string(word));
  }
  const std::size_t need = options_.order - 1;
  std::vector<int> hist(need, Vocabulary::kBos);
  const std::size_t take = std::min(need, history.size());
  std::copy(history.end() - static_cast<std::ptrdiff_t>(take), history.end(),
            hist.end() - static_cast<std::ptrdiff_t>(take));

  double p = 1.0 / static_cast<double>(event_count());
  std::vector<int> ctx;
  for (std::size_t k = 0; k < options_.order; ++k) {
    ctx.assign(hist.end() - static_cast<std::ptrdiff_t>(k), hist.end());
    auto it = by_order_[k].find(ctx);
    if (it == by_order_[k].end()) continue;
    const ContextStats& st = it->second;
    const double total = static_cast<double>(st.total);
    auto f = st.followers.find(word);
    const double c = f == st.followers.end() ? 0.0 : static_cast<double>(f->second);
    const double backoff = options_.discount * static_cast<double>(st.followers.size()) / total;
    p = std::max(c - options_.discount, 0.0) / total + backoff * p;
  }
  return p;
}

double NGramLM::log_prob(std::span<const int> history, int word) const {
  return std::log(prob(history, word));
}

std::vector<double> sentence_log_probs(const ConditionalModel& lm, std::span<const int> sentence) {
  std::vector<double> out;
  out.reserve(sentence.size() + 1);
  for (std::size_t i = 0; i <= sentence.size(); ++i) {
    const int w = i < sentence.size() ? sentence[i] : Vocabulary::kEos;
    out.push_back(lm.log_prob(sentence.first(i), w));
  }
  return out;
}

double corpus_perplexity(const ConditionalModel& lm, std::span<const Ids> sentences) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& s : sentences) {
    for (double lp : sentence_log_probs(lm, s)) {
      total -= lp;
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("perplexity of an empty corpus");
  return std::exp(total / static_cast<double>(n));
}

double ce_diff_score(const ConditionalModel& lm_in, const ConditionalModel& lm_out,
                     std::span<const int> sentence) {
  if (sentence.empty()) throw std::invalid_argument("ce_diff_score: empty sentence");
  double sum = 0.0;
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    const auto hist = sentence.first(i);
    sum += -lm_in.log_prob(hist, sentence[i]) + lm_out.log_prob(hist, sentence[i]);
  }
  return sum / static_cast<double>(sentence.size());
}

const std::vector<double>& default_cutoff_grid() {
  static const std::vector<double> grid = {1.0 / 64, 1.0 / 32, 1.0 / 16, 1.0 / 8,
                                           1.0 / 4,  1.0 / 2,  3.0 / 4,  1.0};
  return grid;
}

std::vector<std::size_t> rank_by_score(std::span<const ScoredSentence> scored) {
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scored[a].score < scored[b].score; });
  return order;
}

std::size_t retained_count(std::size_t candidates, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("cutoff fraction must be in (0, 1]");
  const auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(candidates)));
  return std::clamp<std::size_t>(n, candidates == 0 ? 0 : 1, candidates);
}

std::size_t choose_cutoff(std::span<const double> grid, std::span<const double> perplexities) {
  if (grid.empty() || grid.size() != perplexities.size()) {
    throw std::invalid_argument("choose_cutoff: grid and perplexities must be non-empty and aligned");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (perplexities[i] < perplexities[best] ||
        (perplexities[i] == perplexities[best] && grid[i] > grid[best])) {
      best = i;
    }
  }
  return best;
}

SelectionResult select_cutoff(std::span<const ScoredSentence> scored,
                              std::span<const Ids> validation_headlines,
                              std::span<const double> cutoff_grid, std::size_t vocab_size,
                              const NGramOptions& options) {
  if (scored.empty()) throw std::invalid_argument("select_cutoff: no candidate sentences");
  if (cutoff_grid.empty()) throw std::invalid_argument("select_cutoff: empty cutoff grid");
  const auto ranking = rank_by_score(scored);
  SelectionResult result;
  result.grid.assign(cutoff_grid.begin(), cutoff_grid.end());
  std::vector<Ids> subset;
  for (double f : cutoff_grid) {
    const std::size_t n = retained_count(scored.size(), f);
    subset.clear();
    for (std::size_t i = 0; i < n; ++i) subset.push_back(scored[ranking[i]].tokens);
    const NGramLM lm = NGramLM::train(subset, vocab_size, options);
    result.perplexities.push_back(corpus_perplexity(lm, validation_headlines));
  }
  const std::size_t best = choose_cutoff(result.grid, result.perplexities);
  result.fraction = result.grid[best];
  const std::size_t n = retained_count(scored.size(), result.fraction);
  result.retained.assign(ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(n));
  return result;
}

std::vector<std::vector<std::size_t>> filter_sentences(std::size_t num_documents,
                                                       std::span<const ScoredSentence> scored,
                                                       const SelectionResult& selection) {
  std::vector<std::vector<std::size_t>> out(num_documents);
  for (std::size_t idx : selection.retained) {
    const auto& s = scored[idx];
    if (s.document >= num_documents) throw std::out_of_range("selection refers to an unknown document");
    out[s.document].push_back(s.sentence);
  }
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

void write_selection_report(const std::filesystem::path& path,
                            std::span<const ScoredSentence> scored,
                            const SelectionResult& selection,
                            std::span<const std::string> document_ids) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PreconditionError("cannot write selection report " + path.string());
  std::vector<bool> kept(scored.size(), false);
  for (std::size_t i : selection.retained) kept[i] = true;
  char buf[64];
  for (std::size_t i : rank_by_score(scored)) {
    const auto& s = scored[i];
    std::snprintf(buf, sizeof(buf), "%.17g", s.score);
    out << document_ids[s.document] << '\t' << s.sentence << '\t' << buf << '\t'
        << (kept[i] ? 1 : 0) << '\n';
  }
}

std::vector<SelectionReportEntry> read_selection_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("cannot read selection report " + path.string());
  std::vector<SelectionReportEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    SelectionReportEntry e;
    std::string doc, sent, score, kept;
    if (!std::getline(fields, doc, '\t') || !std::getline(fields, sent, '\t') ||
        !std::getline(fields, score, '\t') || !std::getline(fields, kept, '\t') ||
        (kept != "0" && kept != "1")) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed selection line");
    }
    try {
      e.document_id = doc;
      e.sentence = std::stoull(sent);
      e.score = std::stod(score);
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
    e.retained = kept == "1";
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace nhg
