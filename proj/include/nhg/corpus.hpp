// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nhg/numerics.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace nhg {

using Tokens = std::vector<std::string>;
using Ids = std::vector<int>;

// ---------------------------------------------------------------------------
// Preprocessing

struct PreprocessOptions {
  // Applied in order, each at most once, to the raw text before tokenizing.
  // Every pattern is anchored at the start of the remaining text.
  std::vector<std::string> boilerplate_prefixes;

  static PreprocessOptions defaults();
};

// Whitespace and punctuation tokenization, ASCII lowercasing, digits to '#'.
// Thousands separators and decimal points inside numbers, and apostrophes or
// hyphens inside words, stay attached.
Tokens tokenize_en(std::string_view text);
std::string strip_boilerplate(std::string_view text, const PreprocessOptions& options);
Tokens preprocess_en(std::string_view text, const PreprocessOptions& options = {});

const std::vector<std::string>& default_abbreviations();

// Offsets of sentence starts. Always begins with 0 for non-empty input;
// boundaries follow '.', '!' or '?' unless the period closes an abbreviation.
std::vector<std::size_t> split_sentences(std::span<const std::string> tokens,
                                         const std::vector<std::string>& abbreviations =
                                             default_abbreviations());

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kNumSpecials = 4;
  static const std::array<std::string, kNumSpecials>& special_tokens();

  Vocabulary();

  // Keeps the max_size most frequent tokens with count >= min_count. Ties
  // go to the token seen first.
  static Vocabulary build(std::span<const Tokens> streams, std::size_t max_size,
                          std::uint64_t min_count);
  // Specials followed by `tokens` in order, with zero counts.
  static Vocabulary from_tokens(std::span<const std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::uint64_t count(int id) const { return counts_.at(static_cast<std::size_t>(id)); }
  static bool is_special(int id) { return id >= 0 && id < kNumSpecials; }

  Ids encode(std::span<const std::string> tokens) const;
  Tokens decode(std::span<const int> ids) const;

  // Four special-token header lines, then "token<TAB>count" per id.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && counts_ == other.counts_;
  }

 private:
  void push(std::string token, std::uint64_t count);

  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, int> index_;
};

// ---------------------------------------------------------------------------
// Pairs

struct RawPair {
  std::string id;
  std::string headline;
  std::string document;
  // Optional "train"/"valid"/"test" assignment carried by the input file.
  std::string split;

  bool operator==(const RawPair&) const = default;
};

// One JSON object per line with string fields "headline" and "document"
// (plus optional "id" and "split"). CRLF line endings are accepted.
std::vector<RawPair> read_pairs(const std::filesystem::path& path);
void write_pairs(const std::filesystem::path& path, std::span<const RawPair> pairs);

struct TokenizedPair {
  std::string id;
  Tokens headline;
  Tokens document;
  std::vector<std::size_t> sentence_starts;

  bool operator==(const TokenizedPair&) const = default;
};

TokenizedPair tokenize_pair(const RawPair& raw, const PreprocessOptions& options);
std::vector<TokenizedPair> read_tokenized(const std::filesystem::path& path);
void write_tokenized(const std::filesystem::path& path, std::span<const TokenizedPair> pairs);

// Sentences of a document as token spans.
std::vector<Tokens> document_sentences(const TokenizedPair& pair);

struct HeadlinePair {
  Ids headline_ids;
  Ids document_ids;
  std::vector<std::size_t> sentence_starts;

  bool operator==(const HeadlinePair&) const = default;
};

HeadlinePair encode_pair(const TokenizedPair& pair, const Vocabulary& enc_vocab,
                         const Vocabulary& dec_vocab);
// Throws std::invalid_argument when the sentence-start invariants fail.
void validate_sentence_starts(std::span<const std::size_t> starts, std::size_t length);

// ---------------------------------------------------------------------------
// Batching

// Row-major padded id matrix with lengths and mask.
struct Batch {
  std::size_t rows = 0;
  std::size_t width = 0;
  std::vector<int> ids;
  std::vector<std::size_t> lengths;
  std::vector<std::uint8_t> mask;

  int at(std::size_t r, std::size_t c) const { return ids[r * width + c]; }
  Ids row(std::size_t r) const;

  static Batch pack(std::span<const Ids> sequences);
};

struct PairBatch {
  std::vector<std::size_t> indices;  // into the input pair list
  Batch documents;
  Batch headlines;
};

// Shuffle, stable-sort by length, cut into batches, shuffle the batch order.
std::vector<std::vector<std::size_t>> bucket_batches(std::span<const std::size_t> lengths,
                                                     std::size_t batch_size, Rng& rng);

std::vector<PairBatch> make_batches(std::span<const HeadlinePair> pairs, std::size_t batch_size,
                                    std::size_t max_doc_tokens, Rng& rng);

}  // namespace nhg
