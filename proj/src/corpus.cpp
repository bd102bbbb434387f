// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "nhg/corpus.hpp"

#include "nhg/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace nhg {
namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_digit_like(unsigned char c) { return (c >= '0' && c <= '9') || c == '#'; }
bool is_word_byte(unsigned char c) {
  return std::isalnum(c) || c == '#' || c >= 0x80;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string join(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Tokens split_spaces(const std::string& s) {
  Tokens out;
  std::istringstream in(s);
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

}  // namespace

PreprocessOptions PreprocessOptions::defaults() {
  PreprocessOptions o;
  o.boilerplate_prefixes = {
      R"(\s*Editor's note:[^.]*\.\s*)",
      R"(\s*By \.[^.]*\.\s*)",
      R"(\s*PUBLISHED:\s*\.[^.|]*\.\s*(\|\s*\.\s*)?)",
      R"(\s*UPDATED:\s*\.[^.]*\.\s*)",
      R"(\s*Last updated at [^.]*\.\s*)",
      R"([^()\n]{0,60}\(CNN\)\s*(--\s*)?)",
  };
  return o;
}

std::string strip_boilerplate(std::string_view text, const PreprocessOptions& options) {
  std::string rest(text);
  for (const auto& pattern : options.boilerplate_prefixes) {
    const std::regex re(pattern);
    std::smatch m;
    if (std::regex_search(rest, m, re, std::regex_constants::match_continuous)) {
      rest.erase(0, static_cast<std::size_t>(m.length(0)));
    }
  }
  return rest;
}

Tokens tokenize_en(std::string_view text) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_space(c)) {
      flush();
      continue;
    }
    if (is_word_byte(c)) {
      if (c >= 'A' && c <= 'Z') {
        cur += static_cast<char>(c - 'A' + 'a');
      } else if (c >= '0' && c <= '9') {
        cur += '#';
      } else {
        cur += static_cast<char>(c);
      }
      continue;
    }
    const auto prev = i > 0 ? static_cast<unsigned char>(text[i - 1]) : 0;
    const auto next = i + 1 < n ? static_cast<unsigned char>(text[i + 1]) : 0;
    const bool in_number = (c == '.' || c == ',') && is_digit_like(prev) && is_digit_like(next);
    const bool in_word = (c == '\'' || c == '-') && !cur.empty() && is_word_byte(prev) &&
                         is_word_byte(next);
    if ((in_number && !cur.empty()) || in_word) {
      cur += static_cast<char>(c);
      continue;
    }
    flush();
    out.emplace_back(1, static_cast<char>(c));
  }
  flush();
  return out;
}

Tokens preprocess_en(std::string_view text, const PreprocessOptions& options) {
  return tokenize_en(strip_boilerplate(text, options));
}

const std::vector<std::string>& default_abbreviations() {
  static const std::vector<std::string> abbrevs = {
      "mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "gen", "sen", "rep", "gov",
      "lt", "col", "sgt", "capt", "vs", "inc", "corp", "ltd", "co", "no", "jan", "feb",
      "aug", "sept", "oct", "nov", "dec"};
  return abbrevs;
}

std::vector<std::size_t> split_sentences(std::span<const std::string> tokens,
                                         const std::vector<std::string>& abbreviations) {
  std::vector<std::size_t> starts;
  if (tokens.empty()) return starts;
  starts.push_back(0);
  const std::unordered_set<std::string> abbrev(abbreviations.begin(), abbreviations.end());
  auto terminal = [](const std::string& t) { return t == "." || t == "!" || t == "?"; };
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (!terminal(tokens[i]) || terminal(tokens[i + 1])) continue;
    if (tokens[i] == "." && i > 0 && abbrev.count(tokens[i - 1])) continue;
    starts.push_back(i + 1);
  }
  return starts;
}

// ---------------------------------------------------------------------------

const std::array<std::string, Vocabulary::kNumSpecials>& Vocabulary::special_tokens() {
  static const std::array<std::string, kNumSpecials> specials = {"<pad>", "<unk>", "<s>", "</s>"};
  return specials;
}

Vocabulary::Vocabulary() {
  for (const auto& s : special_tokens()) push(s, 0);
}

void Vocabulary::push(std::string token, std::uint64_t count) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
  counts_.push_back(count);
}

Vocabulary Vocabulary::build(std::span<const Tokens> streams, std::size_t max_size,
                             std::uint64_t min_count) {
  if (max_size < 1 || min_count < 1) throw std::invalid_argument("build_vocab: max_size and min_count must be >= 1");
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::pair<std::string, std::uint64_t>> seen;  // first-occurrence order
  for (const auto& stream : streams) {
    for (const auto& tok : stream) {
      auto [it, inserted] = slot.emplace(tok, seen.size());
      if (inserted) seen.emplace_back(tok, 0);
      ++seen[it->second].second;
    }
  }
  std::vector<std::size_t> order(seen.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return seen[a].second > seen[b].second; });
  Vocabulary v;
  const auto& specials = special_tokens();
  for (std::size_t i : order) {
    if (v.size() - kNumSpecials >= max_size) break;
    if (seen[i].second < min_count) break;
    if (std::find(specials.begin(), specials.end(), seen[i].first) != specials.end()) continue;
    v.push(seen[i].first, seen[i].second);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(std::span<const std::string> tokens) {
  Vocabulary v;
  for (const auto& t : tokens) {
    if (v.contains(t)) throw std::invalid_argument("duplicate vocabulary token '" + t + "'");
    v.push(t, 0);
  }
  return v;
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("vocabulary id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

Ids Vocabulary::encode(std::span<const std::string> tokens) const {
  Ids ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Tokens Vocabulary::decode(std::span<const int> ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PreconditionError("cannot write vocabulary file " + path.string());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (i < kNumSpecials) {
      out << tokens_[i] << '\n';
    } else {
      out << tokens_[i] << '\t' << counts_[i] << '\n';
    }
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("cannot read vocabulary file " + path.string());
  Vocabulary v;
  v.tokens_.clear();
  v.counts_.clear();
  v.index_.clear();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto where = path.string() + ":" + std::to_string(lineno);
    if (lineno <= kNumSpecials) {
      if (line != special_tokens()[lineno - 1]) {
        throw FormatError(where + ": expected special token " + special_tokens()[lineno - 1]);
      }
      v.push(line, 0);
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) throw FormatError(where + ": expected token<TAB>count");
    std::uint64_t count = 0;
    try {
      count = std::stoull(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw FormatError(where + ": bad count");
    }
    std::string tok = line.substr(0, tab);
    if (v.contains(tok)) throw FormatError(where + ": duplicate token '" + tok + "'");
    v.push(std::move(tok), count);
  }
  if (v.tokens_.size() < kNumSpecials) throw FormatError(path.string() + ": truncated special-token header");
  return v;
}

// ---------------------------------------------------------------------------

namespace {

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("cannot read " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw FormatError(where + ": malformed record (" + e.what() + ")");
    }
    if (!j.is_object()) throw FormatError(where + ": record is not an object");
    fn(j, where);
  }
}

std::string string_field(const nlohmann::json& j, const char* key, const std::string& where,
                         bool required) {
  auto it = j.find(key);
  if (it == j.end()) {
    if (required) throw FormatError(where + ": missing \"" + key + "\" field");
    return {};
  }
  if (!it->is_string()) throw FormatError(where + ": field \"" + key + "\" is not a string");
  return it->get<std::string>();
}

}  // namespace

std::vector<RawPair> read_pairs(const std::filesystem::path& path) {
  std::vector<RawPair> out;
  for_each_json_line(path, [&](const nlohmann::json& j, const std::string& where) {
    RawPair p;
    p.headline = string_field(j, "headline", where, true);
    p.document = string_field(j, "document", where, true);
    p.id = string_field(j, "id", where, false);
    p.split = string_field(j, "split", where, false);
    if (trim(p.headline).empty()) throw FormatError(where + ": empty headline");
    if (trim(p.document).empty()) throw FormatError(where + ": empty document");
    if (p.id.empty()) p.id = std::to_string(out.size());
    out.push_back(std::move(p));
  });
  return out;
}

void write_pairs(const std::filesystem::path& path, std::span<const RawPair> pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PreconditionError("cannot write " + path.string());
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["headline"] = p.headline;
    j["document"] = p.document;
    if (!p.split.empty()) j["split"] = p.split;
    out << j.dump() << '\n';
  }
}

TokenizedPair tokenize_pair(const RawPair& raw, const PreprocessOptions& options) {
  TokenizedPair t;
  t.id = raw.id;
  t.headline = preprocess_en(raw.headline, {});
  t.document = preprocess_en(raw.document, options);
  t.sentence_starts = split_sentences(t.document);
  return t;
}

std::vector<TokenizedPair> read_tokenized(const std::filesystem::path& path) {
  std::vector<TokenizedPair> out;
  for_each_json_line(path, [&](const nlohmann::json& j, const std::string& where) {
    TokenizedPair p;
    p.id = string_field(j, "id", where, true);
    p.headline = split_spaces(string_field(j, "headline", where, true));
    p.document = split_spaces(string_field(j, "document", where, true));
    auto it = j.find("sentence_starts");
    if (it == j.end() || !it->is_array()) throw FormatError(where + ": missing \"sentence_starts\" array");
    try {
      p.sentence_starts = it->get<std::vector<std::size_t>>();
      validate_sentence_starts(p.sentence_starts, p.document.size());
    } catch (const std::exception& e) {
      throw FormatError(where + ": bad sentence_starts (" + e.what() + ")");
    }
    if (p.headline.empty() || p.document.empty()) throw FormatError(where + ": empty headline or document");
    out.push_back(std::move(p));
  });
  return out;
}

void write_tokenized(const std::filesystem::path& path, std::span<const TokenizedPair> pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PreconditionError("cannot write " + path.string());
  for (const auto& p : pairs) {
    nlohmann::ordered_json j;
    j["id"] = p.id;
    j["headline"] = join(p.headline);
    j["document"] = join(p.document);
    j["sentence_starts"] = p.sentence_starts;
    out << j.dump() << '\n';
  }
}

std::vector<Tokens> document_sentences(const TokenizedPair& pair) {
  std::vector<Tokens> out;
  const auto& s = pair.sentence_starts;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::size_t end = i + 1 < s.size() ? s[i + 1] : pair.document.size();
    out.emplace_back(pair.document.begin() + static_cast<std::ptrdiff_t>(s[i]),
                     pair.document.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

void validate_sentence_starts(std::span<const std::size_t> starts, std::size_t length) {
  if (length == 0) {
    if (!starts.empty()) throw std::invalid_argument("sentence starts on an empty document");
    return;
  }
  if (starts.empty() || starts[0] != 0) throw std::invalid_argument("first sentence must start at 0");
  for (std::size_t i = 1; i < starts.size(); ++i) {
    if (starts[i] <= starts[i - 1]) throw std::invalid_argument("sentence starts not strictly ascending");
  }
  if (starts.back() >= length) throw std::invalid_argument("sentence start past document end");
}

HeadlinePair encode_pair(const TokenizedPair& pair, const Vocabulary& enc_vocab,
                         const Vocabulary& dec_vocab) {
  validate_sentence_starts(pair.sentence_starts, pair.document.size());
  return HeadlinePair{dec_vocab.encode(pair.headline), enc_vocab.encode(pair.document),
                      pair.sentence_starts};
}

// ---------------------------------------------------------------------------

Ids Batch::row(std::size_t r) const {
  return Ids(ids.begin() + static_cast<std::ptrdiff_t>(r * width),
             ids.begin() + static_cast<std::ptrdiff_t>(r * width + lengths[r]));
}

Batch Batch::pack(std::span<const Ids> sequences) {
  Batch b;
  b.rows = sequences.size();
  for (const auto& s : sequences) b.width = std::max(b.width, s.size());
  b.ids.assign(b.rows * b.width, Vocabulary::kPad);
  b.mask.assign(b.rows * b.width, 0);
  for (std::size_t r = 0; r < b.rows; ++r) {
    b.lengths.push_back(sequences[r].size());
    for (std::size_t c = 0; c < sequences[r].size(); ++c) {
      b.ids[r * b.width + c] = sequences[r][c];
      b.mask[r * b.width + c] = 1;
    }
  }
  return b;
}

std::vector<std::vector<std::size_t>> bucket_batches(std::span<const std::size_t> lengths,
                                                     std::size_t batch_size, Rng& rng) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<std::size_t> order(lengths.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

std::vector<PairBatch> make_batches(std::span<const HeadlinePair> pairs, std::size_t batch_size,
                                    std::size_t max_doc_tokens, Rng& rng) {
  std::vector<std::size_t> lengths;
  lengths.reserve(pairs.size());
  for (const auto& p : pairs) lengths.push_back(std::min(p.document_ids.size(), max_doc_tokens));
  std::vector<PairBatch> out;
  for (auto& idx : bucket_batches(lengths, batch_size, rng)) {
    std::vector<Ids> docs, heads;
    for (std::size_t i : idx) {
      const auto& doc = pairs[i].document_ids;
      docs.emplace_back(doc.begin(),
                        doc.begin() + static_cast<std::ptrdiff_t>(std::min(doc.size(), max_doc_tokens)));
      heads.push_back(pairs[i].headline_ids);
    }
    out.push_back(PairBatch{std::move(idx), Batch::pack(docs), Batch::pack(heads)});
  }
  return out;
}

}  // namespace nhg
