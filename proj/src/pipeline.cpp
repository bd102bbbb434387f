// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "nhg/pipeline.hpp"

#include "nhg/checkpoint.hpp"
#include "nhg/decoding.hpp"
#include "nhg/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace nhg {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_unsigned(const std::string& key, const std::string& value, T min_value) {
  T v{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end || v < min_value) {
    throw PreconditionError("config '" + key + "': expected an integer >= " + std::to_string(min_value) +
                            ", got '" + value + "'");
  }
  return v;
}

double parse_real(const std::string& key, const std::string& value, double lo, double hi) {
  double v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end || !(v >= lo && v <= hi)) {
    throw PreconditionError("config '" + key + "': expected a number in [" + fmt_double(lo) + ", " +
                            fmt_double(hi) + "], got '" + value + "'");
  }
  return v;
}

// Keys that do not change any trained artifact.
const std::set<std::string>& unhashed_keys() {
  static const std::set<std::string> k = {"beam", "max_len", "ci_level", "significance_level",
                                          "resamples", "threads"};
  return k;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

Ids encode_tokens(const Vocabulary& v, const Tokens& t) { return v.encode(t); }

std::map<std::string, std::vector<std::size_t>> retained_by_document(const fs::path& selection) {
  std::map<std::string, std::vector<std::size_t>> out;
  for (const auto& e : read_selection_report(selection)) {
    if (e.retained) out[e.document_id].push_back(e.sentence);
  }
  for (auto& [id, v] : out) std::sort(v.begin(), v.end());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

const std::vector<std::string>& Config::keys() {
  static const std::vector<std::string> k = {
      "hidden",        "embed",          "vocab_max",        "vocab_min_count", "batch_size",
      "learning_rate", "beta1",          "beta2",            "epsilon",         "lambda",
      "clip_threshold", "seed",          "max_epochs",       "patience",        "threads",
      "beam",          "max_len",        "max_doc_tokens",   "pseudo_window",   "ngram_order",
      "ngram_discount", "cutoff_grid",   "boilerplate_prefix", "ci_level",      "significance_level",
      "resamples"};
  return k;
}

void Config::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "hidden") dims.hidden = parse_unsigned<std::size_t>(key, value, 1);
  else if (key == "embed") dims.embed = parse_unsigned<std::size_t>(key, value, 1);
  else if (key == "vocab_max") vocab_max = parse_unsigned<std::size_t>(key, value, 0);
  else if (key == "vocab_min_count") vocab_min_count = parse_unsigned<std::uint64_t>(key, value, 1);
  else if (key == "batch_size") train.batch_size = parse_unsigned<std::size_t>(key, value, 1);
  else if (key == "learning_rate") train.adam.alpha = parse_real(key, value, 1e-300, 1e300);
  else if (key == "beta1") train.adam.beta1 = parse_real(key, value, 0.0, 1.0);
  else if (key == "beta2") train.adam.beta2 = parse_real(key, value, 0.0, 1.0);
  else if (key == "epsilon") train.adam.epsilon = parse_real(key, value, 1e-300, 1e300);
  else if (key == "lambda") train.adam.lambda = parse_real(key, value, 0.0, 1.0);
  else if (key == "clip_threshold") train.clip_threshold = parse_real(key, value, 1e-300, 1e300);
  else if (key == "seed") train.seed = parse_unsigned<std::uint64_t>(key, value, 0);
  else if (key == "max_epochs") train.max_epochs = parse_unsigned<std::size_t>(key, value, 1);
  else if (key == "patience") train.patience = parse_unsigned<std::size_t>(key, value, 1);
  else if (key == "threads") train.threads = parse_unsigned<std::size_t>(key, value, 1);
  else if (key == "beam") beam = parse_unsigned<std::size_t>(key, value, 1);
  else if (key == "max_len") max_len = parse_unsigned<std::size_t>(key, value, 1);
  else if (key == "max_doc_tokens") max_doc_tokens = parse_unsigned<std::size_t>(key, value, 1);
  else if (key == "pseudo_window") pseudo_window = parse_unsigned<std::size_t>(key, value, 1);
  else if (key == "ngram_order") ngram.order = parse_unsigned<std::size_t>(key, value, 1);
  else if (key == "ngram_discount") ngram.discount = parse_real(key, value, 0.0, 1.0);
  else if (key == "cutoff_grid") {
    std::vector<double> grid;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) grid.push_back(parse_real(key, trim(item), 1e-12, 1.0));
    if (grid.empty()) throw PreconditionError("config 'cutoff_grid': empty list");
    cutoff_grid = grid;
  } else if (key == "boilerplate_prefix") {
    if (!custom_boilerplate_) preprocess.boilerplate_prefixes.clear();
    custom_boilerplate_ = true;
    try {
      (void)std::regex(value);
    } catch (const std::regex_error&) {
      throw PreconditionError("config 'boilerplate_prefix': invalid pattern '" + value + "'");
    }
    preprocess.boilerplate_prefixes.push_back(value);
  } else if (key == "ci_level") ci_level = parse_real(key, value, 1e-9, 1.0 - 1e-12);
  else if (key == "significance_level") significance_level = parse_real(key, value, 0.5 + 1e-12, 1.0 - 1e-12);
  else if (key == "resamples") resamples = parse_unsigned<std::size_t>(key, value, 1);
  else throw PreconditionError("unknown config key '" + key + "'");
}

Config Config::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("missing config file " + path.string());
  Config c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    const auto hash = line.find('#');
    // A '#' inside a value (boilerplate patterns) is kept when the key says so.
    std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw PreconditionError(where + ": expected key = value");
    const std::string key = trim(body.substr(0, eq));
    std::string value = body.substr(eq + 1);
    if (key != "boilerplate_prefix" && hash != std::string::npos) {
      const auto vh = value.find('#');
      if (vh != std::string::npos) value = value.substr(0, vh);
    }
    try {
      c.set(key, value);
    } catch (const PreconditionError& e) {
      throw PreconditionError(where + ": " + e.what());
    }
  }
  return c;
}

std::vector<std::pair<std::string, std::string>> Config::entries() const {
  std::vector<std::pair<std::string, std::string>> e;
  auto u = [&](const char* k, std::uint64_t v) { e.emplace_back(k, std::to_string(v)); };
  auto d = [&](const char* k, double v) { e.emplace_back(k, fmt_double(v)); };
  u("hidden", dims.hidden);
  u("embed", dims.embed);
  u("vocab_max", vocab_max);
  u("vocab_min_count", vocab_min_count);
  u("batch_size", train.batch_size);
  d("learning_rate", train.adam.alpha);
  d("beta1", train.adam.beta1);
  d("beta2", train.adam.beta2);
  d("epsilon", train.adam.epsilon);
  d("lambda", train.adam.lambda);
  d("clip_threshold", train.clip_threshold);
  u("seed", train.seed);
  u("max_epochs", train.max_epochs);
  u("patience", train.patience);
  u("threads", train.threads);
  u("beam", beam);
  u("max_len", max_len);
  u("max_doc_tokens", max_doc_tokens);
  u("pseudo_window", pseudo_window);
  u("ngram_order", ngram.order);
  d("ngram_discount", ngram.discount);
  std::string grid;
  for (double g : cutoff_grid) grid += (grid.empty() ? "" : ",") + fmt_double(g);
  e.emplace_back("cutoff_grid", grid);
  for (const auto& p : preprocess.boilerplate_prefixes) e.emplace_back("boilerplate_prefix", p);
  d("ci_level", ci_level);
  d("significance_level", significance_level);
  u("resamples", resamples);
  return e;
}

std::uint64_t Config::hash() const {
  std::string canon;
  for (const auto& [k, v] : entries()) {
    if (unhashed_keys().count(k)) continue;
    canon += k + "=" + v + "\n";
  }
  return fnv1a64(canon);
}

EvalConfig Config::eval_config() const {
  EvalConfig e;
  e.beam = beam;
  e.max_len = max_len;
  e.max_doc_tokens = max_doc_tokens;
  e.ci_level = ci_level;
  e.significance_level = significance_level;
  e.resamples = resamples;
  e.seed = train.seed;
  return e;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("missing file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a64(ss.str());
}

// ---------------------------------------------------------------------------
// Manifest

void ExperimentManifest::save(const fs::path& path) const {
  nlohmann::ordered_json j;
  j["stage"] = stage;
  if (!regime.empty()) j["regime"] = regime;
  j["config_hash"] = hex64(config_hash);
  nlohmann::ordered_json cfg = nlohmann::ordered_json::array();
  for (const auto& [k, v] : config) cfg.push_back({k, v});
  j["config"] = cfg;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  if (!loaded_groups.empty()) j["loaded_groups"] = loaded_groups;
  if (!notes.empty()) j["notes"] = notes;
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PreconditionError("cannot write manifest " + path.string());
  out << j.dump(2) << "\n";
}

ExperimentManifest ExperimentManifest::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("missing manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    ExperimentManifest m;
    m.stage = j.at("stage").get<std::string>();
    m.regime = j.value("regime", std::string());
    m.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    for (const auto& kv : j.at("config")) {
      m.config.emplace_back(kv.at(0).get<std::string>(), kv.at(1).get<std::string>());
    }
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    if (j.contains("loaded_groups")) m.loaded_groups = j["loaded_groups"].get<std::vector<std::string>>();
    if (j.contains("notes")) m.notes = j["notes"].get<std::map<std::string, std::string>>();
    return m;
  } catch (const std::exception& e) {
    throw FormatError(path.string() + ": malformed manifest (" + e.what() + ")");
  }
}

std::string distant_stage_name(DistantMode mode) {
  return mode == DistantMode::ConnectionsOnly ? "pretrain-distant" : "pretrain-distant-all";
}

std::string train_stage_name(Regime regime) { return "train-" + regime_name(regime); }

// ---------------------------------------------------------------------------
// Experiment

Experiment::Experiment(fs::path root, Config config) : layout_{std::move(root)}, config_(std::move(config)) {}

std::string Experiment::rel(const fs::path& p) const {
  const fs::path r = p.lexically_relative(layout_.root);
  if (r.empty() || *r.begin() == "..") return p.generic_string();
  return r.generic_string();
}

void Experiment::record(const std::string& stage, const std::vector<fs::path>& inputs,
                        const std::vector<fs::path>& outputs, ExperimentManifest m) const {
  m.stage = stage;
  m.config_hash = config_.hash();
  m.config = config_.entries();
  for (const auto& p : inputs) m.inputs[rel(p)] = hex64(file_hash(p));
  for (const auto& p : outputs) m.outputs[rel(p)] = hex64(file_hash(p));
  m.save(layout_.manifest(stage));
}

void Experiment::require(const std::string& stage, const fs::path& path) const {
  const std::string name = rel(path);
  const fs::path mpath = layout_.manifest(stage);
  if (!fs::exists(mpath)) {
    throw PreconditionError("missing " + name + ": run stage '" + stage + "' first");
  }
  const auto m = ExperimentManifest::load(mpath);
  if (m.config_hash != config_.hash()) {
    throw PreconditionError("stale " + name + ": stage '" + stage + "' ran with config " +
                            hex64(m.config_hash) + ", current config is " + hex64(config_.hash()));
  }
  const auto it = m.outputs.find(name);
  if (it == m.outputs.end()) {
    throw PreconditionError("missing " + name + ": not produced by stage '" + stage + "'");
  }
  if (!fs::exists(path)) throw PreconditionError("missing " + name + " (produced by stage '" + stage + "')");
  if (hex64(file_hash(path)) != it->second) {
    throw PreconditionError("stale " + name + ": modified since stage '" + stage + "' wrote it");
  }
}

ParamStore Experiment::load_verified(const std::string& stage, const fs::path& path) const {
  require(stage, path);
  Checkpoint cp = load_checkpoint(path);
  if (cp.config_hash != config_.hash()) {
    throw PreconditionError("stale " + rel(path) + ": checkpoint config " + hex64(cp.config_hash) +
                            " differs from current config " + hex64(config_.hash()));
  }
  return std::move(cp.store);
}

std::vector<TokenizedPair> Experiment::read_split(const std::string& name) const {
  require("preprocess", layout_.split(name));
  return read_tokenized(layout_.split(name));
}

void Experiment::preprocess(const fs::path& input) {
  const auto raw = read_pairs(input);
  std::map<std::string, std::vector<TokenizedPair>> splits{{"train", {}}, {"valid", {}}, {"test", {}}};
  std::set<std::string> ids;
  for (const auto& r : raw) {
    auto it = splits.find(r.split);
    if (it == splits.end()) {
      throw FormatError(input.string() + ": pair '" + r.id + "' has split '" + r.split +
                        "', expected train, valid or test");
    }
    if (!ids.insert(r.id).second) throw FormatError(input.string() + ": duplicate pair id '" + r.id + "'");
    TokenizedPair tp = tokenize_pair(r, config_.preprocess);
    if (tp.document.empty() || tp.headline.empty()) {
      throw FormatError(input.string() + ": pair '" + r.id + "' is empty after preprocessing");
    }
    it->second.push_back(std::move(tp));
  }
  if (splits["train"].empty()) throw PreconditionError(input.string() + ": no training pairs");
  if (splits["valid"].empty()) throw PreconditionError(input.string() + ": no validation pairs");

  std::vector<Tokens> docs, heads;
  for (const auto& tp : splits["train"]) {
    docs.push_back(tp.document);
    heads.push_back(tp.headline);
  }
  const auto enc = Vocabulary::build(docs, config_.vocab_max, config_.vocab_min_count);
  const auto dec = Vocabulary::build(heads, config_.vocab_max, config_.vocab_min_count);

  fs::create_directories(layout_.root / "data");
  std::vector<fs::path> outputs;
  ExperimentManifest m;
  for (const auto& [name, pairs] : splits) {
    write_tokenized(layout_.split(name), pairs);
    outputs.push_back(layout_.split(name));
    m.notes["pairs." + name] = std::to_string(pairs.size());
  }
  enc.save(layout_.enc_vocab());
  dec.save(layout_.dec_vocab());
  outputs.push_back(layout_.enc_vocab());
  outputs.push_back(layout_.dec_vocab());
  m.notes["enc_vocab"] = std::to_string(enc.size());
  m.notes["dec_vocab"] = std::to_string(dec.size());
  record("preprocess", {input}, outputs, std::move(m));
}

void Experiment::select() {
  const auto train = read_split("train");
  const auto valid = read_split("valid");
  require("preprocess", layout_.dec_vocab());
  const auto dec = Vocabulary::load(layout_.dec_vocab());

  // In-domain: training headlines. Out-of-domain: training document sentences.
  std::vector<Ids> in_domain, valid_heads;
  std::vector<ScoredSentence> scored;
  std::vector<std::string> doc_ids;
  for (std::size_t d = 0; d < train.size(); ++d) {
    in_domain.push_back(encode_tokens(dec, train[d].headline));
    doc_ids.push_back(train[d].id);
    const auto sents = document_sentences(train[d]);
    for (std::size_t s = 0; s < sents.size(); ++s) {
      scored.push_back(ScoredSentence{d, s, encode_tokens(dec, sents[s]), 0.0});
    }
  }
  for (const auto& tp : valid) valid_heads.push_back(encode_tokens(dec, tp.headline));
  std::vector<Ids> out_domain;
  for (const auto& s : scored) out_domain.push_back(s.tokens);

  const auto lm_in = NGramLM::train(in_domain, dec.size(), config_.ngram);
  const auto lm_out = NGramLM::train(out_domain, dec.size(), config_.ngram);
  for (auto& s : scored) s.score = ce_diff_score(lm_in, lm_out, s.tokens);

  const auto selection = select_cutoff(scored, valid_heads, config_.cutoff_grid, dec.size(), config_.ngram);
  write_selection_report(layout_.selection(), scored, selection, doc_ids);

  ExperimentManifest m;
  m.notes["in_domain"] = rel(layout_.split("train")) + " headlines";
  m.notes["out_of_domain"] = rel(layout_.split("train")) + " document sentences";
  m.notes["cutoff_validation"] = rel(layout_.split("valid")) + " headlines";
  m.notes["fraction"] = fmt_double(selection.fraction);
  m.notes["retained"] = std::to_string(selection.retained.size()) + "/" + std::to_string(scored.size());
  for (std::size_t i = 0; i < selection.grid.size(); ++i) {
    m.notes["ppl@" + fmt_double(selection.grid[i])] = fmt_double(selection.perplexities[i]);
  }
  record("select", {layout_.split("train"), layout_.split("valid"), layout_.dec_vocab()},
         {layout_.selection()}, std::move(m));
}

void Experiment::pretrain_encoder() {
  const auto train = read_split("train");
  const auto valid = read_split("valid");
  require("preprocess", layout_.enc_vocab());
  const auto enc = Vocabulary::load(layout_.enc_vocab());
  std::vector<Ids> train_sents, valid_sents;
  for (const auto& tp : train) {
    for (const auto& s : document_sentences(tp)) train_sents.push_back(encode_tokens(enc, s));
  }
  for (const auto& tp : valid) {
    for (const auto& s : document_sentences(tp)) valid_sents.push_back(encode_tokens(enc, s));
  }
  const auto result = nhg::pretrain_encoder(train_sents, valid_sents, enc.size(), config_.dims, config_.train);
  save_checkpoint(layout_.encoder_ckpt(), result.encoder, config_.hash());
  const fs::path fwd_log = layout_.root / "encoder_fwd.log";
  const fs::path bwd_log = layout_.root / "encoder_bwd.log";
  result.forward_log.write(fwd_log);
  result.backward_log.write(bwd_log);
  ExperimentManifest m;
  m.notes["validation"] = result.forward_log.validation_source;
  m.notes["forward_best_ppl"] = fmt_double(result.forward_log.best_ppl());
  m.notes["backward_best_ppl"] = fmt_double(result.backward_log.best_ppl());
  record("pretrain-encoder", {layout_.split("train"), layout_.split("valid"), layout_.enc_vocab()},
         {layout_.encoder_ckpt(), fwd_log, bwd_log}, std::move(m));
}

void Experiment::pretrain_decoder() {
  const auto train = read_split("train");
  const auto valid = read_split("valid");
  require("preprocess", layout_.enc_vocab());
  require("preprocess", layout_.dec_vocab());
  require("select", layout_.selection());
  const ParamStore encoder = load_verified("pretrain-encoder", layout_.encoder_ckpt());
  const auto enc = Vocabulary::load(layout_.enc_vocab());
  const auto dec = Vocabulary::load(layout_.dec_vocab());
  const auto retained = retained_by_document(layout_.selection());

  std::vector<Ids> selected, valid_heads;
  for (const auto& tp : train) {
    auto it = retained.find(tp.id);
    if (it == retained.end()) continue;
    const auto sents = document_sentences(tp);
    for (std::size_t s : it->second) {
      if (s >= sents.size()) {
        throw FormatError(rel(layout_.selection()) + ": document '" + tp.id + "' has no sentence " +
                          std::to_string(s));
      }
      selected.push_back(encode_tokens(dec, sents[s]));
    }
  }
  if (selected.empty()) throw PreconditionError(rel(layout_.selection()) + ": no retained sentences");
  for (const auto& tp : valid) valid_heads.push_back(encode_tokens(dec, tp.headline));

  const auto result = nhg::pretrain_decoder(selected, valid_heads, dec, enc, encoder.at(groups::kEncEmbed, "E"),
                                            config_.dims, config_.train);
  save_checkpoint(layout_.decoder_ckpt(), result.decoder.store, config_.hash());
  const fs::path log = layout_.root / "decoder.log";
  result.log.write(log);
  ExperimentManifest m;
  m.notes["validation"] = result.log.validation_source;
  m.notes["selected_sentences"] = std::to_string(selected.size());
  m.notes["shared_tokens"] = std::to_string(result.shared_tokens);
  m.notes["best_ppl"] = fmt_double(result.log.best_ppl());
  record("pretrain-decoder",
         {layout_.split("train"), layout_.split("valid"), layout_.enc_vocab(), layout_.dec_vocab(),
          layout_.selection(), layout_.encoder_ckpt()},
         {layout_.decoder_ckpt(), log}, std::move(m));
}

void Experiment::pretrain_distant(DistantMode mode) {
  const bool connections = mode == DistantMode::ConnectionsOnly;
  std::optional<ParamStore> encoder, decoder;
  if (connections) {
    if (!fs::exists(layout_.encoder_ckpt())) {
      throw PreconditionError("connections-only distant pre-training needs " + rel(layout_.encoder_ckpt()) +
                              ": run stage 'pretrain-encoder' first");
    }
    if (!fs::exists(layout_.decoder_ckpt())) {
      throw PreconditionError("connections-only distant pre-training needs " + rel(layout_.decoder_ckpt()) +
                              ": run stage 'pretrain-decoder' first");
    }
    encoder = load_verified("pretrain-encoder", layout_.encoder_ckpt());
    decoder = load_verified("pretrain-decoder", layout_.decoder_ckpt());
  }
  const auto train = read_split("train");
  const auto valid = read_split("valid");
  require("preprocess", layout_.enc_vocab());
  require("preprocess", layout_.dec_vocab());
  require("select", layout_.selection());
  const auto enc = Vocabulary::load(layout_.enc_vocab());
  const auto dec = Vocabulary::load(layout_.dec_vocab());
  const auto retained = retained_by_document(layout_.selection());

  std::vector<HeadlinePair> pseudo, valid_pairs;
  for (const auto& tp : train) {
    auto it = retained.find(tp.id);
    if (it == retained.end()) continue;
    for (const auto& p : make_pseudo_pairs(tp, it->second, config_.pseudo_window)) {
      pseudo.push_back(encode_pair(p, enc, dec));
    }
  }
  for (const auto& tp : valid) valid_pairs.push_back(encode_pair(tp, enc, dec));

  const NhgShape shape{enc.size(), dec.size(), config_.dims};
  Rng rng = make_rng(config_.train.seed, distant_stage_name(mode));
  RegimeCheckpoints cps;
  if (connections) {
    cps.encoder = &*encoder;
    cps.decoder = &*decoder;
  }
  const ParamStore init =
      init_from_regime(connections ? Regime::EncDec : Regime::NoPretraining, cps, shape, rng);
  const auto result = nhg::pretrain_distant(init, pseudo, valid_pairs, mode, config_.train, config_.max_doc_tokens);

  const fs::path ckpt = connections ? layout_.distant_ckpt() : layout_.distant_all_ckpt();
  const fs::path log = layout_.root / (connections ? "distant.log" : "distant_all.log");
  save_checkpoint(ckpt, result.store, config_.hash());
  result.log.write(log);
  ExperimentManifest m;
  m.notes["pseudo_pairs"] = std::to_string(pseudo.size());
  m.notes["validation"] = result.log.validation_source;
  m.notes["best_ppl"] = fmt_double(result.log.best_ppl());
  std::vector<fs::path> inputs = {layout_.split("train"), layout_.split("valid"), layout_.enc_vocab(),
                                  layout_.dec_vocab(), layout_.selection()};
  if (connections) {
    inputs.push_back(layout_.encoder_ckpt());
    inputs.push_back(layout_.decoder_ckpt());
  }
  record(distant_stage_name(mode), inputs, {ckpt, log}, std::move(m));
}

void Experiment::train(Regime regime) {
  const auto train = read_split("train");
  const auto valid = read_split("valid");
  require("preprocess", layout_.enc_vocab());
  require("preprocess", layout_.dec_vocab());
  const auto enc = Vocabulary::load(layout_.enc_vocab());
  const auto dec = Vocabulary::load(layout_.dec_vocab());

  std::map<CheckpointRole, ParamStore> loaded;
  std::vector<fs::path> inputs = {layout_.split("train"), layout_.split("valid"), layout_.enc_vocab(),
                                  layout_.dec_vocab()};
  for (const auto& [group, role] : regime_groups(regime)) {
    if (loaded.count(role)) continue;
    std::string stage;
    fs::path path;
    switch (role) {
      case CheckpointRole::Encoder: stage = "pretrain-encoder"; path = layout_.encoder_ckpt(); break;
      case CheckpointRole::Decoder: stage = "pretrain-decoder"; path = layout_.decoder_ckpt(); break;
      case CheckpointRole::DistantAll: stage = "pretrain-distant-all"; path = layout_.distant_all_ckpt(); break;
      case CheckpointRole::EncDecDist: stage = "pretrain-distant"; path = layout_.distant_ckpt(); break;
    }
    if (!fs::exists(path)) {
      throw PreconditionError("regime '" + regime_name(regime) + "' needs " + rel(path) + ": run stage '" +
                              stage + "' first");
    }
    loaded.emplace(role, load_verified(stage, path));
    inputs.push_back(path);
  }
  RegimeCheckpoints cps;
  for (const auto& [role, store] : loaded) {
    switch (role) {
      case CheckpointRole::Encoder: cps.encoder = &store; break;
      case CheckpointRole::Decoder: cps.decoder = &store; break;
      case CheckpointRole::DistantAll: cps.distant_all = &store; break;
      case CheckpointRole::EncDecDist: cps.enc_dec_dist = &store; break;
    }
  }

  std::vector<HeadlinePair> train_pairs, valid_pairs;
  for (const auto& tp : train) train_pairs.push_back(encode_pair(tp, enc, dec));
  for (const auto& tp : valid) valid_pairs.push_back(encode_pair(tp, enc, dec));

  const NhgShape shape{enc.size(), dec.size(), config_.dims};
  Rng rng = make_rng(config_.train.seed, train_stage_name(regime));
  const ParamStore init = init_from_regime(regime, cps, shape, rng);
  const auto result = train_nhg(init, train_pairs, valid_pairs, config_.train, config_.max_doc_tokens);

  save_checkpoint(layout_.model_ckpt(regime), result.store, config_.hash());
  result.log.write(layout_.train_log(regime));
  ExperimentManifest m;
  m.regime = regime_name(regime);
  for (const auto& g : regime_group_names(regime)) m.loaded_groups.push_back(g);
  m.notes["validation"] = result.log.validation_source;
  m.notes["best_epoch"] = std::to_string(result.log.best_epoch);
  m.notes["best_ppl"] = fmt_double(result.log.best_ppl());
  record(train_stage_name(regime), inputs, {layout_.model_ckpt(regime), layout_.train_log(regime)}, std::move(m));
}

EvalReport Experiment::eval(Regime regime, const std::optional<fs::path>& baseline,
                            const std::optional<fs::path>& output) {
  const auto test = read_split("test");
  if (test.empty()) throw PreconditionError(rel(layout_.split("test")) + ": empty test set");
  require("preprocess", layout_.enc_vocab());
  require("preprocess", layout_.dec_vocab());
  const auto enc = Vocabulary::load(layout_.enc_vocab());
  const auto dec = Vocabulary::load(layout_.dec_vocab());
  const ParamStore store = load_verified(train_stage_name(regime), layout_.model_ckpt(regime));

  std::optional<EvalReport> base;
  std::string base_name;
  if (baseline) {
    base = read_report(*baseline);
    base_name = baseline->filename().string();
  }
  const auto out = evaluate_system(store, test, enc, dec, config_.eval_config(), base ? &*base : nullptr,
                                   base_name);
  const fs::path report_path = output ? *output : layout_.report(regime);
  ensure_parent(report_path);
  write_report(report_path, out.report);
  fs::path headlines_path = report_path;
  headlines_path += ".headlines";
  {
    std::ofstream h(headlines_path, std::ios::binary);
    if (!h) throw PreconditionError("cannot write " + headlines_path.string());
    for (const auto& line : out.headlines) {
      for (std::size_t i = 0; i < line.size(); ++i) h << (i ? " " : "") << line[i];
      h << "\n";
    }
  }
  ExperimentManifest m;
  m.regime = regime_name(regime);
  m.notes["ppl"] = out.report.ppl_display();
  std::vector<fs::path> inputs = {layout_.split("test"), layout_.enc_vocab(), layout_.dec_vocab(),
                                  layout_.model_ckpt(regime)};
  if (baseline) inputs.push_back(*baseline);
  record("eval-" + regime_name(regime), inputs, {report_path, headlines_path}, std::move(m));
  return out.report;
}

void Experiment::generate(const fs::path& checkpoint, const fs::path& documents, const fs::path& output,
                          std::size_t beam) {
  require("preprocess", layout_.enc_vocab());
  require("preprocess", layout_.dec_vocab());
  const auto enc = Vocabulary::load(layout_.enc_vocab());
  const auto dec = Vocabulary::load(layout_.dec_vocab());
  const Checkpoint cp = load_checkpoint(checkpoint);
  if (cp.config_hash != config_.hash()) {
    throw PreconditionError("stale " + checkpoint.string() + ": checkpoint config " + hex64(cp.config_hash) +
                            " differs from current config " + hex64(config_.hash()));
  }
  const NhgShape shape = infer_shape(cp.store);
  if (shape.enc_vocab != enc.size() || shape.dec_vocab != dec.size()) {
    throw PreconditionError(checkpoint.string() + ": vocabulary sizes do not match " + rel(layout_.enc_vocab()) +
                            " / " + rel(layout_.dec_vocab()));
  }
  std::ifstream in(documents, std::ios::binary);
  if (!in) throw PreconditionError("missing documents file " + documents.string());
  std::vector<Ids> docs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const Tokens tokens = preprocess_en(line, config_.preprocess);
    if (tokens.empty()) {
      throw FormatError(documents.string() + ":" + std::to_string(lineno) + ": empty document");
    }
    Ids ids = enc.encode(tokens);
    if (ids.size() > config_.max_doc_tokens) ids.resize(config_.max_doc_tokens);
    docs.push_back(std::move(ids));
  }
  ensure_parent(output);
  std::ofstream out(output, std::ios::binary);
  if (!out) throw PreconditionError("cannot write " + output.string());
  for (const auto& d : docs) {
    const auto result = beam_search(cp.store, d, beam, config_.max_len);
    const auto words = dec.decode(result.tokens);
    for (std::size_t i = 0; i < words.size(); ++i) out << (i ? " " : "") << words[i];
    out << "\n";
  }
}

}  // namespace nhg
