// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "nhg/nhg_model.hpp"

#include "nhg/error.hpp"

#include <algorithm>
#include <stdexcept>

namespace nhg {

using namespace groups;

const std::vector<std::string>& all_groups() {
  static const std::vector<std::string> names = {
      kEncEmbed, kEncFwd, kEncBwd, kDecEmbed, kDecEmbedBlock, kDecContextBlock,
      kDecRecurrent, kDecOutput, kAttention, kInit};
  return names;
}

const std::set<std::string>& encoder_groups() {
  static const std::set<std::string> s = {kEncEmbed, kEncFwd, kEncBwd};
  return s;
}

const std::set<std::string>& decoder_lm_groups() {
  static const std::set<std::string> s = {kDecEmbed, kDecEmbedBlock, kDecRecurrent, kDecOutput};
  return s;
}

const std::set<std::string>& connecting_groups() {
  static const std::set<std::string> s = {kAttention, kInit, kDecContextBlock};
  return s;
}

ParamStore init_nhg_random(const NhgShape& shape, Rng& rng) {
  const std::size_t E = shape.dims.embed;
  const std::size_t H = shape.dims.hidden;
  if (shape.enc_vocab == 0 || shape.dec_vocab == 0 || E == 0 || H == 0) {
    throw std::invalid_argument("init_nhg_random: zero dimension");
  }
  ParamStore s;
  auto gru = [&](const char* group, std::size_t input) {
    for (const char* n : {"W_z", "W_r", "W_h"}) s.add(group, n, glorot_init(input, H, rng));
    for (const char* n : {"U_z", "U_r", "U_h"}) s.add(group, n, glorot_init(H, H, rng));
    for (const char* n : {"b_z", "b_r", "b_h"}) s.add(group, n, Tensor({H}));
  };
  s.add(kEncEmbed, "E", glorot_init(E, shape.enc_vocab, rng));
  gru(kEncFwd, E);
  gru(kEncBwd, E);
  s.add(kDecEmbed, "E", glorot_init(E, shape.dec_vocab, rng));
  for (const char* n : {"W_z", "W_r", "W_h"}) s.add(kDecEmbedBlock, n, glorot_init(E, H, rng));
  for (const char* n : {"W_z", "W_r", "W_h"}) s.add(kDecContextBlock, n, glorot_init(2 * H, H, rng));
  for (const char* n : {"U_z", "U_r", "U_h"}) s.add(kDecRecurrent, n, glorot_init(H, H, rng));
  for (const char* n : {"b_z", "b_r", "b_h"}) s.add(kDecRecurrent, n, Tensor({H}));
  s.add(kDecOutput, "W", glorot_init(H, shape.dec_vocab, rng));
  s.add(kDecOutput, "b", Tensor({shape.dec_vocab}));
  s.add(kAttention, "W_a", glorot_init(H, H, rng));
  s.add(kAttention, "U_a", glorot_init(2 * H, H, rng));
  Tensor v = glorot_init(H, 1, rng);
  s.add(kAttention, "v_a", Tensor({H}, std::vector<double>(v.values().begin(), v.values().end())));
  s.add(kInit, "W_s", glorot_init(H, H, rng));
  s.add(kInit, "b_s", Tensor({H}));
  return s;
}

NhgShape infer_shape(const ParamStore& store) {
  for (const auto& g : all_groups()) {
    if (!store.has_group(g)) throw PreconditionError("parameter store lacks group '" + g + "'");
  }
  NhgShape shape;
  const Tensor& enc = store.at(kEncEmbed, "E");
  const Tensor& dec = store.at(kDecEmbed, "E");
  shape.enc_vocab = enc.rows();
  shape.dec_vocab = dec.rows();
  shape.dims.embed = enc.cols();
  shape.dims.hidden = store.at(kDecRecurrent, "U_z").rows();
  Rng probe(0);
  // Compare against a freshly laid-out store to validate every tensor shape.
  const ParamStore reference = init_nhg_random(shape, probe);
  for (const auto& g : reference.groups()) {
    const ParamGroup& have = store.group(g.name);
    for (const auto& [n, t] : g.tensors) {
      const Tensor* h = have.find(n);
      if (h == nullptr || !h->same_shape(t)) {
        throw PreconditionError("tensor '" + g.name + "/" + n + "' missing or has wrong shape");
      }
    }
  }
  return shape;
}

// ---------------------------------------------------------------------------

EncoderGraph encode_graph(Binder& b, std::span<const int> document) {
  if (document.empty()) throw std::invalid_argument("encode: empty document");
  Tape& t = b.tape();
  const auto embed = b.table(kEncEmbed, "E");
  std::vector<Tape::Var> rows;
  rows.reserve(document.size());
  for (int id : document) rows.push_back(b.row(embed, id));
  const auto X = t.hstack(rows);
  const auto H = static_cast<Eigen::Index>(b.params().at(kEncFwd, "U_z").rows());
  const int N = static_cast<int>(document.size());

  auto run = [&](const char* group, bool reverse) {
    const auto pz = t.matmul(b.leaf(group, "W_z"), X);
    const auto pr = t.matmul(b.leaf(group, "W_r"), X);
    const auto ph = t.matmul(b.leaf(group, "W_h"), X);
    const auto rec = bind_gru_recurrent(b, group);
    std::vector<Tape::Var> states(document.size());
    auto h = t.constant(Mat::Zero(H, 1));
    for (int k = 0; k < N; ++k) {
      const int pos = reverse ? N - 1 - k : k;
      h = gru_step(t, rec, t.column(pz, pos), t.column(pr, pos), t.column(ph, pos), h);
      states[static_cast<std::size_t>(pos)] = h;
    }
    return states;
  };
  const auto fwd = run(kEncFwd, false);
  const auto bwd = run(kEncBwd, true);
  return EncoderGraph{t.concat_rows(t.hstack(fwd), t.hstack(bwd)), bwd.front(), document.size()};
}

Tape::Var init_state_graph(Binder& b, const EncoderGraph& enc) {
  Tape& t = b.tape();
  return t.tanh(t.add(t.matmul(b.leaf(kInit, "W_s"), enc.first_backward), b.leaf(kInit, "b_s")));
}

AttentionGraph bind_attention(Binder& b, const EncoderGraph& enc) {
  Tape& t = b.tape();
  AttentionGraph att;
  att.W_a = b.leaf(kAttention, "W_a");
  att.v_a = b.leaf(kAttention, "v_a");
  att.keys = t.matmul(b.leaf(kAttention, "U_a"), enc.annotations);
  att.annotations = enc.annotations;
  return att;
}

std::pair<Tape::Var, Tape::Var> attend_graph(Tape& t, const AttentionGraph& att, Tape::Var s_prev) {
  const auto energies = t.tanh(t.add_broadcast(att.keys, t.matmul(att.W_a, s_prev)));
  const auto alpha = t.softmax(t.matmul_tn(energies, att.v_a));
  return {t.matmul(att.annotations, alpha), alpha};
}

DecoderGraph bind_decoder(Binder& b) {
  DecoderGraph d;
  d.embed = b.table(kDecEmbed, "E");
  d.embed_z = b.leaf(kDecEmbedBlock, "W_z");
  d.embed_r = b.leaf(kDecEmbedBlock, "W_r");
  d.embed_h = b.leaf(kDecEmbedBlock, "W_h");
  d.context_z = b.leaf(kDecContextBlock, "W_z");
  d.context_r = b.leaf(kDecContextBlock, "W_r");
  d.context_h = b.leaf(kDecContextBlock, "W_h");
  d.recurrent = bind_gru_recurrent(b, kDecRecurrent);
  d.out_W = b.leaf(kDecOutput, "W");
  d.out_b = b.leaf(kDecOutput, "b");
  return d;
}

std::pair<Tape::Var, Tape::Var> decode_step_graph(Binder& b, const DecoderGraph& d, int y_prev,
                                                  Tape::Var s_prev, Tape::Var context) {
  Tape& t = b.tape();
  const auto x = t.hstack(std::vector<Tape::Var>{b.row(d.embed, y_prev)});
  const auto pz = t.add(t.matmul(d.embed_z, x), t.matmul(d.context_z, context));
  const auto pr = t.add(t.matmul(d.embed_r, x), t.matmul(d.context_r, context));
  const auto ph = t.add(t.matmul(d.embed_h, x), t.matmul(d.context_h, context));
  const auto s = gru_step(t, d.recurrent, pz, pr, ph, s_prev);
  return {s, t.add(t.matmul(d.out_W, s), d.out_b)};
}

std::vector<Tape::Var> nhg_token_losses(Binder& b, const HeadlinePair& pair) {
  if (pair.headline_ids.empty()) throw std::invalid_argument("nhg_loss: empty headline");
  Tape& t = b.tape();
  const auto enc = encode_graph(b, pair.document_ids);
  const auto att = bind_attention(b, enc);
  const auto dec = bind_decoder(b);

  // Teacher forcing: the previous-word projections are known up front.
  std::vector<Tape::Var> inputs;
  inputs.reserve(pair.headline_ids.size() + 1);
  inputs.push_back(b.row(dec.embed, Vocabulary::kBos));
  for (int y : pair.headline_ids) inputs.push_back(b.row(dec.embed, y));
  const auto Y = t.hstack(inputs);
  const auto ez = t.matmul(dec.embed_z, Y);
  const auto er = t.matmul(dec.embed_r, Y);
  const auto eh = t.matmul(dec.embed_h, Y);

  auto s = init_state_graph(b, enc);
  std::vector<Tape::Var> states;
  states.reserve(inputs.size());
  for (int step = 0; step < static_cast<int>(inputs.size()); ++step) {
    const auto context = attend_graph(t, att, s).first;
    const auto pz = t.add(t.column(ez, step), t.matmul(dec.context_z, context));
    const auto pr = t.add(t.column(er, step), t.matmul(dec.context_r, context));
    const auto ph = t.add(t.column(eh, step), t.matmul(dec.context_h, context));
    s = gru_step(t, dec.recurrent, pz, pr, ph, s);
    states.push_back(s);
  }
  const auto logits = t.add_broadcast(t.matmul(dec.out_W, t.hstack(states)), dec.out_b);
  std::vector<Tape::Var> losses;
  losses.reserve(states.size());
  for (std::size_t step = 0; step < states.size(); ++step) {
    const int target = step < pair.headline_ids.size() ? pair.headline_ids[step] : Vocabulary::kEos;
    losses.push_back(t.cross_entropy(t.column(logits, static_cast<int>(step)), target));
  }
  return losses;
}

// ---------------------------------------------------------------------------

EncoderAnnotations encode(const ParamStore& store, std::span<const int> document) {
  Tape t;
  Binder b(t, store, nullptr);
  const auto enc = encode_graph(b, document);
  return EncoderAnnotations{t.value(enc.annotations), t.value(enc.first_backward)};
}

Vec init_decoder_state(const ParamStore& store, const EncoderAnnotations& enc) {
  if (enc.annotations.cols() == 0) throw std::invalid_argument("init_decoder_state: no annotations");
  Tape t;
  Binder b(t, store, nullptr);
  EncoderGraph g{t.constant(enc.annotations), t.constant(enc.first_backward),
                 static_cast<std::size_t>(enc.annotations.cols())};
  return t.value(init_state_graph(b, g));
}

AttentionResult attend(const ParamStore& store, const Vec& s_prev, const EncoderAnnotations& enc) {
  Tape t;
  Binder b(t, store, nullptr);
  EncoderGraph g{t.constant(enc.annotations), t.constant(enc.first_backward),
                 static_cast<std::size_t>(enc.annotations.cols())};
  const auto att = bind_attention(b, g);
  const auto [context, alpha] = attend_graph(t, att, t.constant(s_prev));
  return AttentionResult{t.value(context), t.value(alpha)};
}

DecodeStepResult decode_step(const ParamStore& store, int y_prev, const Vec& s_prev,
                             const Vec& context) {
  Tape t;
  Binder b(t, store, nullptr);
  const auto dec = bind_decoder(b);
  const auto [s, logits] = decode_step_graph(b, dec, y_prev, t.constant(s_prev), t.constant(context));
  return DecodeStepResult{t.value(s), t.value(logits)};
}

std::vector<double> nhg_token_nll(const ParamStore& store, const HeadlinePair& pair) {
  Tape t;
  Binder b(t, store, nullptr);
  std::vector<double> out;
  for (const auto& v : nhg_token_losses(b, pair)) out.push_back(t.scalar(v));
  return out;
}

double nhg_loss(const ParamStore& store, const HeadlinePair& pair) {
  const auto nll = nhg_token_nll(store, pair);
  double s = 0.0;
  for (double v : nll) s += v;
  return s / static_cast<double>(nll.size());
}

DecoderSession::DecoderSession(const ParamStore& store, std::span<const int> document)
    : binder_(tape_, store, nullptr) {
  enc_ = encode_graph(binder_, document);
  att_ = bind_attention(binder_, enc_);
  dec_ = bind_decoder(binder_);
  initial_state_ = tape_.value(init_state_graph(binder_, enc_));
}

DecodeStepResult DecoderSession::step(int y_prev, const Vec& s_prev) {
  const auto s = tape_.constant(s_prev);
  const auto context = attend_graph(tape_, att_, s).first;
  const auto [next, logits] = decode_step_graph(binder_, dec_, y_prev, s, context);
  return DecodeStepResult{tape_.value(next), log_softmax(tape_.value(logits))};
}

// ---------------------------------------------------------------------------

const std::vector<Regime>& all_regimes() {
  static const std::vector<Regime> r = {Regime::NoPretraining, Regime::Embeddings, Regime::Encoder,
                                        Regime::Decoder,       Regime::EncDec,     Regime::DistantAll,
                                        Regime::EncDecDist};
  return r;
}

std::string regime_name(Regime regime) {
  switch (regime) {
    case Regime::NoPretraining: return "none";
    case Regime::Embeddings: return "embeddings";
    case Regime::Encoder: return "encoder";
    case Regime::Decoder: return "decoder";
    case Regime::EncDec: return "enc-dec";
    case Regime::DistantAll: return "distant-all";
    case Regime::EncDecDist: return "enc-dec-dist";
  }
  return "?";
}

Regime parse_regime(const std::string& name) {
  for (Regime r : all_regimes()) {
    if (regime_name(r) == name) return r;
  }
  throw PreconditionError("unknown regime '" + name +
                          "' (expected none, embeddings, encoder, decoder, enc-dec, distant-all, enc-dec-dist)");
}

std::string checkpoint_role_name(CheckpointRole role) {
  switch (role) {
    case CheckpointRole::Encoder: return "encoder";
    case CheckpointRole::Decoder: return "decoder";
    case CheckpointRole::DistantAll: return "distant-all";
    case CheckpointRole::EncDecDist: return "enc-dec-dist";
  }
  return "?";
}

std::vector<std::pair<std::string, CheckpointRole>> regime_groups(Regime regime) {
  using R = CheckpointRole;
  std::vector<std::pair<std::string, CheckpointRole>> out;
  auto add_encoder = [&] {
    for (const char* g : {kEncEmbed, kEncFwd, kEncBwd}) out.emplace_back(g, R::Encoder);
  };
  auto add_decoder = [&] {
    for (const char* g : {kDecEmbed, kDecEmbedBlock, kDecRecurrent, kDecOutput}) out.emplace_back(g, R::Decoder);
  };
  switch (regime) {
    case Regime::NoPretraining:
      break;
    case Regime::Embeddings:
      out.emplace_back(kEncEmbed, R::Encoder);
      out.emplace_back(kDecEmbed, R::Decoder);
      break;
    case Regime::Encoder:
      add_encoder();
      break;
    case Regime::Decoder:
      add_decoder();
      break;
    case Regime::EncDec:
      add_encoder();
      add_decoder();
      break;
    case Regime::DistantAll:
      for (const auto& g : all_groups()) out.emplace_back(g, R::DistantAll);
      break;
    case Regime::EncDecDist:
      for (const auto& g : all_groups()) out.emplace_back(g, R::EncDecDist);
      break;
  }
  return out;
}

std::set<std::string> regime_group_names(Regime regime) {
  std::set<std::string> s;
  for (const auto& [g, role] : regime_groups(regime)) s.insert(g);
  return s;
}

const ParamStore* RegimeCheckpoints::get(CheckpointRole role) const {
  switch (role) {
    case CheckpointRole::Encoder: return encoder;
    case CheckpointRole::Decoder: return decoder;
    case CheckpointRole::DistantAll: return distant_all;
    case CheckpointRole::EncDecDist: return enc_dec_dist;
  }
  return nullptr;
}

ParamStore init_from_regime(Regime regime, const RegimeCheckpoints& checkpoints,
                            const NhgShape& shape, Rng& rng) {
  ParamStore store = init_nhg_random(shape, rng);
  for (const auto& [group, role] : regime_groups(regime)) {
    const ParamStore* cp = checkpoints.get(role);
    const std::string need = "regime '" + regime_name(regime) + "' needs group '" + group +
                             "' from the " + checkpoint_role_name(role) + " checkpoint";
    if (cp == nullptr) throw PreconditionError(need + ", which was not provided");
    const ParamGroup* src = cp->find_group(group);
    if (src == nullptr) throw PreconditionError(need + ", which lacks it");
    const ParamGroup& dst = store.group(group);
    for (const auto& [n, t] : dst.tensors) {
      const Tensor* s = src->find(n);
      if (s == nullptr || !s->same_shape(t)) {
        throw PreconditionError(need + ", but tensor '" + n + "' is missing or has the wrong shape");
      }
    }
    store.copy_group_from(*cp, group);
  }
  return store;
}

HeadlinePair truncate_document(const HeadlinePair& pair, std::size_t max_doc_tokens) {
  if (max_doc_tokens == 0) throw std::invalid_argument("max_doc_tokens must be >= 1");
  if (pair.document_ids.size() <= max_doc_tokens) return pair;
  HeadlinePair out;
  out.headline_ids = pair.headline_ids;
  out.document_ids.assign(pair.document_ids.begin(),
                          pair.document_ids.begin() + static_cast<std::ptrdiff_t>(max_doc_tokens));
  for (std::size_t s : pair.sentence_starts) {
    if (s < max_doc_tokens) out.sentence_starts.push_back(s);
  }
  return out;
}

namespace {

std::vector<HeadlinePair> truncate_all(std::span<const HeadlinePair> pairs, std::size_t max_doc_tokens) {
  std::vector<HeadlinePair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(truncate_document(p, max_doc_tokens));
  return out;
}

NhgTrainResult run_training(const ParamStore& init, std::span<const HeadlinePair> train,
                            std::span<const HeadlinePair> valid, const std::set<std::string>& frozen,
                            const TrainConfig& config, std::size_t max_doc_tokens) {
  if (train.empty()) throw std::invalid_argument("NHG training set is empty");
  if (valid.empty()) throw std::invalid_argument("NHG validation set is empty");
  const auto examples = truncate_all(train, max_doc_tokens);
  std::vector<std::size_t> lengths;
  lengths.reserve(examples.size());
  for (const auto& p : examples) lengths.push_back(p.document_ids.size());
  const ExampleLoss loss = [&](std::size_t i, Binder& b) {
    const auto token_losses = nhg_token_losses(b, examples[i]);
    return b.tape().scale(b.tape().sum(token_losses), 1.0 / static_cast<double>(token_losses.size()));
  };
  const Validator validate = [&](const ParamStore& store) {
    return nhg_perplexity(store, valid, max_doc_tokens).ppl;
  };
  NhgTrainResult result;
  result.log.validation_source = "validation headlines";
  result.store = train_with_early_stopping(init, frozen, lengths, loss, validate, config, result.log);
  return result;
}

}  // namespace

PerplexityResult nhg_perplexity(const ParamStore& store, std::span<const HeadlinePair> pairs,
                                std::size_t max_doc_tokens) {
  std::vector<double> nll;
  for (const auto& p : pairs) {
    const auto v = nhg_token_nll(store, truncate_document(p, max_doc_tokens));
    nll.insert(nll.end(), v.begin(), v.end());
  }
  return perplexity_from_nll(std::move(nll));
}

NhgTrainResult train_nhg(const ParamStore& init, std::span<const HeadlinePair> train,
                         std::span<const HeadlinePair> valid, const TrainConfig& config,
                         std::size_t max_doc_tokens) {
  infer_shape(init);
  return run_training(init, train, valid, {}, config, max_doc_tokens);
}

std::vector<TokenizedPair> make_pseudo_pairs(const TokenizedPair& document,
                                             std::span<const std::size_t> retained_sentences,
                                             std::size_t window) {
  std::vector<TokenizedPair> out;
  const auto& starts = document.sentence_starts;
  const std::set<std::size_t> retained(retained_sentences.begin(), retained_sentences.end());
  for (std::size_t i = 0; i < starts.size(); ++i) {
    if (starts[i] >= window || !retained.count(i)) continue;
    const std::size_t end = i + 1 < starts.size() ? starts[i + 1] : document.document.size();
    TokenizedPair p;
    p.id = document.id + "#" + std::to_string(i);
    p.headline.assign(document.document.begin() + static_cast<std::ptrdiff_t>(starts[i]),
                      document.document.begin() + static_cast<std::ptrdiff_t>(end));
    for (std::size_t j = 0; j < starts.size(); ++j) {
      if (j == i) continue;
      const std::size_t b = starts[j];
      const std::size_t e = j + 1 < starts.size() ? starts[j + 1] : document.document.size();
      p.sentence_starts.push_back(p.document.size());
      p.document.insert(p.document.end(), document.document.begin() + static_cast<std::ptrdiff_t>(b),
                        document.document.begin() + static_cast<std::ptrdiff_t>(e));
    }
    // A one-sentence document leaves nothing to condition on.
    if (p.document.empty()) continue;
    out.push_back(std::move(p));
  }
  return out;
}

NhgTrainResult pretrain_distant(const ParamStore& init, std::span<const HeadlinePair> pseudo_pairs,
                                std::span<const HeadlinePair> valid, DistantMode mode,
                                const TrainConfig& config, std::size_t max_doc_tokens) {
  if (pseudo_pairs.empty()) throw PreconditionError("distant supervision: no pseudo-headline pairs");
  infer_shape(init);
  std::set<std::string> frozen;
  if (mode == DistantMode::ConnectionsOnly) {
    for (const auto& g : all_groups()) {
      if (!connecting_groups().count(g)) frozen.insert(g);
    }
  }
  return run_training(init, pseudo_pairs, valid, frozen, config, max_doc_tokens);
}

}  // namespace nhg
