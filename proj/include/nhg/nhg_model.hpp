// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nhg/corpus.hpp"
#include "nhg/neural_lm.hpp"
#include "nhg/trainer.hpp"

#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace nhg {

// Parameter groups of the attentive encoder-decoder:
//   enc.embed              E (enc_vocab x embed)
//   enc.fwd, enc.bwd       W_* (hidden x embed), U_* (hidden x hidden), b_*
//   dec.embed              E (dec_vocab x embed)
//   dec.gru.embed_block    W_* (hidden x embed)      previous-word input columns
//   dec.gru.context_block  W_* (hidden x 2*hidden)   attention-context input columns
//   dec.gru.recurrent      U_*, b_*
//   dec.output             W (dec_vocab x hidden), b
//   connect.attention      W_a (hidden x hidden), U_a (hidden x 2*hidden), v_a (hidden)
//   connect.init           W_s (hidden x hidden), b_s
namespace groups {
inline constexpr const char* kEncEmbed = "enc.embed";
inline constexpr const char* kEncFwd = "enc.fwd";
inline constexpr const char* kEncBwd = "enc.bwd";
inline constexpr const char* kDecEmbed = "dec.embed";
inline constexpr const char* kDecEmbedBlock = "dec.gru.embed_block";
inline constexpr const char* kDecContextBlock = "dec.gru.context_block";
inline constexpr const char* kDecRecurrent = "dec.gru.recurrent";
inline constexpr const char* kDecOutput = "dec.output";
inline constexpr const char* kAttention = "connect.attention";
inline constexpr const char* kInit = "connect.init";
}  // namespace groups

const std::vector<std::string>& all_groups();
const std::set<std::string>& encoder_groups();
const std::set<std::string>& decoder_lm_groups();
const std::set<std::string>& connecting_groups();

struct NhgShape {
  std::size_t enc_vocab = 0;
  std::size_t dec_vocab = 0;
  ModelDims dims;
};

// Glorot matrices and zero biases for every group, drawn in group order.
ParamStore init_nhg_random(const NhgShape& shape, Rng& rng);
// Throws PreconditionError when groups are missing or shapes are inconsistent.
NhgShape infer_shape(const ParamStore& store);

// ---------------------------------------------------------------------------
// Graph construction (shared by training, scoring and decoding)

struct EncoderGraph {
  Tape::Var annotations;     // (2*hidden x N)
  Tape::Var first_backward;  // backward state at the first token
  std::size_t length = 0;
};

EncoderGraph encode_graph(Binder& binder, std::span<const int> document);
Tape::Var init_state_graph(Binder& binder, const EncoderGraph& enc);

struct AttentionGraph {
  Tape::Var W_a, v_a;
  Tape::Var keys;  // U_a * annotations, computed once per document
  Tape::Var annotations;
};

AttentionGraph bind_attention(Binder& binder, const EncoderGraph& enc);
// Returns (context, alpha).
std::pair<Tape::Var, Tape::Var> attend_graph(Tape& tape, const AttentionGraph& att, Tape::Var s_prev);

struct DecoderGraph {
  Binder::TableRef embed;
  Tape::Var embed_z, embed_r, embed_h;
  Tape::Var context_z, context_r, context_h;
  GruRecurrentVars recurrent;
  Tape::Var out_W, out_b;
};

DecoderGraph bind_decoder(Binder& binder);
// Returns (s_next, logits).
std::pair<Tape::Var, Tape::Var> decode_step_graph(Binder& binder, const DecoderGraph& dec,
                                                  int y_prev, Tape::Var s_prev, Tape::Var context);

// Teacher-forced -log P of headline words followed by EOS, one var per token.
std::vector<Tape::Var> nhg_token_losses(Binder& binder, const HeadlinePair& pair);

// ---------------------------------------------------------------------------
// Value-level operations

struct EncoderAnnotations {
  Mat annotations;  // column t = [forward_t ; backward_t]
  Vec first_backward;
};

EncoderAnnotations encode(const ParamStore& store, std::span<const int> document);
// s_0 = tanh(W_s * backward_state(first token) + b_s)
Vec init_decoder_state(const ParamStore& store, const EncoderAnnotations& enc);

struct AttentionResult {
  Vec context;
  Vec alpha;
};
AttentionResult attend(const ParamStore& store, const Vec& s_prev, const EncoderAnnotations& enc);

struct DecodeStepResult {
  Vec state;
  Vec logits;
};
DecodeStepResult decode_step(const ParamStore& store, int y_prev, const Vec& s_prev,
                             const Vec& context);

double nhg_loss(const ParamStore& store, const HeadlinePair& pair);
std::vector<double> nhg_token_nll(const ParamStore& store, const HeadlinePair& pair);

// Stateful incremental decoder over one document for search.
class DecoderSession {
 public:
  DecoderSession(const ParamStore& store, std::span<const int> document);

  const Vec& initial_state() const { return initial_state_; }
  // Log-softmax over the decoder vocabulary after feeding y_prev from s_prev.
  DecodeStepResult step(int y_prev, const Vec& s_prev);

 private:
  Tape tape_;
  Binder binder_;
  EncoderGraph enc_;
  AttentionGraph att_;
  DecoderGraph dec_;
  Vec initial_state_;
};

// ---------------------------------------------------------------------------
// Regimes and training

enum class Regime { NoPretraining, Embeddings, Encoder, Decoder, EncDec, DistantAll, EncDecDist };

const std::vector<Regime>& all_regimes();
std::string regime_name(Regime regime);
Regime parse_regime(const std::string& name);

enum class CheckpointRole { Encoder, Decoder, DistantAll, EncDecDist };
std::string checkpoint_role_name(CheckpointRole role);

// (group, checkpoint it is loaded from) for every group the regime loads.
std::vector<std::pair<std::string, CheckpointRole>> regime_groups(Regime regime);
std::set<std::string> regime_group_names(Regime regime);

struct RegimeCheckpoints {
  const ParamStore* encoder = nullptr;
  const ParamStore* decoder = nullptr;
  const ParamStore* distant_all = nullptr;
  const ParamStore* enc_dec_dist = nullptr;

  const ParamStore* get(CheckpointRole role) const;
};

// Random initialization for every group, then the regime's groups copied
// from their checkpoints.
ParamStore init_from_regime(Regime regime, const RegimeCheckpoints& checkpoints,
                            const NhgShape& shape, Rng& rng);

// Document truncated to its first max_doc_tokens tokens.
HeadlinePair truncate_document(const HeadlinePair& pair, std::size_t max_doc_tokens);

PerplexityResult nhg_perplexity(const ParamStore& store, std::span<const HeadlinePair> pairs,
                                std::size_t max_doc_tokens);

struct NhgTrainResult {
  ParamStore store;
  TrainLog log;
};

// Teacher-forced training of every group, early-stopped on `valid`.
NhgTrainResult train_nhg(const ParamStore& init, std::span<const HeadlinePair> train,
                         std::span<const HeadlinePair> valid, const TrainConfig& config,
                         std::size_t max_doc_tokens);

// Every sentence starting before `window` whose index is retained becomes a
// pseudo headline; the source is the document without that sentence.
std::vector<TokenizedPair> make_pseudo_pairs(const TokenizedPair& document,
                                             std::span<const std::size_t> retained_sentences,
                                             std::size_t window = 100);

enum class DistantMode { ConnectionsOnly, All };

// Trains on pseudo pairs, early-stopping on real validation headlines.
NhgTrainResult pretrain_distant(const ParamStore& init, std::span<const HeadlinePair> pseudo_pairs,
                                std::span<const HeadlinePair> valid, DistantMode mode,
                                const TrainConfig& config, std::size_t max_doc_tokens);

}  // namespace nhg
