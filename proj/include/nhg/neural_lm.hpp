// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nhg/corpus.hpp"
#include "nhg/trainer.hpp"

#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace nhg {

struct ModelDims {
  std::size_t embed = 256;
  std::size_t hidden = 256;
};

// Independent random stream per (seed, purpose).
Rng make_rng(std::uint64_t seed, std::string_view stream);

// Where each piece of a GRU language model lives in a ParamStore. The
// encoder LMs and the decoder LM store their tensors under the same group
// names the full model uses, so checkpoints transfer by name.
//   embed_group:     "E"  (vocab x embed)
//   input_group:     "W_z", "W_r", "W_h"  (hidden x embed)
//   recurrent_group: "U_z", "U_r", "U_h", "b_z", "b_r", "b_h"
//   output_group:    "W" (vocab x hidden), "b" (vocab)
struct LmLayout {
  std::string embed_group;
  std::string input_group;
  std::string recurrent_group;
  std::string output_group;

  static LmLayout encoder_forward();
  static LmLayout encoder_backward();
  static LmLayout decoder();
};

struct LMParams {
  LmLayout layout;
  ParamStore store;

  std::size_t vocab_size() const;
  std::size_t hidden() const;
};

enum class Direction { Forward, Backward };

// Glorot matrices, zero biases.
LMParams init_lm(const LmLayout& layout, std::size_t vocab_size, const ModelDims& dims, Rng& rng);

// Per-position -log P for the targets w_1..w_n, EOS, conditioning on BOS
// and the preceding words. Backward direction reverses the sentence first.
std::vector<Tape::Var> lm_token_losses(Binder& binder, const LmLayout& layout,
                                       std::span<const int> sentence, Direction direction);
std::vector<double> lm_nll(const LMParams& params, std::span<const int> sentence,
                           Direction direction);

struct LmTrainResult {
  LMParams params;
  TrainLog log;
};

// Patience early stopping on `valid` perplexity, best checkpoint returned.
LmTrainResult train_lm(const LMParams& init, std::span<const Ids> train, std::span<const Ids> valid,
                       Direction direction, const std::set<std::string>& frozen,
                       const TrainConfig& config, std::string validation_source);

struct EncoderPretraining {
  LMParams forward;
  LMParams backward;
  // {enc.embed, enc.fwd, enc.bwd}; output layers dropped.
  ParamStore encoder;
  TrainLog forward_log;
  TrainLog backward_log;
};

EncoderPretraining pretrain_encoder(std::span<const Ids> train_sentences,
                                    std::span<const Ids> valid_sentences, std::size_t enc_vocab_size,
                                    const ModelDims& dims, const TrainConfig& config);

// Copies the source embedding row of every non-special token present in
// both vocabularies into dst_embed (and into dst_output when given).
// Returns the number of tokens transferred.
std::size_t transfer_shared_embeddings(const Vocabulary& src_vocab, const Tensor& src_embed,
                                       const Vocabulary& dst_vocab, Tensor& dst_embed,
                                       Tensor* dst_output);

struct DecoderPretraining {
  LMParams decoder;
  TrainLog log;
  std::size_t shared_tokens = 0;
};

// Decoder LM on selected document sentences, seeded with encoder embeddings
// for shared words and early-stopped on validation headlines.
DecoderPretraining pretrain_decoder(std::span<const Ids> selected_sentences,
                                    std::span<const Ids> valid_headlines,
                                    const Vocabulary& dec_vocab, const Vocabulary& enc_vocab,
                                    const Tensor& enc_embed, const ModelDims& dims,
                                    const TrainConfig& config);

struct PerplexityResult {
  double ppl = 0.0;
  std::vector<double> nll;
};

PerplexityResult perplexity(const LMParams& params, std::span<const Ids> corpus,
                            Direction direction = Direction::Forward);
// exp(mean NLL) of a per-token NLL list.
PerplexityResult perplexity_from_nll(std::vector<double> nll);

// exp(mean +- z * sd / sqrt(N)) on per-token NLLs, z the two-sided normal
// quantile for `level`.
std::pair<double, double> ppl_confidence_interval(std::span<const double> nll, double level);

}  // namespace nhg
