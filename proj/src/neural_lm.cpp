// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "nhg/neural_lm.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nhg {

Rng make_rng(std::uint64_t seed, std::string_view stream) {
  const std::uint64_t h = fnv1a64(stream);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

LmLayout LmLayout::encoder_forward() { return {"enc.embed", "enc.fwd", "enc.fwd", "lm.output"}; }
LmLayout LmLayout::encoder_backward() { return {"enc.embed", "enc.bwd", "enc.bwd", "lm.output"}; }
LmLayout LmLayout::decoder() {
  return {"dec.embed", "dec.gru.embed_block", "dec.gru.recurrent", "dec.output"};
}

std::size_t LMParams::vocab_size() const { return store.at(layout.embed_group, "E").rows(); }
std::size_t LMParams::hidden() const { return store.at(layout.recurrent_group, "U_z").rows(); }

LMParams init_lm(const LmLayout& layout, std::size_t vocab_size, const ModelDims& dims, Rng& rng) {
  if (vocab_size == 0 || dims.embed == 0 || dims.hidden == 0) {
    throw std::invalid_argument("init_lm: zero dimension");
  }
  LMParams p{layout, {}};
  auto& s = p.store;
  s.add(layout.embed_group, "E", glorot_init(dims.embed, vocab_size, rng));
  for (const char* n : {"W_z", "W_r", "W_h"}) {
    s.add(layout.input_group, n, glorot_init(dims.embed, dims.hidden, rng));
  }
  for (const char* n : {"U_z", "U_r", "U_h"}) {
    s.add(layout.recurrent_group, n, glorot_init(dims.hidden, dims.hidden, rng));
  }
  for (const char* n : {"b_z", "b_r", "b_h"}) s.add(layout.recurrent_group, n, Tensor({dims.hidden}));
  s.add(layout.output_group, "W", glorot_init(dims.hidden, vocab_size, rng));
  s.add(layout.output_group, "b", Tensor({vocab_size}));
  return p;
}

std::vector<Tape::Var> lm_token_losses(Binder& b, const LmLayout& layout,
                                       std::span<const int> sentence, Direction direction) {
  if (sentence.empty()) throw std::invalid_argument("language model input sentence is empty");
  Tape& t = b.tape();
  Ids seq(sentence.begin(), sentence.end());
  if (direction == Direction::Backward) std::reverse(seq.begin(), seq.end());

  const auto embed = b.table(layout.embed_group, "E");
  std::vector<Tape::Var> inputs;
  inputs.reserve(seq.size() + 1);
  inputs.push_back(b.row(embed, Vocabulary::kBos));
  for (int w : seq) inputs.push_back(b.row(embed, w));
  const auto X = t.hstack(inputs);
  const auto pz = t.matmul(b.leaf(layout.input_group, "W_z"), X);
  const auto pr = t.matmul(b.leaf(layout.input_group, "W_r"), X);
  const auto ph = t.matmul(b.leaf(layout.input_group, "W_h"), X);
  const auto rec = bind_gru_recurrent(b, layout.recurrent_group);
  const auto hidden = b.params().at(layout.recurrent_group, "U_z").rows();

  auto h = t.constant(Mat::Zero(static_cast<Eigen::Index>(hidden), 1));
  std::vector<Tape::Var> states;
  states.reserve(inputs.size());
  for (int step = 0; step < static_cast<int>(inputs.size()); ++step) {
    h = gru_step(t, rec, t.column(pz, step), t.column(pr, step), t.column(ph, step), h);
    states.push_back(h);
  }
  const auto logits = t.add_broadcast(
      t.matmul(b.leaf(layout.output_group, "W"), t.hstack(states)), b.leaf(layout.output_group, "b"));

  std::vector<Tape::Var> losses;
  losses.reserve(states.size());
  for (std::size_t step = 0; step < states.size(); ++step) {
    const int target = step < seq.size() ? seq[step] : Vocabulary::kEos;
    losses.push_back(t.cross_entropy(t.column(logits, static_cast<int>(step)), target));
  }
  return losses;
}

std::vector<double> lm_nll(const LMParams& params, std::span<const int> sentence,
                           Direction direction) {
  Tape tape;
  Binder binder(tape, params.store, nullptr);
  std::vector<double> out;
  for (const auto& v : lm_token_losses(binder, params.layout, sentence, direction)) {
    out.push_back(tape.scalar(v));
  }
  return out;
}

LmTrainResult train_lm(const LMParams& init, std::span<const Ids> train, std::span<const Ids> valid,
                       Direction direction, const std::set<std::string>& frozen,
                       const TrainConfig& config, std::string validation_source) {
  if (train.empty()) throw std::invalid_argument("train_lm: empty training corpus");
  if (valid.empty()) throw std::invalid_argument("train_lm: empty validation corpus");
  std::vector<std::size_t> lengths;
  lengths.reserve(train.size());
  for (const auto& s : train) lengths.push_back(s.size());

  const LmLayout layout = init.layout;
  const ExampleLoss loss = [&](std::size_t i, Binder& b) {
    const auto token_losses = lm_token_losses(b, layout, train[i], direction);
    return b.tape().scale(b.tape().sum(token_losses), 1.0 / static_cast<double>(token_losses.size()));
  };
  const Validator validate = [&](const ParamStore& store) {
    return perplexity(LMParams{layout, store}, valid, direction).ppl;
  };
  LmTrainResult result{LMParams{layout, {}}, {}};
  result.log.validation_source = std::move(validation_source);
  result.params.store =
      train_with_early_stopping(init.store, frozen, lengths, loss, validate, config, result.log);
  return result;
}

EncoderPretraining pretrain_encoder(std::span<const Ids> train_sentences,
                                    std::span<const Ids> valid_sentences, std::size_t enc_vocab_size,
                                    const ModelDims& dims, const TrainConfig& config) {
  EncoderPretraining out;
  Rng fwd_rng = make_rng(config.seed, "lm.encoder.forward");
  const LMParams fwd_init = init_lm(LmLayout::encoder_forward(), enc_vocab_size, dims, fwd_rng);
  auto fwd = train_lm(fwd_init, train_sentences, valid_sentences, Direction::Forward, {}, config,
                      "validation document sentences");
  out.forward = std::move(fwd.params);
  out.forward_log = std::move(fwd.log);

  Rng bwd_rng = make_rng(config.seed, "lm.encoder.backward");
  LMParams bwd_init = init_lm(LmLayout::encoder_backward(), enc_vocab_size, dims, bwd_rng);
  bwd_init.store.copy_group_from(out.forward.store, "enc.embed");
  auto bwd = train_lm(bwd_init, train_sentences, valid_sentences, Direction::Backward,
                      {"enc.embed"}, config, "validation document sentences (reversed)");
  out.backward = std::move(bwd.params);
  out.backward_log = std::move(bwd.log);

  out.encoder.copy_group_from(out.forward.store, "enc.embed");
  out.encoder.copy_group_from(out.forward.store, "enc.fwd");
  out.encoder.copy_group_from(out.backward.store, "enc.bwd");
  return out;
}

std::size_t transfer_shared_embeddings(const Vocabulary& src_vocab, const Tensor& src_embed,
                                       const Vocabulary& dst_vocab, Tensor& dst_embed,
                                       Tensor* dst_output) {
  if (src_embed.rank() != 2 || dst_embed.rank() != 2 || src_embed.cols() != dst_embed.cols()) {
    throw std::invalid_argument("transfer_shared_embeddings: embedding dimension mismatch");
  }
  if (dst_output != nullptr && (dst_output->rank() != 2 || dst_output->cols() != src_embed.cols())) {
    throw std::invalid_argument("transfer_shared_embeddings: output layer width differs from embedding size");
  }
  if (src_embed.rows() != src_vocab.size() || dst_embed.rows() != dst_vocab.size() ||
      (dst_output != nullptr && dst_output->rows() != dst_vocab.size())) {
    throw std::invalid_argument("transfer_shared_embeddings: table rows do not match vocabulary size");
  }
  std::size_t transferred = 0;
  for (int d = Vocabulary::kNumSpecials; d < static_cast<int>(dst_vocab.size()); ++d) {
    const std::string& tok = dst_vocab.token(d);
    if (!src_vocab.contains(tok)) continue;
    const int s = src_vocab.id(tok);
    dst_embed.matrix().row(d) = src_embed.matrix().row(s);
    if (dst_output != nullptr) dst_output->matrix().row(d) = src_embed.matrix().row(s);
    ++transferred;
  }
  return transferred;
}

DecoderPretraining pretrain_decoder(std::span<const Ids> selected_sentences,
                                    std::span<const Ids> valid_headlines,
                                    const Vocabulary& dec_vocab, const Vocabulary& enc_vocab,
                                    const Tensor& enc_embed, const ModelDims& dims,
                                    const TrainConfig& config) {
  DecoderPretraining out;
  Rng rng = make_rng(config.seed, "lm.decoder");
  LMParams init = init_lm(LmLayout::decoder(), dec_vocab.size(), dims, rng);
  const bool seed_output = dims.embed == dims.hidden;
  out.shared_tokens = transfer_shared_embeddings(
      enc_vocab, enc_embed, dec_vocab, init.store.at("dec.embed", "E"),
      seed_output ? &init.store.at("dec.output", "W") : nullptr);
  auto trained = train_lm(init, selected_sentences, valid_headlines, Direction::Forward, {}, config,
                          "validation headlines");
  out.decoder = std::move(trained.params);
  out.log = std::move(trained.log);
  return out;
}

PerplexityResult perplexity_from_nll(std::vector<double> nll) {
  if (nll.empty()) throw std::invalid_argument("perplexity of an empty corpus");
  double sum = 0.0;
  for (double v : nll) sum += v;
  PerplexityResult r;
  r.ppl = std::exp(sum / static_cast<double>(nll.size()));
  r.nll = std::move(nll);
  return r;
}

PerplexityResult perplexity(const LMParams& params, std::span<const Ids> corpus,
                            Direction direction) {
  std::vector<double> nll;
  for (const auto& s : corpus) {
    const auto v = lm_nll(params, s, direction);
    nll.insert(nll.end(), v.begin(), v.end());
  }
  return perplexity_from_nll(std::move(nll));
}

std::pair<double, double> ppl_confidence_interval(std::span<const double> nll, double level) {
  if (nll.size() < 2) throw std::invalid_argument("confidence interval needs at least 2 tokens");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must be in (0, 1)");
  const double n = static_cast<double>(nll.size());
  double mean = 0.0;
  for (double v : nll) mean += v;
  mean /= n;
  // Deviations are taken from the first value so that constant input has
  // exactly zero spread.
  double shift = 0.0, ss = 0.0;
  for (double v : nll) shift += v - nll[0];
  shift /= n;
  for (double v : nll) ss += (v - nll[0] - shift) * (v - nll[0] - shift);
  const double sd = std::sqrt(ss / (n - 1.0));
  const boost::math::normal_distribution<double> normal;
  const double z = boost::math::quantile(normal, 1.0 - (1.0 - level) / 2.0);
  const double half = z * sd / std::sqrt(n);
  return {std::exp(mean - half), std::exp(mean + half)};
}

}  // namespace nhg
