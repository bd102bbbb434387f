// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "nhg/trainer.hpp"

#include "nhg/corpus.hpp"
#include "nhg/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace nhg {
namespace {

constexpr std::size_t kReductionChunk = 8;

}  // namespace

double TrainLog::best_ppl() const {
  if (best_epoch == 0) return std::numeric_limits<double>::infinity();
  return epochs.at(best_epoch - 1).valid_ppl;
}

void TrainLog::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PreconditionError("cannot write training log " + path.string());
  char buf[128];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof(buf), "%zu\t%.17g\t%.17g\n", e.epoch, e.train_loss, e.valid_ppl);
    out << buf;
  }
}

TrainLog TrainLog::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("cannot read training log " + path.string());
  TrainLog log;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream f(line);
    EpochRecord e;
    if (!(f >> e.epoch >> e.train_loss >> e.valid_ppl)) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed log line");
    }
    log.epochs.push_back(e);
    if (log.best_epoch == 0 || e.valid_ppl < log.best_ppl()) log.best_epoch = log.epochs.size();
  }
  return log;
}

bool EarlyStopper::record(double ppl) {
  ++epoch_;
  if (ppl < best_) {
    best_ = ppl;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

double batch_gradient(const ParamStore& params, ParamStore& grads,
                      std::span<const std::size_t> examples, const ExampleLoss& loss,
                      std::size_t threads) {
  if (examples.empty()) throw std::invalid_argument("batch_gradient: empty batch");
  const std::size_t chunks = (examples.size() + kReductionChunk - 1) / kReductionChunk;
  std::vector<ParamStore> partial(chunks);
  std::vector<double> losses(examples.size(), 0.0);

  auto run_chunk = [&](std::size_t c) {
    partial[c] = grads.zeros_like();
    const std::size_t begin = c * kReductionChunk;
    const std::size_t end = std::min(examples.size(), begin + kReductionChunk);
    for (std::size_t i = begin; i < end; ++i) {
      Tape tape;
      Binder binder(tape, params, &partial[c]);
      const Tape::Var l = loss(examples[i], binder);
      losses[i] = tape.scalar(l);
      tape.backward(l);
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, chunks));
  if (workers == 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t c = w; c < chunks; c += workers) run_chunk(c);
      });
    }
    for (auto& th : pool) th.join();
  }

  grads.set_zero();
  for (const auto& p : partial) grads.add_scaled(p);
  const double inv = 1.0 / static_cast<double>(examples.size());
  grads.scale(inv);
  double total = 0.0;
  for (double l : losses) total += l;
  return total * inv;
}

ParamStore train_with_early_stopping(const ParamStore& init, const std::set<std::string>& frozen,
                                     std::span<const std::size_t> example_lengths,
                                     const ExampleLoss& loss, const Validator& validate,
                                     const TrainConfig& config, TrainLog& log) {
  if (example_lengths.empty()) throw std::invalid_argument("training set is empty");
  if (config.max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  config.adam.validate();

  ParamStore params = init;
  ParamStore best = init;
  ParamStore grads = params.zeros_like(frozen);
  AdamState adam;
  EarlyStopper stopper(config.patience);
  log.epochs.clear();
  log.best_epoch = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::seed_seq seq{config.seed, static_cast<std::uint64_t>(epoch)};
    Rng rng(seq);
    double loss_sum = 0.0;
    for (const auto& batch : bucket_batches(example_lengths, config.batch_size, rng)) {
      const double batch_loss = batch_gradient(params, grads, batch, loss, config.threads);
      loss_sum += batch_loss * static_cast<double>(batch.size());
      clip_global_norm(grads, config.clip_threshold);
      adam_step(params, grads, adam, config.adam);
    }
    const double ppl = validate(params);
    log.epochs.push_back(
        EpochRecord{epoch, loss_sum / static_cast<double>(example_lengths.size()), ppl});
    if (stopper.record(ppl)) best = params;
    log.best_epoch = stopper.best_epoch();
    if (stopper.should_stop()) break;
  }
  return best;
}

}  // namespace nhg
