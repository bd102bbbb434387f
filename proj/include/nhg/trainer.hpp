// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nhg/layers.hpp"
#include "nhg/numerics.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace nhg {

struct TrainConfig {
  AdamHyper adam;
  std::size_t batch_size = 128;
  double clip_threshold = 5.0;
  std::uint64_t seed = 1;
  std::size_t max_epochs = 20;
  std::size_t patience = 1;
  std::size_t threads = 1;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_ppl = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran
  // Which corpus the validation perplexity was measured on.
  std::string validation_source;

  double best_ppl() const;
  // "epoch<TAB>train_loss<TAB>valid_ppl" per line.
  void write(const std::filesystem::path& path) const;
  static TrainLog read(const std::filesystem::path& path);
};

// Patience-based stopping on validation perplexity. Tracks the best epoch.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}
  // Records one epoch's perplexity; returns true when this epoch is the new best.
  bool record(double ppl);
  bool should_stop() const { return since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

// Builds the scalar loss of one training example on the binder's tape.
using ExampleLoss = std::function<Tape::Var(std::size_t example, Binder& binder)>;
// Validation perplexity of a parameter snapshot.
using Validator = std::function<double(const ParamStore& params)>;

// Mean loss and mean gradient over `examples`. Gradients are reduced in
// fixed chunks of examples, so the result is bit-identical for any thread
// count. `grads` must be laid out like the trainable groups; it is
// overwritten.
double batch_gradient(const ParamStore& params, ParamStore& grads,
                      std::span<const std::size_t> examples, const ExampleLoss& loss,
                      std::size_t threads);

// Adam + global-norm clipping over bucketed mini-batches with patience
// early stopping; returns the parameters of the best validation epoch.
// Groups named in `frozen` are never updated.
ParamStore train_with_early_stopping(const ParamStore& init, const std::set<std::string>& frozen,
                                     std::span<const std::size_t> example_lengths,
                                     const ExampleLoss& loss, const Validator& validate,
                                     const TrainConfig& config, TrainLog& log);

}  // namespace nhg
