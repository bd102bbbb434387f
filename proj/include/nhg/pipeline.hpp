// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nhg/corpus.hpp"
#include "nhg/evaluation.hpp"
#include "nhg/neural_lm.hpp"
#include "nhg/ngram.hpp"
#include "nhg/nhg_model.hpp"
#include "nhg/trainer.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nhg {

struct Config {
  ModelDims dims;
  std::size_t vocab_max = 50000;
  std::uint64_t vocab_min_count = 3;
  TrainConfig train;
  std::size_t beam = 5;
  std::size_t max_len = 30;
  std::size_t max_doc_tokens = 400;
  std::size_t pseudo_window = 100;
  NGramOptions ngram;
  std::vector<double> cutoff_grid = default_cutoff_grid();
  PreprocessOptions preprocess = PreprocessOptions::defaults();
  double ci_level = 0.95;
  double significance_level = 0.95;
  std::size_t resamples = 1000;

  // Applies one "key = value" setting. boilerplate_prefix may repeat; the
  // first occurrence replaces the default list.
  void set(const std::string& key, const std::string& value);
  // Flat key=value text, '#' comments. Errors name file and line.
  static Config load(const std::filesystem::path& path);
  static const std::vector<std::string>& keys();

  // Canonical "key=value" listing of every setting.
  std::vector<std::pair<std::string, std::string>> entries() const;
  // Hash over the settings that shape artifacts; evaluation-only and
  // threading settings are excluded.
  std::uint64_t hash() const;
  EvalConfig eval_config() const;

 private:
  bool custom_boilerplate_ = false;
};

std::string hex64(std::uint64_t v);
std::uint64_t file_hash(const std::filesystem::path& path);

// Paths inside an experiment directory.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path split(const std::string& name) const { return root / "data" / (name + ".jsonl"); }
  std::filesystem::path enc_vocab() const { return root / "enc.vocab"; }
  std::filesystem::path dec_vocab() const { return root / "dec.vocab"; }
  std::filesystem::path selection() const { return root / "selection.tsv"; }
  std::filesystem::path encoder_ckpt() const { return root / "encoder.ckpt"; }
  std::filesystem::path decoder_ckpt() const { return root / "decoder.ckpt"; }
  std::filesystem::path distant_ckpt() const { return root / "distant.ckpt"; }
  std::filesystem::path distant_all_ckpt() const { return root / "distant_all.ckpt"; }
  std::filesystem::path model_ckpt(Regime r) const { return root / ("model_" + regime_name(r) + ".ckpt"); }
  std::filesystem::path train_log(Regime r) const { return root / ("train_" + regime_name(r) + ".log"); }
  std::filesystem::path report(Regime r) const { return root / ("eval_" + regime_name(r) + ".report"); }
  std::filesystem::path manifest(const std::string& stage) const { return root / "manifests" / (stage + ".json"); }
};

// Stage record: what a stage consumed and produced under which config.
struct ExperimentManifest {
  std::string stage;
  std::string regime;
  std::uint64_t config_hash = 0;
  std::vector<std::pair<std::string, std::string>> config;
  std::map<std::string, std::string> inputs;   // relative path -> content hash
  std::map<std::string, std::string> outputs;  // relative path -> content hash
  std::vector<std::string> loaded_groups;
  std::map<std::string, std::string> notes;

  void save(const std::filesystem::path& path) const;
  static ExperimentManifest load(const std::filesystem::path& path);
};

class Experiment {
 public:
  Experiment(std::filesystem::path root, Config config);

  const Layout& layout() const { return layout_; }
  const Config& config() const { return config_; }

  // Raw pairs with a split field of train/valid/test.
  void preprocess(const std::filesystem::path& input);
  void select();
  void pretrain_encoder();
  void pretrain_decoder();
  void pretrain_distant(DistantMode mode);
  void train(Regime regime);
  // Report for a trained regime, compared against `baseline` when given.
  EvalReport eval(Regime regime, const std::optional<std::filesystem::path>& baseline,
                  const std::optional<std::filesystem::path>& output);
  // One document per line in, one space-joined headline per line out.
  void generate(const std::filesystem::path& checkpoint, const std::filesystem::path& documents,
                const std::filesystem::path& output, std::size_t beam);

  // Throws unless `path` was produced by `stage` under the current config
  // and is unchanged since.
  void require(const std::string& stage, const std::filesystem::path& path) const;
  ParamStore load_verified(const std::string& stage, const std::filesystem::path& path) const;

 private:
  std::string rel(const std::filesystem::path& p) const;
  void record(const std::string& stage, const std::vector<std::filesystem::path>& inputs,
              const std::vector<std::filesystem::path>& outputs, ExperimentManifest m) const;
  std::vector<TokenizedPair> read_split(const std::string& name) const;

  Layout layout_;
  Config config_;
};

std::string distant_stage_name(DistantMode mode);
std::string train_stage_name(Regime regime);

}  // namespace nhg
