// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line driver for the headline generation experiments.

#include "nhg/error.hpp"
#include "nhg/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "experiment";
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Flat key = value configuration file");
  cmd->add_option("--seed", c.seed, "Random seed (overrides the config)");
  cmd->add_option("--out-dir", c.out_dir, "Experiment directory");
  cmd->add_option("--set", c.overrides, "Override a config key: key=value (repeatable)");
}

nhg::Config effective_config(const Common& c) {
  nhg::Config cfg = c.config.empty() ? nhg::Config{} : nhg::Config::load(c.config);
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw nhg::PreconditionError("--set expects key=value, got '" + o + "'");
    cfg.set(o.substr(0, eq), o.substr(eq + 1));
  }
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural headline generation experiments"};
  app.require_subcommand(1);
  Common common;

  std::string input;
  auto* pre = app.add_subcommand("preprocess", "Tokenize pairs, write splits and vocabularies");
  pre->add_option("--input", input, "JSONL pairs with a split field")->required();
  add_common(pre, common);

  auto* sel = app.add_subcommand("select", "Score document sentences and choose the retention cutoff");
  add_common(sel, common);

  auto* penc = app.add_subcommand("pretrain-encoder", "Train forward and backward encoder language models");
  add_common(penc, common);

  auto* pdec = app.add_subcommand("pretrain-decoder", "Train the decoder language model on selected sentences");
  add_common(pdec, common);

  std::string mode = "connections";
  auto* pdist = app.add_subcommand("pretrain-distant", "Train on pseudo headlines from document sentences");
  pdist->add_option("--mode", mode, "connections: train only the connecting layers; all: train everything")
      ->check(CLI::IsMember({"connections", "all"}));
  add_common(pdist, common);

  std::string regime = "none";
  auto* tr = app.add_subcommand("train", "Train a headline model under a pre-training regime");
  tr->add_option("--regime", regime, "none, embeddings, encoder, decoder, enc-dec, distant-all, enc-dec-dist");
  add_common(tr, common);

  std::string checkpoint, documents, output;
  std::optional<std::size_t> beam;
  auto* gen = app.add_subcommand("generate", "Generate one headline per input document line");
  gen->add_option("--checkpoint", checkpoint, "Model checkpoint (default: the --regime model)");
  gen->add_option("--regime", regime, "Regime whose trained model to use");
  gen->add_option("--input", documents, "Documents, one per line")->required();
  gen->add_option("--output", output, "Headlines file")->required();
  gen->add_option("--beam", beam, "Beam size (overrides the config)");
  add_common(gen, common);

  std::string baseline, report;
  auto* ev = app.add_subcommand("eval", "Perplexity, ROUGE and significance on the test split");
  ev->add_option("--regime", regime, "Regime whose trained model to evaluate");
  ev->add_option("--baseline", baseline, "Report of a system to compare against");
  ev->add_option("--report", report, "Output report path (default: <out-dir>/eval_<regime>.report)");
  add_common(ev, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    nhg::Config cfg = effective_config(common);
    if (beam) cfg.set("beam", std::to_string(*beam));
    nhg::Experiment ex(common.out_dir, cfg);
    if (*pre) {
      ex.preprocess(input);
    } else if (*sel) {
      ex.select();
    } else if (*penc) {
      ex.pretrain_encoder();
    } else if (*pdec) {
      ex.pretrain_decoder();
    } else if (*pdist) {
      ex.pretrain_distant(mode == "all" ? nhg::DistantMode::All : nhg::DistantMode::ConnectionsOnly);
    } else if (*tr) {
      ex.train(nhg::parse_regime(regime));
    } else if (*gen) {
      const auto r = nhg::parse_regime(regime);
      const std::filesystem::path cp = checkpoint.empty() ? ex.layout().model_ckpt(r) : std::filesystem::path(checkpoint);
      ex.generate(cp, documents, output, cfg.beam);
    } else if (*ev) {
      std::optional<std::filesystem::path> base, out;
      if (!baseline.empty()) base = baseline;
      if (!report.empty()) out = report;
      const auto rep = ex.eval(nhg::parse_regime(regime), base, out);
      std::cout << "PPL " << rep.ppl_display() << "  R1 " << rep.r1_r << "/" << rep.r1_p << "  RL " << rep.rl_r
                << "/" << rep.rl_p << "\n";
    }
  } catch (const nhg::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const nhg::PreconditionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
