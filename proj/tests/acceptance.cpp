// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion.

#include "gradcheck.hpp"
#include "models.hpp"
#include "ngram_oracle.hpp"
#include "nhg/checkpoint.hpp"
#include "nhg/decoding.hpp"
#include "nhg/metrics.hpp"
#include "nhg/neural_lm.hpp"
#include "nhg/ngram.hpp"
#include "nhg/pipeline.hpp"
#include "reference.hpp"
#include "rouge_cases.hpp"
#include "synthetic.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <tuple>

using namespace nhg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Tape::Var mean_of(Binder& b, const std::vector<Tape::Var>& losses) {
  return b.tape().scale(b.tape().sum(losses), 1.0 / static_cast<double>(losses.size()));
}

// ---------------------------------------------------------------------------
// 1. Gradient fidelity

Outcome gradient_fidelity() {
  const NhgShape shape{20, 20, ModelDims{8, 8}};
  Rng rng(1);
  const ParamStore s = test::random_nhg(shape, 2);
  const HeadlinePair p = test::random_pair(20, 20, 12, 5, rng);
  auto nhg_graph = [&](const HeadlinePair& pair) {
    return [&pair](Binder& b) { return mean_of(b, nhg_token_losses(b, pair)); };
  };
  auto nhg_value = [](const HeadlinePair& pair) {
    return [&pair](const ParamStore& st) { return nhg_loss(st, pair); };
  };
  std::set<std::string> every(all_groups().begin(), all_groups().end());
  const auto g_nhg = test::grad_check(s, nhg_graph(p), nhg_value(p), every, 1e-5, 1e-4);

  double lm_err = 0;
  std::size_t lm_checked = 0;
  const Ids sentence = {4, 9, 13, 5, 17, 8};
  for (const auto& layout : {LmLayout::encoder_forward(), LmLayout::encoder_backward(), LmLayout::decoder()}) {
    Rng lr(3);
    ParamStore lm = init_lm(layout, 20, ModelDims{8, 8}, lr).store;
    for (auto& g : lm.groups()) {
      for (auto& [name, t] : g.tensors) {
        if (name[0] == 'b') {
          for (auto& v : t.values()) v = std::normal_distribution<double>(0, 0.3)(lr);
        }
      }
    }
    const Direction dir = layout.recurrent_group == "enc.bwd" ? Direction::Backward : Direction::Forward;
    auto graph = [&](Binder& b) { return mean_of(b, lm_token_losses(b, layout, sentence, dir)); };
    auto value = [&](const ParamStore& st) {
      const auto nll = lm_nll(LMParams{layout, st}, sentence, dir);
      return std::accumulate(nll.begin(), nll.end(), 0.0) / static_cast<double>(nll.size());
    };
    const auto r = test::grad_check(lm, graph, value, lm.group_names(), 1e-5, 1e-4);
    lm_err = std::max(lm_err, r.max_rel_error);
    lm_checked += r.checked;
  }

  // Distant loss: a pseudo pair, connections-only and all-groups variants.
  TokenizedPair doc;
  doc.id = "d";
  Tokens words;
  for (int i = 0; i < 16; ++i) words.push_back("w" + std::to_string(i));
  for (int i = 0; i < 17; ++i) doc.document.push_back(words[static_cast<std::size_t>(i * 7 % 16)]);
  doc.sentence_starts = {0, 5, 12};
  const std::vector<std::size_t> keep = {1};
  const auto pseudo = make_pseudo_pairs(doc, keep, 100);
  const Vocabulary v = Vocabulary::from_tokens(words);
  const HeadlinePair pp = encode_pair(pseudo.at(0), v, v);
  const auto g_conn = test::grad_check(s, nhg_graph(pp), nhg_value(pp), connecting_groups(), 1e-5, 1e-4);
  const auto g_all = test::grad_check(s, nhg_graph(pp), nhg_value(pp), every, 1e-5, 1e-4);
  const double dist_err = std::max(g_conn.max_rel_error, g_all.max_rel_error);

  Outcome o;
  o.pass = g_nhg.max_rel_error < 1e-5 && lm_err < 1e-5 && dist_err < 1e-5 &&
           g_nhg.checked == s.parameter_count();
  o.detail = "max rel error nhg " + fmt("%.2e", g_nhg.max_rel_error) + " (" + std::to_string(g_nhg.checked) +
             " params), lm " + fmt("%.2e", lm_err) + " (" + std::to_string(lm_checked) + "), distant " +
             fmt("%.2e", dist_err);
  return o;
}

// ---------------------------------------------------------------------------
// 2. Beam-search oracle

Outcome beam_oracle() {
  // Six decoder ids leave four generatable ones: UNK, EOS and two words.
  const NhgShape shape{8, 6, ModelDims{4, 4}};
  Rng rng(1);
  std::size_t exact = 0;
  double worst = 0;
  for (std::uint64_t m = 0; m < 20; ++m) {
    const ParamStore s = test::random_nhg(shape, 500 + m, 3.0);
    const Ids doc = test::random_pair(8, 6, 4, 0, rng).document_ids;
    std::tuple<Ids, double, bool> best{{}, -std::numeric_limits<double>::infinity(), true};
    std::vector<Ids> frontier = {{}};
    for (std::size_t len = 0; len < 3; ++len) {
      std::vector<Ids> next;
      for (const Ids& prefix : frontier) {
        double score = 0;
        for (double v : ref::nhg_nll(s, HeadlinePair{prefix, doc, {0}})) score -= v;
        if (score > std::get<1>(best)) best = {prefix, score, true};
        for (int w : {Vocabulary::kUnk, 4, 5}) {
          Ids longer = prefix;
          longer.push_back(w);
          next.push_back(longer);
        }
      }
      frontier = std::move(next);
    }
    for (const Ids& seq : frontier) {
      auto nll = ref::nhg_nll(s, HeadlinePair{seq, doc, {0}});
      nll.pop_back();
      const double score = -std::accumulate(nll.begin(), nll.end(), 0.0);
      if (score > std::get<1>(best)) best = {seq, score, false};
    }
    const BeamResult r = beam_search(s, doc, 64, 3);
    const double err = std::abs(r.score - std::get<1>(best));
    worst = std::max(worst, err);
    exact += r.tokens == std::get<0>(best) && r.finished == std::get<2>(best) && err < 1e-9;
  }
  std::size_t dominated = 0;
  const NhgShape wide{10, 9, ModelDims{6, 6}};
  for (std::uint64_t m = 0; m < 50; ++m) {
    const ParamStore s = test::random_nhg(wide, 900 + m, 2.0);
    const Ids doc = test::random_pair(10, 9, 6, 0, rng).document_ids;
    dominated += beam_search(s, doc, 5, 6).score >= beam_search(s, doc, 1, 6).score;
  }
  Outcome o;
  o.pass = exact == 20 && dominated == 50;
  o.detail = std::to_string(exact) + "/20 exhaustive matches (max score error " + fmt("%.1e", worst) +
             "), beam-5 >= greedy in " + std::to_string(dominated) + "/50";
  return o;
}

// ---------------------------------------------------------------------------
// 3. Metric oracles

Outcome metric_oracles() {
  std::size_t ok = 0;
  for (const auto& c : test::rouge_cases()) {
    const auto cand = test::words(c.candidate), ref = test::words(c.reference);
    const RougeScore r1 = rouge_n(cand, ref, 1), rl = rouge_l(cand, ref);
    ok += r1.recall == c.r1_recall && r1.precision == c.r1_precision && rl.recall == c.rl_recall &&
          rl.precision == c.rl_precision;
  }
  const std::size_t V = 37;
  Rng rng(3);
  LMParams lm = init_lm(LmLayout::decoder(), V, ModelDims{6, 6}, rng);
  lm.store.at("dec.output", "W").fill(0.0);
  lm.store.at("dec.output", "b").fill(0.0);
  const std::vector<Ids> corpus = {{4, 5, 6}, {30, 31}, {7}};
  const double ppl = perplexity(lm, corpus).ppl;
  const auto [lo, hi] = ppl_confidence_interval(std::vector<double>(10, std::log(7.0)), 0.95);
  Outcome o;
  o.pass = ok == 20 && std::abs(ppl - static_cast<double>(V)) < 1e-6 && lo == hi;
  o.detail = std::to_string(ok) + "/20 ROUGE cases exact, uniform PPL " + fmt("%.9f", ppl) + " for V=" +
             std::to_string(V) + ", zero-variance CI width " + fmt("%g", hi - lo);
  return o;
}

// ---------------------------------------------------------------------------
// 4. Selection oracle

Outcome selection_oracle() {
  Tokens words;
  for (int i = 0; i < 40; ++i) words.push_back("w" + std::to_string(i));
  const auto head_src = synth::make_bigram_source(words, 3, 11);
  const auto body_src = synth::make_bigram_source(words, 3, 22);
  const Vocabulary vocab = Vocabulary::from_tokens(words);
  auto encode_all = [&](const std::vector<Tokens>& ss) {
    std::vector<Ids> out;
    for (const auto& s : ss) out.push_back(vocab.encode(s));
    return out;
  };
  const auto in_domain = encode_all(synth::sample_sentences(head_src, 500, 4, 12, 1));
  const auto valid = encode_all(synth::sample_sentences(head_src, 200, 4, 12, 2));
  auto candidates = encode_all(synth::sample_sentences(head_src, 1000, 4, 12, 3));
  for (auto& s : encode_all(synth::sample_sentences(body_src, 1000, 4, 12, 4))) candidates.push_back(s);
  const std::size_t V = vocab.size();

  const NGramLM lm_in = NGramLM::train(in_domain, V), lm_out = NGramLM::train(candidates, V);
  std::vector<ScoredSentence> scored;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    scored.push_back(ScoredSentence{i, 0, candidates[i], ce_diff_score(lm_in, lm_out, candidates[i])});
  }
  const auto& grid = default_cutoff_grid();
  const SelectionResult sel = select_cutoff(scored, valid, grid, V);

  // Independent evaluation of every fraction.
  oracle::NGram o_in(3, 0.7, V), o_out(3, 0.7, V);
  for (const auto& s : in_domain) o_in.add(s);
  for (const auto& s : candidates) o_out.add(s);
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& s = candidates[i];
    double sum = 0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      const std::span<const int> h(s.data(), k);
      sum += -std::log(o_in.prob(h, s[k])) + std::log(o_out.prob(h, s[k]));
    }
    ranked.emplace_back(sum / static_cast<double>(s.size()), i);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  double best_ppl = std::numeric_limits<double>::infinity(), best_fraction = 0;
  std::size_t best_n = 0;
  for (double f : grid) {
    const auto n = static_cast<std::size_t>(std::ceil(f * static_cast<double>(candidates.size())));
    oracle::NGram lm(3, 0.7, V);
    for (std::size_t k = 0; k < n; ++k) lm.add(candidates[ranked[k].second]);
    const double ppl = lm.perplexity(valid);
    if (ppl < best_ppl || (ppl == best_ppl && f > best_fraction)) {
      best_ppl = ppl;
      best_fraction = f;
      best_n = n;
    }
  }
  std::size_t same_order = 0, headline_like = 0;
  for (std::size_t k = 0; k < sel.retained.size() && k < best_n; ++k) {
    same_order += sel.retained[k] == ranked[k].second;
    headline_like += sel.retained[k] < 1000;
  }
  const double share = static_cast<double>(headline_like) / static_cast<double>(sel.retained.size());
  Outcome o;
  o.pass = sel.fraction == best_fraction && sel.retained.size() == best_n && same_order == best_n &&
           share >= 0.8;
  o.detail = "chosen fraction " + fmt("%g", sel.fraction) + " (oracle " + fmt("%g", best_fraction) + "), " +
             std::to_string(sel.retained.size()) + " retained, " + fmt("%.1f", 100 * share) +
             "% headline-like";
  return o;
}

// ---------------------------------------------------------------------------
// 5. Regime matrix

Outcome regime_matrix() {
  const NhgShape shape{20, 18, ModelDims{6, 6}};
  const ParamStore enc = test::random_nhg(shape, 11), dec = test::random_nhg(shape, 12);
  const ParamStore all = test::random_nhg(shape, 13), edd = test::random_nhg(shape, 14);
  const RegimeCheckpoints cps{&enc, &dec, &all, &edd};
  std::size_t exact = 0;
  for (Regime r : all_regimes()) {
    Rng rng(7);
    const ParamStore got = init_from_regime(r, cps, shape, rng);
    std::set<std::string> matched;
    for (const auto& g : all_groups()) {
      for (const ParamStore* cp : {&enc, &dec, &all, &edd}) {
        if (bit_equal(got.group(g), cp->group(g))) matched.insert(g);
      }
    }
    exact += matched == regime_group_names(r);
  }
  Rng rng(8);
  std::vector<HeadlinePair> pseudo, valid;
  for (int i = 0; i < 40; ++i) pseudo.push_back(test::random_pair(20, 18, 8, 3, rng));
  for (int i = 0; i < 10; ++i) valid.push_back(test::random_pair(20, 18, 8, 3, rng));
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.adam.alpha = 0.01;
  cfg.max_epochs = 2;
  cfg.patience = 2;
  const auto trained = pretrain_distant(test::random_nhg(shape, 15, 0.5), pseudo, valid,
                                        DistantMode::ConnectionsOnly, cfg, 400);
  const ParamStore init = test::random_nhg(shape, 15, 0.5);
  std::size_t frozen_ok = 0, frozen = 0, moved = 0;
  for (const auto& g : all_groups()) {
    const bool same = bit_equal(trained.store.group(g), init.group(g));
    if (connecting_groups().count(g)) {
      moved += !same;
    } else {
      ++frozen;
      frozen_ok += same;
    }
  }
  Outcome o;
  o.pass = exact == 7 && frozen_ok == frozen && moved == connecting_groups().size();
  o.detail = std::to_string(exact) + "/7 regimes match their declared group sets, " + std::to_string(frozen_ok) +
             "/" + std::to_string(frozen) + " frozen groups unchanged after connections-only training";
  return o;
}

// ---------------------------------------------------------------------------
// 6. End-to-end pre-training benefit

Config benefit_config() {
  Config c;
  c.set("hidden", "32");
  c.set("embed", "32");
  c.set("batch_size", "32");
  c.set("learning_rate", "0.002");
  c.set("max_epochs", "20");
  return c;
}

fs::path write_synthetic(const fs::path& dir, std::size_t pairs) {
  synth::PairOptions opt;
  opt.pairs = pairs;
  opt.valid = pairs / 10;
  opt.test = pairs / 10;
  fs::create_directories(dir);
  write_pairs(dir / "pairs.jsonl", synth::make_pairs(opt));
  return dir / "pairs.jsonl";
}

Outcome pretraining_benefit(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path root = work / "benefit";
  fs::remove_all(root);
  const fs::path input = write_synthetic(work / "benefit_input", 2000);
  Experiment e(root, benefit_config());
  e.preprocess(input);
  e.select();
  e.pretrain_encoder();
  e.pretrain_decoder();
  e.pretrain_distant(DistantMode::ConnectionsOnly);
  e.train(Regime::NoPretraining);
  e.train(Regime::EncDecDist);
  const TrainLog none = TrainLog::read(e.layout().train_log(Regime::NoPretraining));
  const TrainLog edd = TrainLog::read(e.layout().train_log(Regime::EncDecDist));
  const double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;

  // Converged = best validation perplexity; reached = first epoch at or below it.
  auto first_reaching = [](const TrainLog& log, double target) {
    for (const auto& r : log.epochs) {
      if (r.valid_ppl <= target) return r.epoch;
    }
    return std::numeric_limits<std::size_t>::max();
  };
  const double target = none.best_ppl();
  const std::size_t none_epochs = first_reaching(none, target);
  const std::size_t edd_epochs = first_reaching(edd, target);
  const double none_final = none.best_ppl(), edd_final = edd.best_ppl();
  Outcome o;
  o.pass = edd_epochs < none_epochs && edd_final <= none_final && minutes < 30;
  o.detail = "none converges to PPL " + fmt("%.3f", target) + " at epoch " + std::to_string(none_epochs) +
             ", enc-dec-dist reaches it at epoch " +
             (edd_epochs == std::numeric_limits<std::size_t>::max() ? std::string("never")
                                                                    : std::to_string(edd_epochs)) +
             "; final " + fmt("%.3f", edd_final) + " vs " + fmt("%.3f", none_final) + " (" +
             fmt("%.3f", 100 * (none_final - edd_final) / none_final) + "% lower), " + fmt("%.1f", minutes) +
             " min";
  return o;
}

// ---------------------------------------------------------------------------
// 7. Checkpoint round trip

Outcome checkpoint_round_trip(const fs::path& work) {
  const fs::path dir = work / "checkpoints";
  fs::create_directories(dir);
  const NhgShape shape{30, 25, ModelDims{7, 9}};
  std::size_t identical = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ParamStore s = test::random_nhg(shape, seed);
    save_checkpoint(dir / "a.ckpt", s, seed * 1000003);
    const Checkpoint cp = load_checkpoint(dir / "a.ckpt");
    save_checkpoint(dir / "b.ckpt", cp.store, cp.config_hash);
    identical += slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt") && bit_equal(cp.store, s);
  }
  const ParamStore enc = test::random_nhg(shape, 21), dec = test::random_nhg(shape, 22);
  const ParamStore all = test::random_nhg(shape, 23), edd = test::random_nhg(shape, 24);
  save_checkpoint(dir / "enc.ckpt", enc.subset(encoder_groups()), 1);
  save_checkpoint(dir / "dec.ckpt", dec.subset(decoder_lm_groups()), 1);
  save_checkpoint(dir / "all.ckpt", all, 1);
  save_checkpoint(dir / "edd.ckpt", edd, 1);
  const ParamStore le = load_checkpoint(dir / "enc.ckpt").store, ld = load_checkpoint(dir / "dec.ckpt").store;
  const ParamStore la = load_checkpoint(dir / "all.ckpt").store, lx = load_checkpoint(dir / "edd.ckpt").store;
  const RegimeCheckpoints cps{&le, &ld, &la, &lx};
  std::size_t clean = 0;
  for (Regime r : all_regimes()) {
    Rng rng(5), fresh_rng(5);
    const ParamStore got = init_from_regime(r, cps, shape, rng);
    const ParamStore fresh = init_nhg_random(shape, fresh_rng);
    bool ok = true;
    for (const auto& [g, role] : regime_groups(r)) ok &= bit_equal(got.group(g), cps.get(role)->group(g));
    const auto declared = regime_group_names(r);
    for (const auto& g : all_groups()) {
      if (!declared.count(g)) ok &= bit_equal(got.group(g), fresh.group(g));
    }
    clean += ok;
  }
  Outcome o;
  o.pass = identical == 5 && clean == 7;
  o.detail = std::to_string(identical) + "/5 save-load-save byte-identical, " + std::to_string(clean) +
             "/7 regime loads touch only declared groups";
  return o;
}

// ---------------------------------------------------------------------------
// 8. Pipeline determinism

Outcome pipeline_determinism(const fs::path& work) {
  const fs::path input = write_synthetic(work / "determinism_input", 400);
  Config c;
  c.set("hidden", "12");
  c.set("embed", "12");
  c.set("vocab_min_count", "2");
  c.set("batch_size", "32");
  c.set("learning_rate", "0.005");
  c.set("max_epochs", "3");
  c.set("resamples", "200");
  std::vector<std::vector<std::string>> reports(2);
  for (int run = 0; run < 2; ++run) {
    const fs::path root = work / ("determinism_" + std::to_string(run));
    fs::remove_all(root);
    Experiment e(root, c);
    e.preprocess(input);
    e.select();
    e.pretrain_encoder();
    e.pretrain_decoder();
    e.pretrain_distant(DistantMode::ConnectionsOnly);
    e.pretrain_distant(DistantMode::All);
    for (Regime r : all_regimes()) e.train(r);
    const fs::path baseline = e.layout().report(Regime::NoPretraining);
    e.eval(Regime::NoPretraining, std::nullopt, std::nullopt);
    for (Regime r : all_regimes()) {
      if (r != Regime::NoPretraining) e.eval(r, baseline, std::nullopt);
    }
    for (Regime r : all_regimes()) reports[static_cast<std::size_t>(run)].push_back(slurp(e.layout().report(r)));
  }
  std::size_t same = 0;
  for (std::size_t i = 0; i < reports[0].size(); ++i) same += !reports[0][i].empty() && reports[0][i] == reports[1][i];
  Outcome o;
  o.pass = same == all_regimes().size();
  o.detail = std::to_string(same) + "/" + std::to_string(all_regimes().size()) +
             " evaluation reports byte-identical across two full runs";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NHG toolkit acceptance suite"};
  std::string work = (fs::temp_directory_path() / "nhg_acceptance").string();
  std::vector<int> only;
  app.add_option("--work-dir", work, "Scratch directory");
  app.add_option("--only", only, "Run only these criteria (1-8)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient fidelity", gradient_fidelity},
      {"beam-search oracle", beam_oracle},
      {"metric oracles", metric_oracles},
      {"selection oracle", selection_oracle},
      {"regime matrix", regime_matrix},
      {"end-to-end pre-training benefit", [&] { return pretraining_benefit(work); }},
      {"checkpoint round trip", [&] { return checkpoint_round_trip(work); }},
      {"pipeline determinism", [&] { return pipeline_determinism(work); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && std::find(only.begin(), only.end(), static_cast<int>(i + 1)) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = Outcome{false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %zu %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
