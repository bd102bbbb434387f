// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "gradcheck.hpp"
#include "nhg/ngram.hpp"
#include "nhg/neural_lm.hpp"
#include "reference.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace nhg;

namespace {

LMParams random_lm(std::size_t V, std::size_t dim, std::uint64_t seed,
                   const LmLayout& layout = LmLayout::encoder_forward()) {
  Rng rng(seed);
  LMParams p = init_lm(layout, V, ModelDims{dim, dim}, rng);
  // Non-zero biases so that they are exercised.
  std::normal_distribution<double> n(0, 0.3);
  for (auto& g : p.store.groups()) {
    for (auto& [name, t] : g.tensors) {
      if (name[0] == 'b') {
        for (auto& v : t.values()) v = n(rng);
      }
    }
  }
  return p;
}

// A first-order Markov source with explicit probabilities, so that the
// perplexity of any sample under the true process is known exactly.
struct MarkovSource {
  std::size_t words;
  std::vector<std::vector<double>> next;  // row 0 = BOS, row k = word k-1; last column = EOS

  static MarkovSource make(std::size_t words, double stop, std::uint64_t seed) {
    Rng rng(seed);
    MarkovSource s{words, {}};
    std::gamma_distribution<double> g(0.3, 1.0);
    for (std::size_t r = 0; r <= words; ++r) {
      std::vector<double> row(words + 1, 0.0);
      double sum = 0;
      for (std::size_t w = 0; w < words; ++w) sum += row[w] = g(rng) + 1e-3;
      const double keep = r == 0 ? 1.0 : 1.0 - stop;
      for (std::size_t w = 0; w < words; ++w) row[w] *= keep / sum;
      row[words] = r == 0 ? 0.0 : stop;
      s.next.push_back(row);
    }
    return s;
  }

  std::vector<Ids> sample(std::size_t n, Rng& rng) const {
    std::vector<Ids> out;
    while (out.size() < n) {
      Ids s;
      std::size_t state = 0;
      while (true) {
        std::discrete_distribution<std::size_t> d(next[state].begin(), next[state].end());
        const std::size_t w = d(rng);
        if (w == words) break;
        s.push_back(static_cast<int>(w) + Vocabulary::kNumSpecials);
        state = w + 1;
        if (s.size() > 40) break;
      }
      if (!s.empty() && s.size() <= 40) out.push_back(s);
    }
    return out;
  }

  // Exact perplexity conditioned on non-empty sentences of length <= 40
  // is close enough to the unconditioned value for the tolerance used.
  double perplexity(const std::vector<Ids>& corpus) const {
    double nll = 0;
    std::size_t n = 0;
    for (const auto& s : corpus) {
      std::size_t state = 0;
      for (int id : s) {
        const std::size_t w = static_cast<std::size_t>(id - Vocabulary::kNumSpecials);
        nll -= std::log(next[state][w]);
        state = w + 1;
        ++n;
      }
      nll -= std::log(next[state][words]);
      ++n;
    }
    return std::exp(nll / static_cast<double>(n));
  }
};

TrainConfig small_config() {
  TrainConfig c;
  c.batch_size = 32;
  c.adam.alpha = 0.01;
  c.max_epochs = 8;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("zero output layer predicts uniformly") {
  LMParams p = random_lm(11, 6, 1);
  p.store.at("lm.output", "W").fill(0.0);
  p.store.at("lm.output", "b").fill(0.0);
  for (double v : lm_nll(p, Ids{4, 5, 6, 7}, Direction::Forward)) CHECK(v == doctest::Approx(std::log(11.0)).epsilon(1e-14));
}

TEST_CASE("backward direction equals forward on the reversed sentence") {
  const LMParams p = random_lm(13, 5, 2);
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Ids s;
    const int n = std::uniform_int_distribution<int>(1, 9)(rng);
    for (int i = 0; i < n; ++i) s.push_back(std::uniform_int_distribution<int>(1, 12)(rng));
    Ids r(s.rbegin(), s.rend());
    CHECK(lm_nll(p, s, Direction::Backward) == lm_nll(p, r, Direction::Forward));
  }
}

TEST_CASE("lm_nll matches a chained gru_cell_forward and softmax") {
  const LMParams p = random_lm(9, 4, 3);
  for (const Ids& s : {Ids{4, 7, 5}, Ids{8}, Ids{1, 1, 6, 2 + 2}}) {
    const auto got = lm_nll(p, s, Direction::Forward);
    const auto want = ref::lm_nll(p.store, "enc.embed", "enc.fwd", "enc.fwd", "lm.output", s, false);
    REQUIRE(got.size() == s.size() + 1);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
  CHECK_THROWS(lm_nll(p, Ids{4, 9}, Direction::Forward));
  CHECK_THROWS(lm_nll(p, Ids{}, Direction::Forward));
}

TEST_CASE("lm loss gradients match finite differences") {
  for (const auto& layout : {LmLayout::encoder_forward(), LmLayout::decoder()}) {
    const LMParams p = random_lm(10, 6, 4, layout);
    const Ids s = {4, 9, 5, 5, 1, 7};
    for (Direction dir : {Direction::Forward, Direction::Backward}) {
      auto graph = [&](Binder& b) {
        const auto l = lm_token_losses(b, layout, s, dir);
        return b.tape().scale(b.tape().sum(l), 1.0 / static_cast<double>(l.size()));
      };
      auto value = [&](const ParamStore& st) {
        const auto nll = lm_nll(LMParams{layout, st}, s, dir);
        double sum = 0;
        for (double v : nll) sum += v;
        return sum / static_cast<double>(nll.size());
      };
      const auto r = test::grad_check(p.store, graph, value, p.store.group_names(), 1e-5, 1e-4);
      INFO(r.worst);
      CHECK(r.max_rel_error < 1e-5);
    }
  }
}

TEST_CASE("perplexity helpers") {
  LMParams p = random_lm(7, 4, 5);
  p.store.at("lm.output", "W").fill(0.0);
  p.store.at("lm.output", "b").fill(0.0);
  const std::vector<Ids> corpus = {{4, 5}, {6}, {4, 4, 4}};
  CHECK(perplexity(p, corpus).ppl == doctest::Approx(7.0).epsilon(1e-12));
  CHECK(perplexity_from_nll(std::vector<double>(5, 0.0)).ppl == 1.0);
  CHECK_THROWS(perplexity_from_nll({}));
  CHECK_THROWS(perplexity(p, std::vector<Ids>{}));

  const LMParams q = random_lm(7, 4, 6);
  const std::vector<Ids> two = {{4, 5, 6}, {6, 4}};
  double nll = 0;
  std::size_t n = 0;
  for (const auto& s : two) {
    for (double v : ref::lm_nll(q.store, "enc.embed", "enc.fwd", "enc.fwd", "lm.output", s, false)) {
      nll += v;
      ++n;
    }
  }
  CHECK(perplexity(q, two).ppl == doctest::Approx(std::exp(nll / static_cast<double>(n))).epsilon(1e-12));
  const std::vector<Ids> swapped = {two[1], two[0]};
  CHECK(perplexity(q, swapped).ppl == doctest::Approx(perplexity(q, two).ppl).epsilon(1e-15));
}

TEST_CASE("perplexity confidence interval") {
  const auto [lo0, hi0] = ppl_confidence_interval(std::vector<double>(4, 1.5), 0.95);
  CHECK(lo0 == hi0);
  CHECK(lo0 == doctest::Approx(std::exp(1.5)));
  // mean 2, sample sd 1, z = Phi^-1(0.975) = 1.9599639845400536.
  const auto [lo, hi] = ppl_confidence_interval(std::vector<double>{1.0, 2.0, 3.0}, 0.95);
  CHECK(lo == doctest::Approx(2.3831288470678214).epsilon(1e-13));
  CHECK(hi == doctest::Approx(22.91028036537818).epsilon(1e-13));
  CHECK((std::log(lo) + std::log(hi)) / 2 == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(lo < std::exp(2.0));
  CHECK(hi > std::exp(2.0));
  CHECK_THROWS(ppl_confidence_interval(std::vector<double>{1.0}, 0.95));
  CHECK_THROWS(ppl_confidence_interval(std::vector<double>{1.0, 2.0}, 1.0));
}

TEST_CASE("early stopping with patience one returns the best epoch") {
  EarlyStopper s(1);
  CHECK(s.record(50));
  CHECK(!s.should_stop());
  CHECK(s.record(40));
  CHECK(!s.record(41));
  CHECK(s.should_stop());
  CHECK(s.best_epoch() == 2);

  // Drive the trainer with a scripted validator and keep every snapshot.
  ParamStore init;
  init.add_group("w");
  init.add("w", "x", Tensor({2}, {1.0, -1.0}));
  const std::vector<double> script = {50, 40, 41, 30};
  std::vector<ParamStore> seen;
  const ExampleLoss loss = [](std::size_t, Binder& b) {
    auto x = b.leaf("w", "x");
    return b.tape().sum_all(b.tape().mul(x, x));
  };
  const Validator validate = [&](const ParamStore& p) {
    seen.push_back(p);
    return script[seen.size() - 1];
  };
  TrainConfig cfg;
  cfg.batch_size = 2;
  TrainLog log;
  const std::vector<std::size_t> lengths = {1, 1, 1};
  const ParamStore best = train_with_early_stopping(init, {}, lengths, loss, validate, cfg, log);
  CHECK(log.epochs.size() == 3);
  CHECK(log.best_epoch == 2);
  CHECK(log.best_ppl() == 40);
  CHECK(bit_equal(best, seen[1]));
  CHECK(!bit_equal(seen[1], seen[2]));
}

TEST_CASE("frozen groups are bit-identical after training") {
  Rng rng(8);
  const MarkovSource src = MarkovSource::make(5, 0.25, 8);
  const auto train = src.sample(200, rng), valid = src.sample(30, rng);
  const LMParams init = random_lm(9, 6, 9);
  auto cfg = small_config();
  cfg.max_epochs = 2;
  const auto r = train_lm(init, train, valid, Direction::Forward, {"enc.embed"}, cfg, "valid");
  CHECK(bit_equal(r.params.store.group("enc.embed"), init.store.group("enc.embed")));
  CHECK(!bit_equal(r.params.store.group("enc.fwd"), init.store.group("enc.fwd")));
  CHECK(r.log.validation_source == "valid");
  CHECK_THROWS(train_lm(init, std::vector<Ids>{}, valid, Direction::Forward, {}, cfg, "v"));
}

TEST_CASE("a trained LM approaches the perplexity of its Markov source") {
  Rng rng(12);
  const MarkovSource src = MarkovSource::make(6, 0.2, 12);
  const auto train = src.sample(3000, rng), valid = src.sample(300, rng);
  const std::size_t V = 6 + Vocabulary::kNumSpecials;
  Rng init_rng(1);
  const LMParams init = init_lm(LmLayout::encoder_forward(), V, ModelDims{16, 16}, init_rng);
  const auto r = train_lm(init, train, valid, Direction::Forward, {}, small_config(), "valid");
  const double truth = src.perplexity(valid);
  const double got = perplexity(r.params, valid).ppl;
  INFO("model " << got << " source " << truth);
  CHECK(got <= truth * 1.15);
  CHECK(got >= truth * 0.95);
}

TEST_CASE("encoder pre-training shares frozen embeddings and is deterministic") {
  Rng rng(14);
  const MarkovSource src = MarkovSource::make(6, 0.2, 14);
  const auto train = src.sample(300, rng), valid = src.sample(40, rng);
  auto cfg = small_config();
  cfg.max_epochs = 2;
  const auto a = pretrain_encoder(train, valid, 10, ModelDims{8, 8}, cfg);
  CHECK(bit_equal(a.forward.store.group("enc.embed"), a.backward.store.group("enc.embed")));
  CHECK(!bit_equal(a.forward.store.at("enc.fwd", "U_z"), a.backward.store.at("enc.bwd", "U_z")));
  CHECK(a.encoder.group_names() == std::set<std::string>{"enc.embed", "enc.fwd", "enc.bwd"});
  CHECK(bit_equal(a.encoder.group("enc.bwd"), a.backward.store.group("enc.bwd")));
  const auto b = pretrain_encoder(train, valid, 10, ModelDims{8, 8}, cfg);
  CHECK(bit_equal(a.encoder, b.encoder));
}

TEST_CASE("shared embedding transfer") {
  Rng rng(15);
  auto table = [&](std::size_t rows, std::size_t cols) { return glorot_init(cols, rows, rng); };
  SUBCASE("disjoint vocabularies change nothing") {
    const auto src_v = Vocabulary::from_tokens(Tokens{"a", "b"});
    const auto dst_v = Vocabulary::from_tokens(Tokens{"c", "d", "e"});
    const Tensor src = table(6, 4);
    Tensor dst = table(7, 4), out = table(7, 4);
    const Tensor dst0 = dst, out0 = out;
    CHECK(transfer_shared_embeddings(src_v, src, dst_v, dst, &out) == 0);
    CHECK(bit_equal(dst, dst0));
    CHECK(bit_equal(out, out0));
  }
  SUBCASE("one shared token copies exactly one row") {
    const auto src_v = Vocabulary::from_tokens(Tokens{"a", "b"});
    const auto dst_v = Vocabulary::from_tokens(Tokens{"c", "b"});
    const Tensor src = table(6, 4);
    Tensor dst = table(6, 4);
    const Tensor dst0 = dst;
    CHECK(transfer_shared_embeddings(src_v, src, dst_v, dst, nullptr) == 1);
    for (int r = 0; r < 6; ++r) {
      const bool same = dst.matrix().row(r) == (r == 5 ? src.matrix().row(5) : dst0.matrix().row(r));
      CHECK(same);
    }
  }
  SUBCASE("random overlap of 37 tokens") {
    Tokens src_t, dst_t;
    for (int i = 0; i < 80; ++i) src_t.push_back("s" + std::to_string(i));
    for (int i = 0; i < 37; ++i) src_t.push_back("x" + std::to_string(i));
    for (int i = 0; i < 37; ++i) dst_t.push_back("x" + std::to_string(i));
    for (int i = 0; i < 50; ++i) dst_t.push_back("d" + std::to_string(i));
    std::shuffle(src_t.begin(), src_t.end(), rng);
    std::shuffle(dst_t.begin(), dst_t.end(), rng);
    const auto src_v = Vocabulary::from_tokens(src_t), dst_v = Vocabulary::from_tokens(dst_t);
    const Tensor src = table(src_v.size(), 5);
    Tensor dst = table(dst_v.size(), 5), out = table(dst_v.size(), 5);
    const Tensor dst0 = dst, out0 = out;
    const std::set<std::string> a(src_t.begin(), src_t.end()), b(dst_t.begin(), dst_t.end());
    std::vector<std::string> common;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
    CHECK(transfer_shared_embeddings(src_v, src, dst_v, dst, &out) == common.size());
    std::size_t changed_in = 0, changed_out = 0;
    for (int r = 0; r < static_cast<int>(dst_v.size()); ++r) {
      const bool shared = std::binary_search(common.begin(), common.end(), dst_v.token(r));
      changed_in += !(dst.matrix().row(r) == dst0.matrix().row(r));
      changed_out += !(out.matrix().row(r) == out0.matrix().row(r));
      if (shared) CHECK(dst.matrix().row(r) == src.matrix().row(src_v.id(dst_v.token(r))));
      if (!shared) CHECK(dst.matrix().row(r) == dst0.matrix().row(r));
    }
    CHECK(changed_in == 37);
    CHECK(changed_out == 37);
  }
  SUBCASE("dimension mismatch") {
    const auto v = Vocabulary::from_tokens(Tokens{"a"});
    const Tensor src = table(5, 4);
    Tensor dst = table(5, 3);
    CHECK_THROWS_AS(transfer_shared_embeddings(v, src, v, dst, nullptr), std::invalid_argument);
  }
}

TEST_CASE("decoder pre-training without shared words is plain random init plus training") {
  Rng rng(16);
  const MarkovSource src = MarkovSource::make(4, 0.3, 16);
  const auto sel = src.sample(100, rng), heads = src.sample(20, rng);
  const auto dec_v = Vocabulary::from_tokens(Tokens{"p", "q", "r", "s"});
  const auto enc_v = Vocabulary::from_tokens(Tokens{"x", "y"});
  Rng er(2);
  const Tensor enc_embed = glorot_init(6, enc_v.size(), er);
  auto cfg = small_config();
  cfg.max_epochs = 2;
  const auto d = pretrain_decoder(sel, heads, dec_v, enc_v, enc_embed, ModelDims{6, 6}, cfg);
  CHECK(d.shared_tokens == 0);
  CHECK(d.log.validation_source == "validation headlines");
  Rng r2 = make_rng(cfg.seed, "lm.decoder");
  const LMParams init = init_lm(LmLayout::decoder(), dec_v.size(), ModelDims{6, 6}, r2);
  const auto manual = train_lm(init, sel, heads, Direction::Forward, {}, cfg, "validation headlines");
  CHECK(bit_equal(manual.params.store, d.decoder.store));
}

TEST_CASE("selection-based decoder training beats an unfiltered corpus of equal size") {
  // Headline-like and body-like sentences from two Markov sources over the
  // same words. The n-gram filter should pick the headline-like ones.
  Rng rng(31);
  const MarkovSource head_src = MarkovSource::make(8, 0.25, 101);
  const MarkovSource body_src = MarkovSource::make(8, 0.1, 202);
  const auto headlines = head_src.sample(300, rng);
  const auto valid = head_src.sample(100, rng);
  auto candidates = head_src.sample(400, rng);
  for (auto& s : body_src.sample(400, rng)) candidates.push_back(s);
  const std::size_t V = 8 + Vocabulary::kNumSpecials;

  const auto lm_in = NGramLM::train(headlines, V);
  const auto lm_out = NGramLM::train(candidates, V);
  std::vector<ScoredSentence> scored;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    scored.push_back(ScoredSentence{i, 0, candidates[i], ce_diff_score(lm_in, lm_out, candidates[i])});
  }
  const auto selection = select_cutoff(scored, valid, std::vector<double>{0.25, 0.5}, V);
  std::vector<Ids> selected;
  std::size_t budget = 0;
  for (auto i : selection.retained) {
    selected.push_back(candidates[i]);
    budget += candidates[i].size() + 1;
  }
  std::vector<Ids> unfiltered;
  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t used = 0, k = 0; used < budget && k < order.size(); ++k) {
    unfiltered.push_back(candidates[order[k]]);
    used += candidates[order[k]].size() + 1;
  }

  auto cfg = small_config();
  cfg.max_epochs = 10;
  Rng r1(5), r2(5);
  const auto a = train_lm(init_lm(LmLayout::decoder(), V, ModelDims{12, 12}, r1), selected, valid,
                          Direction::Forward, {}, cfg, "validation headlines");
  const auto b = train_lm(init_lm(LmLayout::decoder(), V, ModelDims{12, 12}, r2), unfiltered, valid,
                          Direction::Forward, {}, cfg, "validation headlines");
  const double ppl_selected = perplexity(a.params, valid).ppl;
  const double ppl_unfiltered = perplexity(b.params, valid).ppl;
  INFO("selected " << ppl_selected << " unfiltered " << ppl_unfiltered);
  CHECK(ppl_selected < ppl_unfiltered);
}
