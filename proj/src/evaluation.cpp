// Copyright 2026 The NHG Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "nhg/evaluation.hpp"

#include "nhg/decoding.hpp"
#include "nhg/error.hpp"
#include "nhg/neural_lm.hpp"
#include "nhg/nhg_model.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace nhg {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double mean_of(const std::vector<DocumentEval>& docs, const std::function<double(const DocumentEval&)>& f) {
  double s = 0;
  for (const auto& d : docs) s += f(d);
  return s / static_cast<double>(docs.size());
}

struct MetricView {
  const char* name;
  std::function<double(const DocumentEval&)> value;
};

// Per-document scores oriented so that larger is better.
const std::vector<MetricView>& metric_views() {
  static const std::vector<MetricView> views = {
      {"PPL", [](const DocumentEval& d) { return -d.nll_sum / static_cast<double>(d.tokens); }},
      {"R1_R", [](const DocumentEval& d) { return d.r1.recall; }},
      {"R1_P", [](const DocumentEval& d) { return d.r1.precision; }},
      {"RL_R", [](const DocumentEval& d) { return d.rl.recall; }},
      {"RL_P", [](const DocumentEval& d) { return d.rl.precision; }},
  };
  return views;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(where + ": bad number '" + s + "'");
  }
}

std::size_t parse_count(const std::string& s, const std::string& where) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw FormatError(where + ": bad count '" + s + "'");
  }
  return std::stoull(s);
}

}  // namespace

std::string EvalReport::ppl_display() const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", ppl, ppl_half_width());
  return buf;
}

std::vector<Comparison> compare_reports(const EvalReport& system, const EvalReport& baseline,
                                        const EvalConfig& config) {
  if (system.documents.size() != baseline.documents.size()) {
    throw PreconditionError("baseline report covers " + std::to_string(baseline.documents.size()) +
                            " documents, system covers " + std::to_string(system.documents.size()));
  }
  std::vector<Comparison> out;
  for (const auto& view : metric_views()) {
    std::vector<double> a, b;
    for (const auto& d : system.documents) a.push_back(view.value(d));
    for (const auto& d : baseline.documents) b.push_back(view.value(d));
    const auto sig = significance_test(a, b, config.significance_level, config.resamples, config.seed);
    out.push_back(Comparison{view.name, sig.significant, sig.p_value});
  }
  return out;
}

EvalOutput evaluate_system(const ParamStore& store, std::span<const TokenizedPair> test,
                           const Vocabulary& enc_vocab, const Vocabulary& dec_vocab,
                           const EvalConfig& config, const EvalReport* baseline,
                           const std::string& baseline_name) {
  if (test.empty()) throw PreconditionError("evaluation: empty test set");
  EvalOutput out;
  EvalReport& report = out.report;
  std::vector<double> all_nll;
  for (const auto& tp : test) {
    const HeadlinePair pair =
        truncate_document(encode_pair(tp, enc_vocab, dec_vocab), config.max_doc_tokens);
    DocumentEval doc;
    const auto nll = nhg_token_nll(store, pair);
    for (double v : nll) doc.nll_sum += v;
    doc.tokens = nll.size();
    all_nll.insert(all_nll.end(), nll.begin(), nll.end());

    const auto result = beam_search(store, pair.document_ids, config.beam, config.max_len);
    std::vector<std::string> generated;
    for (int id : result.tokens) generated.push_back(dec_vocab.token(id));
    doc.r1 = rouge_n(generated, tp.headline, 1);
    doc.rl = rouge_l(generated, tp.headline);
    out.headlines.push_back(std::move(generated));
    report.documents.push_back(doc);
  }
  report.ppl = perplexity_from_nll(all_nll).ppl;
  std::tie(report.ppl_ci_low, report.ppl_ci_high) = ppl_confidence_interval(all_nll, config.ci_level);
  report.r1_r = mean_of(report.documents, [](const DocumentEval& d) { return d.r1.recall; });
  report.r1_p = mean_of(report.documents, [](const DocumentEval& d) { return d.r1.precision; });
  report.rl_r = mean_of(report.documents, [](const DocumentEval& d) { return d.rl.recall; });
  report.rl_p = mean_of(report.documents, [](const DocumentEval& d) { return d.rl.precision; });
  if (baseline != nullptr) {
    report.baseline = baseline_name;
    report.comparisons = compare_reports(report, *baseline, config);
  }
  return out;
}

std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  os << "PPL\t" << fmt(r.ppl) << "\n";
  os << "PPL_CI_low\t" << fmt(r.ppl_ci_low) << "\n";
  os << "PPL_CI_high\t" << fmt(r.ppl_ci_high) << "\n";
  os << "PPL_TABLE\t" << r.ppl_display() << "\n";
  os << "R1_R\t" << fmt(r.r1_r) << "\n";
  os << "R1_P\t" << fmt(r.r1_p) << "\n";
  os << "RL_R\t" << fmt(r.rl_r) << "\n";
  os << "RL_P\t" << fmt(r.rl_p) << "\n";
  os << "DOCUMENTS\t" << r.documents.size() << "\n";
  for (std::size_t i = 0; i < r.documents.size(); ++i) {
    const auto& d = r.documents[i];
    os << "DOC\t" << i << "\t" << fmt(d.nll_sum) << "\t" << d.tokens << "\t" << fmt(d.r1.recall)
       << "\t" << fmt(d.r1.precision) << "\t" << fmt(d.rl.recall) << "\t" << fmt(d.rl.precision)
       << "\n";
  }
  if (!r.baseline.empty()) {
    os << "BASELINE\t" << r.baseline << "\n";
    for (const auto& c : r.comparisons) {
      os << "SIG_" << c.metric << "\t" << (c.significant ? 1 : 0) << "\t" << fmt(c.p_value) << "\n";
    }
  }
  return os.str();
}

EvalReport parse_report(const std::string& text, const std::string& source) {
  EvalReport r;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  std::size_t declared_docs = 0;
  bool have_docs = false;
  int scalars = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    std::vector<std::string> f;
    std::size_t pos = 0;
    while (true) {
      const auto tab = line.find('\t', pos);
      f.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    const std::string& key = f[0];
    auto need = [&](std::size_t n) {
      if (f.size() != n) throw FormatError(where + ": expected " + std::to_string(n) + " fields for " + key);
    };
    auto scalar = [&](double& slot) {
      need(2);
      slot = parse_double(f[1], where);
      ++scalars;
    };
    if (key == "PPL") scalar(r.ppl);
    else if (key == "PPL_CI_low") scalar(r.ppl_ci_low);
    else if (key == "PPL_CI_high") scalar(r.ppl_ci_high);
    else if (key == "PPL_TABLE") need(2);
    else if (key == "R1_R") scalar(r.r1_r);
    else if (key == "R1_P") scalar(r.r1_p);
    else if (key == "RL_R") scalar(r.rl_r);
    else if (key == "RL_P") scalar(r.rl_p);
    else if (key == "DOCUMENTS") {
      need(2);
      declared_docs = parse_count(f[1], where);
      have_docs = true;
    } else if (key == "DOC") {
      need(8);
      if (parse_count(f[1], where) != r.documents.size()) throw FormatError(where + ": document index out of order");
      DocumentEval d;
      d.nll_sum = parse_double(f[2], where);
      d.tokens = parse_count(f[3], where);
      d.r1 = {parse_double(f[4], where), parse_double(f[5], where)};
      d.rl = {parse_double(f[6], where), parse_double(f[7], where)};
      r.documents.push_back(d);
    } else if (key == "BASELINE") {
      need(2);
      r.baseline = f[1];
    } else if (key.rfind("SIG_", 0) == 0) {
      need(3);
      if (f[1] != "0" && f[1] != "1") throw FormatError(where + ": significance flag must be 0 or 1");
      r.comparisons.push_back(Comparison{key.substr(4), f[1] == "1", parse_double(f[2], where)});
    } else {
      throw FormatError(where + ": unknown field '" + key + "'");
    }
  }
  if (scalars != 7) throw FormatError(source + ": missing report fields");
  if (!have_docs || declared_docs != r.documents.size()) {
    throw FormatError(source + ": document count does not match DOC lines");
  }
  return r;
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PreconditionError("cannot write report " + path.string());
  out << format_report(report);
  if (!out) throw PreconditionError("failed writing report " + path.string());
}

EvalReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("missing report " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_report(ss.str(), path.string());
}

}  // namespace nhg
