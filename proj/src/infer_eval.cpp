#include "samukd/infer_eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "samukd/error.hpp"

namespace samukd {

void BeamOptions::validate() const {
  if (beam == 0) throw ConfigError("eval: beam must be >= 1");
  if (max_len == 0) throw ConfigError("eval: max_len must be >= 1");
}

namespace {

std::vector<int> with_bos(int bos, const std::vector<int>& tokens) {
  std::vector<int> p;
  p.reserve(tokens.size() + 1);
  p.push_back(bos);
  p.insert(p.end(), tokens.begin(), tokens.end());
  return p;
}

double rank_score(const BeamHypothesis& h, bool normalize) {
  if (!normalize || h.tokens.empty()) return h.log_prob;
  return h.log_prob / static_cast<double>(h.tokens.size());
}

// Higher score first; ties broken on the token sequence so runs are stable.
bool better(const BeamHypothesis& a, const BeamHypothesis& b, bool normalize) {
  const double sa = rank_score(a, normalize);
  const double sb = rank_score(b, normalize);
  if (sa != sb) return sa > sb;
  return a.tokens < b.tokens;
}

}  // namespace

BeamHypothesis greedy_search(const NextTokenScorer& scorer, std::size_t max_len, int bos, int eos) {
  if (max_len == 0) throw ConfigError("eval: max_len must be >= 1");
  BeamHypothesis h;
  while (!h.finished) {
    const auto lp = scorer(with_bos(bos, h.tokens));
    const auto best = std::max_element(lp.begin(), lp.end()) - lp.begin();
    h.tokens.push_back(static_cast<int>(best));
    h.log_prob += lp[static_cast<std::size_t>(best)];
    h.finished = h.tokens.back() == eos || h.tokens.size() == max_len;
  }
  return h;
}

BeamHypothesis beam_search(const NextTokenScorer& scorer, const BeamOptions& options) {
  options.validate();
  const bool norm = options.length_normalize;
  std::vector<BeamHypothesis> pool;
  if (options.include_greedy) {
    pool.push_back(greedy_search(scorer, options.max_len, options.bos, options.eos));
  }
  std::vector<BeamHypothesis> live{BeamHypothesis{}};
  for (std::size_t step = 0; step < options.max_len && !live.empty(); ++step) {
    std::vector<BeamHypothesis> candidates;
    for (const auto& h : live) {
      const auto lp = scorer(with_bos(options.bos, h.tokens));
      for (std::size_t v = 0; v < lp.size(); ++v) {
        BeamHypothesis c = h;
        c.tokens.push_back(static_cast<int>(v));
        c.log_prob += lp[v];
        c.finished = static_cast<int>(v) == options.eos || c.tokens.size() == options.max_len;
        candidates.push_back(std::move(c));
      }
    }
    const std::size_t keep = std::min(options.beam, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(),
                      [norm](const auto& a, const auto& b) { return better(a, b, norm); });
    live.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      if (candidates[i].finished) {
        pool.push_back(std::move(candidates[i]));
      } else {
        live.push_back(std::move(candidates[i]));
      }
    }
    if (!norm && !pool.empty() && !live.empty()) {
      const auto best_pool = std::max_element(pool.begin(), pool.end(), [](const auto& a, const auto& b) {
        return a.log_prob < b.log_prob;
      });
      const auto best_live = std::max_element(live.begin(), live.end(), [](const auto& a, const auto& b) {
        return a.log_prob < b.log_prob;
      });
      if (best_pool->log_prob >= best_live->log_prob) break;
    }
  }
  return *std::min_element(pool.begin(), pool.end(),
                           [norm](const auto& a, const auto& b) { return better(a, b, norm); });
}

std::vector<int> beam_search_translate(TranslationModel& model, std::span<const float> waveform,
                                       const BeamOptions& options) {
  BeamOptions opts = options;
  opts.max_len = std::min(opts.max_len, model.decoder().config().max_target_len);
  Tape tape(false);
  Var enc = model.encoder().encode(tape, waveform, {});
  const auto memory = model.decoder().prepare_memory(tape, enc);
  NextTokenScorer scorer = [&](std::span<const int> prefix) {
    Tape step(false);
    Var lp = model.decoder().forward(step, memory, prefix);
    const auto row = lp.value().row(lp.value().rows() - 1);
    return std::vector<double>(row.begin(), row.end());
  };
  auto best = beam_search(scorer, opts);
  if (!best.tokens.empty() && best.tokens.back() == opts.eos) best.tokens.pop_back();
  return best.tokens;
}

// --- metrics ---------------------------------------------------------------

Sentence tokenize(const std::string& text) {
  std::istringstream in(text);
  Sentence out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Sentence& s, std::size_t n) {
  NgramCounts out;
  if (s.size() < n) return out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    ++out[std::vector<std::string>(s.begin() + static_cast<std::ptrdiff_t>(i),
                                   s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

std::size_t clipped_matches(const NgramCounts& hyp, const NgramCounts& ref) {
  std::size_t m = 0;
  for (const auto& [g, c] : hyp) {
    const auto it = ref.find(g);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

void check_corpus(const std::vector<Sentence>& hyps, const std::vector<Sentence>& refs) {
  if (hyps.empty()) throw DataError("metric: empty corpus");
  if (hyps.size() != refs.size()) {
    throw DataError("metric: " + std::to_string(hyps.size()) + " hypotheses vs " +
                    std::to_string(refs.size()) + " references");
  }
}

std::size_t lcs_length(const Sentence& a, const Sentence& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double score_bleu4(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references) {
  check_corpus(hypotheses, references);
  std::size_t hyp_len = 0, ref_len = 0;
  std::array<std::size_t, 4> match{}, total{};
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    hyp_len += hypotheses[i].size();
    ref_len += references[i].size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto h = ngrams(hypotheses[i], n);
      for (const auto& [g, c] : h) total[n - 1] += c;
      match[n - 1] += clipped_matches(h, ngrams(references[i], n));
    }
  }
  if (hyp_len == 0 || match[0] == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    const double p = match[n] == 0 ? 1.0 / static_cast<double>(total[n] + 1)
                                   : static_cast<double>(match[n]) / static_cast<double>(total[n]);
    log_sum += std::log(p);
  }
  const double bp =
      hyp_len > ref_len ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return 100.0 * bp * std::exp(log_sum / 4.0);
}

double score_rouge_l(const std::vector<Sentence>& hypotheses,
                     const std::vector<Sentence>& references) {
  check_corpus(hypotheses, references);
  double sum = 0.0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto lcs = static_cast<double>(lcs_length(hypotheses[i], references[i]));
    if (lcs == 0.0) continue;
    const double p = lcs / static_cast<double>(hypotheses[i].size());
    const double r = lcs / static_cast<double>(references[i].size());
    sum += 2.0 * p * r / (p + r);
  }
  return sum / static_cast<double>(hypotheses.size());
}

double score_google_bleu(const std::vector<Sentence>& hypotheses,
                         const std::vector<Sentence>& references) {
  check_corpus(hypotheses, references);
  std::size_t matches = 0, hyp_total = 0, ref_total = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto h = ngrams(hypotheses[i], n);
      const auto r = ngrams(references[i], n);
      for (const auto& [g, c] : h) hyp_total += c;
      for (const auto& [g, c] : r) ref_total += c;
      matches += clipped_matches(h, r);
    }
  }
  if (hyp_total == 0 || ref_total == 0) return 0.0;
  return std::min(static_cast<double>(matches) / static_cast<double>(hyp_total),
                  static_cast<double>(matches) / static_cast<double>(ref_total));
}

double score_nist(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references,
                  std::size_t max_n) {
  check_corpus(hypotheses, references);
  // Reference n-gram counts over the whole corpus give each n-gram's
  // information weight: log2(count(prefix) / count(ngram)).
  std::vector<NgramCounts> ref_counts(max_n + 1);
  std::size_t ref_words = 0, hyp_words = 0;
  for (const auto& r : references) {
    ref_words += r.size();
    for (std::size_t n = 1; n <= max_n; ++n) {
      for (const auto& [g, c] : ngrams(r, n)) ref_counts[n][g] += c;
    }
  }
  for (const auto& h : hypotheses) hyp_words += h.size();
  if (hyp_words == 0 || ref_words == 0) return 0.0;
  auto info = [&](const std::vector<std::string>& g) {
    const double count = static_cast<double>(ref_counts[g.size()].at(g));
    double prefix = static_cast<double>(ref_words);
    if (g.size() > 1) {
      prefix = static_cast<double>(
          ref_counts[g.size() - 1].at(std::vector<std::string>(g.begin(), g.end() - 1)));
    }
    return std::log2(prefix / count);
  };
  double score = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    double gained = 0.0;
    std::size_t hyp_ngrams = 0;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
      const auto h = ngrams(hypotheses[i], n);
      const auto r = ngrams(references[i], n);
      for (const auto& [g, c] : h) {
        hyp_ngrams += c;
        const auto it = r.find(g);
        if (it != r.end()) gained += static_cast<double>(std::min(c, it->second)) * info(g);
      }
    }
    if (hyp_ngrams > 0) score += gained / static_cast<double>(hyp_ngrams);
  }
  // The penalty falls to 0.5 when the system is 2/3 of the reference length.
  const double beta = std::log(0.5) / std::pow(std::log(1.5), 2.0);
  const double ratio =
      std::min(1.0, static_cast<double>(hyp_words) / static_cast<double>(ref_words));
  return score * std::exp(beta * std::pow(std::log(ratio), 2.0));
}

double score_meteor_lite(const std::vector<Sentence>& hypotheses,
                         const std::vector<Sentence>& references) {
  check_corpus(hypotheses, references);
  double sum = 0.0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto& h = hypotheses[i];
    const auto& r = references[i];
    // Each hypothesis word takes the first unused reference occurrence.
    std::vector<bool> used(r.size(), false);
    std::vector<std::ptrdiff_t> align(h.size(), -1);
    std::size_t m = 0;
    for (std::size_t a = 0; a < h.size(); ++a) {
      for (std::size_t b = 0; b < r.size(); ++b) {
        if (!used[b] && h[a] == r[b]) {
          used[b] = true;
          align[a] = static_cast<std::ptrdiff_t>(b);
          ++m;
          break;
        }
      }
    }
    if (m == 0) continue;
    std::size_t chunks = 0;
    std::ptrdiff_t prev_h = -2, prev_r = -2;
    for (std::size_t a = 0; a < h.size(); ++a) {
      if (align[a] < 0) continue;
      const auto ha = static_cast<std::ptrdiff_t>(a);
      if (!(ha == prev_h + 1 && align[a] == prev_r + 1)) ++chunks;
      prev_h = ha;
      prev_r = align[a];
    }
    const double p = static_cast<double>(m) / static_cast<double>(h.size());
    const double rc = static_cast<double>(m) / static_cast<double>(r.size());
    const double fmean = 10.0 * p * rc / (rc + 9.0 * p);
    const double penalty = 0.5 * std::pow(static_cast<double>(chunks) / static_cast<double>(m), 3.0);
    sum += fmean * (1.0 - penalty);
  }
  return sum / static_cast<double>(hypotheses.size());
}

AuxiliaryScores score_auxiliary(const std::vector<Sentence>& hypotheses,
                                const std::vector<Sentence>& references) {
  return {score_google_bleu(hypotheses, references), score_nist(hypotheses, references),
          score_meteor_lite(hypotheses, references)};
}

std::map<std::string, double> score_all(const std::vector<Sentence>& hypotheses,
                                        const std::vector<Sentence>& references) {
  const auto aux = score_auxiliary(hypotheses, references);
  return {{"bleu4", score_bleu4(hypotheses, references)},
          {"google_bleu", aux.google_bleu},
          {"meteor_lite", aux.meteor_lite},
          {"nist", aux.nist},
          {"rouge_l", score_rouge_l(hypotheses, references)}};
}

// --- aggregation -----------------------------------------------------------

TierSummary compute_transfer_gap(const std::map<std::string, double>& scores,
                                 const std::map<std::string, Tier>& tiers) {
  std::array<double, 3> sum{};
  std::array<std::size_t, 3> count{};
  for (const auto& [task, value] : scores) {
    const auto it = tiers.find(task);
    if (it == tiers.end()) throw AggregationError("task '" + task + "' has no tier");
    const auto t = static_cast<std::size_t>(it->second);
    sum[t] += value;
    ++count[t];
  }
  for (Tier t : {Tier::kHigh, Tier::kMid, Tier::kLow}) {
    if (count[static_cast<std::size_t>(t)] == 0) {
      throw AggregationError(std::string("no task in the ") + tier_name(t) + " tier");
    }
  }
  TierSummary s;
  s.high = sum[0] / static_cast<double>(count[0]);
  s.mid = sum[1] / static_cast<double>(count[1]);
  s.low = sum[2] / static_cast<double>(count[2]);
  s.gap = s.high - s.low;
  return s;
}

double MetricReport::trf_gap(const std::string& metric) const {
  const auto it = tiers.find(metric);
  if (it == tiers.end()) throw AggregationError("report has no metric '" + metric + "'");
  return it->second.gap;
}

const TaskScores& MetricReport::task(const std::string& name) const {
  for (const auto& t : tasks) {
    if (t.task == name) return t;
  }
  throw DataError("report has no task '" + name + "'");
}

MetricReport build_report(std::vector<TaskScores> tasks) {
  MetricReport r;
  r.tasks = std::move(tasks);
  std::map<std::string, Tier> tiers;
  std::map<std::string, std::map<std::string, double>> by_metric;
  for (const auto& t : r.tasks) {
    tiers[t.task] = t.tier;
    for (const auto& [m, v] : t.metrics) by_metric[m][t.task] = v;
  }
  for (const auto& [m, scores] : by_metric) r.tiers[m] = compute_transfer_gap(scores, tiers);
  return r;
}

Sentence tokens_to_sentence(std::span<const int> tokens) {
  Sentence s;
  for (int t : tokens) {
    switch (t) {
      case kPadToken: s.push_back("<pad>"); break;
      case kBosToken: s.push_back("<s>"); break;
      case kEosToken: s.push_back("</s>"); break;
      default: s.push_back("w" + std::to_string(t - kNumSpecialTokens));
    }
  }
  return s;
}

MetricReport evaluate_tasks(TranslationModel& model, const std::vector<const TaskData*>& tasks,
                            const SyntheticWorld& world, const BeamOptions& options) {
  options.validate();
  if (tasks.empty()) throw DataError("no tasks to evaluate");
  std::vector<TaskScores> scores;
  for (const auto* task : tasks) {
    if (task->eval.empty()) throw DataError("task " + task->spec.name() + " has no eval pairs");
    std::vector<Sentence> hyps, refs;
    for (const auto& u : task->eval.utterances) {
      hyps.push_back(tokens_to_sentence(beam_search_translate(model, u.waveform, options)));
      refs.push_back(tokens_to_sentence(world.target_tokens(u.concepts)));
    }
    scores.push_back({task->spec.name(), task->spec.tier, score_all(hyps, refs)});
  }
  return build_report(std::move(scores));
}

// --- report files ----------------------------------------------------------

namespace {

std::string fmt_value(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void write_report_records(const MetricReport& report, std::ostream& out) {
  out << kReportHeader << "\n";
  out << "# bleu4 smoothing: zero n>=2 matches scored as 1/(count+1)\n";
  for (const auto& t : report.tasks) {
    for (const auto& [m, v] : t.metrics) {
      out << t.task << "\t" << m << "\t" << fmt_value(v) << "\t" << tier_name(t.tier) << "\n";
    }
  }
  for (const auto& [m, s] : report.tiers) {
    out << "@mean\t" << m << "\t" << fmt_value(s.high) << "\thigh\n";
    out << "@mean\t" << m << "\t" << fmt_value(s.mid) << "\tmid\n";
    out << "@mean\t" << m << "\t" << fmt_value(s.low) << "\tlow\n";
    out << "@gap\t" << m << "\t" << fmt_value(s.gap) << "\t-\n";
  }
}

void write_report_table(const MetricReport& report, std::ostream& out) {
  std::vector<std::string> metrics;
  for (const auto& [m, s] : report.tiers) metrics.push_back(m);
  out << kReportHeader << "\n";
  out << std::left << std::setw(12) << "task" << std::setw(6) << "tier";
  for (const auto& m : metrics) out << std::right << std::setw(13) << m;
  out << "\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& t : report.tasks) {
    out << std::left << std::setw(12) << t.task << std::setw(6) << tier_name(t.tier);
    for (const auto& m : metrics) {
      const auto it = t.metrics.find(m);
      out << std::right << std::setw(13) << (it == t.metrics.end() ? 0.0 : it->second);
    }
    out << "\n";
  }
  auto row = [&](const char* label, double TierSummary::*field) {
    out << std::left << std::setw(18) << label;
    for (const auto& m : metrics) out << std::right << std::setw(13) << report.tiers.at(m).*field;
    out << "\n";
  };
  row("mean high", &TierSummary::high);
  row("mean mid", &TierSummary::mid);
  row("mean low", &TierSummary::low);
  row("TRFGap", &TierSummary::gap);
  out.unsetf(std::ios::floatfield);
}

MetricReport read_report_records(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) {
    throw FormatError("report does not start with '" + std::string(kReportHeader) + "'");
  }
  std::vector<TaskScores> tasks;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line[0] == '@') continue;
    std::istringstream fields(line);
    std::string task, metric, value, tier;
    if (!std::getline(fields, task, '\t') || !std::getline(fields, metric, '\t') ||
        !std::getline(fields, value, '\t') || !std::getline(fields, tier, '\t')) {
      throw FormatError("malformed report line: " + line);
    }
    auto it = std::find_if(tasks.begin(), tasks.end(),
                           [&](const TaskScores& t) { return t.task == task; });
    if (it == tasks.end()) {
      tasks.push_back({task, parse_tier(tier), {}});
      it = tasks.end() - 1;
    }
    try {
      it->metrics[metric] = std::stod(value);
    } catch (const std::exception&) {
      throw FormatError("bad value in report line: " + line);
    }
  }
  return build_report(std::move(tasks));
}

}  // namespace samukd
