#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "samukd/datagen.hpp"
#include "samukd/translator.hpp"

namespace samukd {

// --- decoding --------------------------------------------------------------

// Tokens exclude the leading BOS; finished once the last token is EOS or the
// sequence reached max_len.
struct BeamHypothesis {
  std::vector<int> tokens;
  double log_prob = 0.0;
  bool finished = false;
};

// Next-token log-probabilities given the prefix (BOS first).
using NextTokenScorer = std::function<std::vector<double>(std::span<const int> prefix)>;

struct BeamOptions {
  std::size_t beam = 5;
  // Most tokens generated, EOS included.
  std::size_t max_len = 15;
  // Rank finished hypotheses by log_prob / length instead of the raw sum.
  bool length_normalize = false;
  // Put the greedy decode in the finished pool, so the result never scores
  // below it.
  bool include_greedy = true;
  int bos = kBosToken;
  int eos = kEosToken;

  void validate() const;
};

BeamHypothesis greedy_search(const NextTokenScorer& scorer, std::size_t max_len, int bos, int eos);

/// Each step expands every live hypothesis over the full vocabulary and keeps
/// the `beam` best candidates; those that finish move to the pool. Returns
/// the best pooled hypothesis. Stops early once no live hypothesis can beat
/// the pool (raw scores only, where appending never raises a score).
BeamHypothesis beam_search(const NextTokenScorer& scorer, const BeamOptions& options);

// Encodes once, then beam-searches the decoder. Returns tokens without BOS/EOS.
std::vector<int> beam_search_translate(TranslationModel& model, std::span<const float> waveform,
                                       const BeamOptions& options);

// --- metrics ---------------------------------------------------------------

using Sentence = std::vector<std::string>;

Sentence tokenize(const std::string& text);

// Corpus BLEU-4 in [0, 100]. Zero n-gram matches for n >= 2 are smoothed to
// 1 / (count + 1); unigram precision is never smoothed.
double score_bleu4(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references);

// Mean over pairs of the LCS F1.
double score_rouge_l(const std::vector<Sentence>& hypotheses,
                     const std::vector<Sentence>& references);

struct AuxiliaryScores {
  double google_bleu = 0.0;
  double nist = 0.0;
  double meteor_lite = 0.0;
};

// Google-BLEU: corpus min(precision, recall) of 1..4-gram matches.
// NIST: 1..5-gram information-weighted precision, NIST brevity penalty.
// meteor_lite: exact-unigram F-mean (recall weighted 9:1) times
// 1 - 0.5·(chunks/matches)^3, averaged over pairs.
AuxiliaryScores score_auxiliary(const std::vector<Sentence>& hypotheses,
                                const std::vector<Sentence>& references);

double score_google_bleu(const std::vector<Sentence>& hypotheses,
                         const std::vector<Sentence>& references);
double score_nist(const std::vector<Sentence>& hypotheses, const std::vector<Sentence>& references,
                  std::size_t max_n = 5);
double score_meteor_lite(const std::vector<Sentence>& hypotheses,
                         const std::vector<Sentence>& references);

// All five metrics keyed "bleu4", "google_bleu", "meteor_lite", "nist", "rouge_l".
std::map<std::string, double> score_all(const std::vector<Sentence>& hypotheses,
                                        const std::vector<Sentence>& references);

// --- aggregation -----------------------------------------------------------

struct TierSummary {
  double high = 0.0;
  double mid = 0.0;
  double low = 0.0;
  // high - low.
  double gap = 0.0;
};

// Throws AggregationError when a task has no tier or a tier has no task.
TierSummary compute_transfer_gap(const std::map<std::string, double>& scores,
                                 const std::map<std::string, Tier>& tiers);

struct TaskScores {
  std::string task;
  Tier tier = Tier::kLow;
  std::map<std::string, double> metrics;
};

struct MetricReport {
  std::vector<TaskScores> tasks;
  // Metric name -> tier means and transfer gap.
  std::map<std::string, TierSummary> tiers;

  double trf_gap(const std::string& metric = "bleu4") const;
  const TaskScores& task(const std::string& name) const;
};

MetricReport build_report(std::vector<TaskScores> tasks);

// Decodes every eval utterance of every task and scores it against the
// target rendering.
MetricReport evaluate_tasks(TranslationModel& model, const std::vector<const TaskData*>& tasks,
                            const SyntheticWorld& world, const BeamOptions& options);

// Target tokens -> whitespace words ("w<id>"; special tokens spelled out).
Sentence tokens_to_sentence(std::span<const int> tokens);

inline constexpr const char* kReportHeader = "# samukd-report v1";

// Line records "task<TAB>metric<TAB>value<TAB>tier", tier rows as
// "@<tier>", the gap as "@gap".
void write_report_records(const MetricReport& report, std::ostream& out);
void write_report_table(const MetricReport& report, std::ostream& out);
MetricReport read_report_records(std::istream& in);

}  // namespace samukd
