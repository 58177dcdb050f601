// Acceptance run: one PASS/FAIL line per criterion. With arguments, only the
// listed criteria run (e.g. `acceptance 1 5 7`).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "samukd/checkpoint.hpp"
#include "samukd/config.hpp"
#include "samukd/distill.hpp"
#include "samukd/error.hpp"
#include "samukd/experiment.hpp"
#include "samukd/grad_suite.hpp"
#include "samukd/infer_eval.hpp"
#include "samukd/translator.hpp"

using namespace samukd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.features.channels = 8;
  c.features.out_dim = 16;
  c.model_dim = 16;
  c.ffn_dim = 24;
  c.num_heads = 2;
  c.num_layers = 2;
  c.pos_conv_kernel = 3;
  return c;
}

DecoderConfig tiny_decoder(std::size_t vocab, std::size_t dim = 16) {
  DecoderConfig c;
  c.num_layers = 1;
  c.model_dim = dim;
  c.ffn_dim = 2 * dim;
  c.num_heads = 2;
  c.vocab_size = vocab;
  c.max_target_len = 8;
  return c;
}

// --- 1 ---------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  const GradSuiteReport r = run_gradient_suite(100, 0, 1e-4);
  const double secs = seconds_since(t0);
  std::string failed;
  for (const auto& e : r.entries)
    if (!e.passed) failed += " " + e.name;
  const bool covers = std::find(gradient_check_names().begin(), gradient_check_names().end(),
                                std::string("translation_nll")) != gradient_check_names().end() &&
                      std::find(gradient_check_names().begin(), gradient_check_names().end(),
                                std::string("kd_loss")) != gradient_check_names().end();
  return {r.passed && covers && secs < 120.0,
          fmt::format("{} checks x 100 cases, max rel error {:.2e}, {:.1f} s{}", r.entries.size(),
                      r.max_rel_error, secs, failed.empty() ? "" : ", failed:" + failed)};
}

// --- 2 ---------------------------------------------------------------------

std::vector<double> kd_gradient(const std::vector<double>& e, const std::vector<double>& z,
                                double beta) {
  Parameter p(Tensor({1, e.size()}, e));
  Tape tape;
  tape.backward(kd_loss(tape.param(p), z, beta));
  return {p.grad.values().begin(), p.grad.values().end()};
}

Outcome kd_properties() {
  Rng rng(2);
  const double beta = 32.0;
  double lo = 1e300, hi = -1e300, worst_scale = 0.0;
  bool linear = true;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t d = 2 + rng() % 10;
    std::vector<double> e(d), z(d);
    for (auto& v : e) v = randn({1}, 1.0, rng)[0];
    for (auto& v : z) v = randn({1}, 1.0, rng)[0];
    if (trial % 50 == 0) z = e;                                  // minimum
    if (trial % 50 == 1) for (std::size_t i = 0; i < d; ++i) z[i] = -e[i];  // maximum
    const double l = kd_loss_value(e, z, beta);
    lo = std::min(lo, l);
    hi = std::max(hi, l);
    for (double alpha : {1e-3, 0.5, 3.0, 1e3}) {
      std::vector<double> scaled(e);
      for (auto& v : scaled) v *= alpha;
      worst_scale = std::max(worst_scale, std::abs(kd_loss_value(scaled, z, beta) - l));
    }
    // Gradients scale with beta; powers of two keep the comparison exact.
    const auto g1 = kd_gradient(e, z, 1.0);
    for (double b : {0.5, 2.0, 32.0}) {
      const auto gb = kd_gradient(e, z, b);
      for (std::size_t i = 0; i < d; ++i) linear = linear && gb[i] == b * g1[i];
    }
  }
  const bool range = lo >= -1e-12 && hi <= 2 * beta + 1e-12;
  return {range && worst_scale <= 1e-10 && linear,
          fmt::format("range [{:.3g}, {:.6g}] within [0, {}], scale drift {:.1e}, beta-linear {}",
                      lo, hi, 2 * beta, worst_scale, linear ? "exact" : "NO")};
}

// --- 3 ---------------------------------------------------------------------

Outcome adapter_contract() {
  Rng rng(3);
  SpeechEncoder enc(tiny_encoder(), rng);
  std::vector<float> wave(64);
  for (auto& v : wave) v = static_cast<float>(randn({1}, 1.0, rng)[0]);
  Tape t1(false), t2(false);
  const Tensor before = enc.encode(t1, wave).value();
  enc.insert_adapters(AdapterConfig{}, rng);
  const bool identity = enc.encode(t2, wave).value() == before;

  WorldConfig w;
  w.source_languages = {"aa", "bb", "cc"};
  w.num_concepts = 6;
  CorpusConfig cc;
  cc.train_pairs = {1200, 200, 20};
  cc.eval_pairs = 2;
  cc.bkg_per_language = 1;
  const Dataset ds = generate_corpus(w, cc, 3);
  TranslationModel model(tiny_encoder(), tiny_decoder(ds.world.target_vocab_size()), 3);
  TrainPolicy policy;
  policy.total_iters = 50;
  policy.batch_frames = 80;
  policy.peak_lr = 1e-2;
  apply_finetune_policy(model, policy);
  std::map<std::string, std::uint64_t> digest;
  model.visit([&](const std::string& n, Parameter& p) { digest[n] = tensor_digest(p.value); });
  std::vector<const TaskData*> tasks;
  for (const auto& t : ds.tasks) tasks.push_back(&t);
  run_translation_training(model, tasks, ds.world, policy);

  std::set<std::string> changed, expected;
  bool frozen_intact = true;
  model.visit([&](const std::string& n, Parameter& p) {
    const bool moved = tensor_digest(p.value) != digest.at(n);
    if (moved) changed.insert(n);
    if (!p.trainable && moved) frozen_intact = false;
    const bool decoder = n.rfind("decoder.", 0) == 0;
    if (n.find("_adapter.") != std::string::npos ||
        (decoder && (n.find("norm.") != std::string::npos ||
                     n.find(".cross_attn.") != std::string::npos)))
      expected.insert(n);
  });
  std::string diff;
  for (const auto& n : expected)
    if (!changed.count(n)) diff += " unchanged:" + n;
  for (const auto& n : changed)
    if (!expected.count(n)) diff += " unexpected:" + n;
  return {identity && frozen_intact && diff.empty(),
          fmt::format("identity {}, {} parameters changed, frozen intact {}{}",
                      identity ? "bit-exact" : "BROKEN", changed.size(), frozen_intact,
                      diff)};
}

// --- 4 ---------------------------------------------------------------------

Outcome scheduler() {
  TrainPolicy p;
  p.total_iters = 28000;
  p.peak_lr = 5e-4;
  const bool points = std::abs(lr_at(2800, p) - 5e-4) <= 1e-12 &&
                      std::abs(lr_at(14000, p) - 5e-4) <= 1e-12 &&
                      std::abs(lr_at(28000, p)) <= 1e-12 && std::abs(lr_at(0, p)) <= 1e-12;
  // Steepest legitimate slope is the warm-up, peak / 2800 per step.
  double max_jump = 0.0;
  for (std::size_t i = 0; i < 28000; ++i)
    max_jump = std::max(max_jump, std::abs(lr_at(i + 1, p) - lr_at(i, p)));
  const bool continuous = max_jump <= 5e-4 / 2800 + 1e-12;
  return {points && continuous,
          fmt::format("lr(2800)={:.3g} lr(14000)={:.3g} lr(28000)={:.3g}, max step {:.3e}",
                      lr_at(2800, p), lr_at(14000, p), lr_at(28000, p), max_jump)};
}

// --- 5 ---------------------------------------------------------------------

// Sum over every frame labelling that collapses to the target.
double ctc_enumerate(const Tensor& lp, const std::vector<int>& target, int blank) {
  const std::size_t T = lp.rows(), V = lp.cols();
  std::vector<std::size_t> path(T, 0);
  double total = 0.0;
  for (;;) {
    std::vector<int> out;
    int prev = -1;
    double s = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const int k = static_cast<int>(path[t]);
      s += lp.at(t, path[t]);
      if (k != blank && k != prev) out.push_back(k);
      prev = k;
    }
    if (out == target) total += std::exp(s);
    std::size_t i = 0;
    while (i < T && ++path[i] == V) path[i++] = 0;
    if (i == T) break;
  }
  return total;
}

void best_sequence(const NextTokenScorer& s, std::vector<int>& prefix, double lp,
                   std::size_t max_len, int eos, double& best) {
  const auto next = s(prefix);
  for (std::size_t v = 0; v < next.size(); ++v) {
    prefix.push_back(static_cast<int>(v));
    if (static_cast<int>(v) == eos || prefix.size() - 1 == max_len) {
      best = std::max(best, lp + next[v]);
    } else {
      best_sequence(s, prefix, lp + next[v], max_len, eos, best);
    }
    prefix.pop_back();
  }
}

// Metric oracles, coded from the textbook definitions.
using Gram = std::vector<std::string>;
std::map<Gram, int> grams(const Sentence& s, std::size_t n) {
  std::map<Gram, int> m;
  for (std::size_t i = 0; i + n <= s.size(); ++i) m[Gram(s.begin() + i, s.begin() + i + n)]++;
  return m;
}
int overlap(const std::map<Gram, int>& a, const std::map<Gram, int>& b) {
  int m = 0;
  for (const auto& [g, c] : a)
    if (b.count(g)) m += std::min(c, b.at(g));
  return m;
}

double oracle_bleu(const std::vector<Sentence>& h, const std::vector<Sentence>& r) {
  double logp = 0;
  int hl = 0, rl = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    int m = 0, tot = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      const auto g = grams(h[i], n);
      for (const auto& kv : g) tot += kv.second;
      m += overlap(g, grams(r[i], n));
    }
    logp += std::log(m > 0 ? double(m) / tot : 1.0 / (tot + 1));
  }
  for (std::size_t i = 0; i < h.size(); ++i) hl += h[i].size(), rl += r[i].size();
  const double bp = hl > rl ? 1.0 : std::exp(1.0 - double(rl) / hl);
  return 100 * bp * std::exp(logp / 4);
}

double oracle_rouge(const std::vector<Sentence>& h, const std::vector<Sentence>& r) {
  double sum = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    std::vector<std::vector<int>> L(h[i].size() + 1, std::vector<int>(r[i].size() + 1, 0));
    for (std::size_t a = 0; a < h[i].size(); ++a)
      for (std::size_t b = 0; b < r[i].size(); ++b)
        L[a + 1][b + 1] = h[i][a] == r[i][b] ? L[a][b] + 1 : std::max(L[a][b + 1], L[a + 1][b]);
    const double l = L.back().back();
    if (l > 0) {
      const double p = l / h[i].size(), q = l / r[i].size();
      sum += 2 * p * q / (p + q);
    }
  }
  return sum / h.size();
}

double oracle_gleu(const std::vector<Sentence>& h, const std::vector<Sentence>& r) {
  int m = 0, th = 0, tr = 0;
  for (std::size_t i = 0; i < h.size(); ++i)
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto a = grams(h[i], n), b = grams(r[i], n);
      for (const auto& kv : a) th += kv.second;
      for (const auto& kv : b) tr += kv.second;
      m += overlap(a, b);
    }
  return std::min(double(m) / th, double(m) / tr);
}

double oracle_nist(const std::vector<Sentence>& h, const std::vector<Sentence>& r) {
  std::map<Gram, int> counts;
  int words = 0, hwords = 0;
  for (const auto& s : r) {
    words += s.size();
    for (std::size_t n = 1; n <= 5; ++n)
      for (const auto& [g, c] : grams(s, n)) counts[g] += c;
  }
  for (const auto& s : h) hwords += s.size();
  double score = 0;
  for (std::size_t n = 1; n <= 5; ++n) {
    double info = 0;
    int hn = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      const auto a = grams(h[i], n), b = grams(r[i], n);
      for (const auto& [g, c] : a) {
        hn += c;
        if (!b.count(g)) continue;
        const double denom = n == 1 ? words : counts.at(Gram(g.begin(), g.end() - 1));
        info += std::min(c, b.at(g)) * std::log2(denom / counts.at(g));
      }
    }
    if (hn) score += info / hn;
  }
  const double ratio = std::min(1.0, double(hwords) / words);
  const double beta = std::log(0.5) / (std::log(1.5) * std::log(1.5));
  return score * std::exp(beta * std::log(ratio) * std::log(ratio));
}

double oracle_meteor(const std::vector<Sentence>& h, const std::vector<Sentence>& r) {
  double sum = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    std::vector<int> link(h[i].size(), -1);
    std::vector<char> taken(r[i].size(), 0);
    int m = 0;
    for (std::size_t a = 0; a < h[i].size(); ++a)
      for (std::size_t b = 0; b < r[i].size(); ++b)
        if (!taken[b] && h[i][a] == r[i][b]) {
          taken[b] = 1, link[a] = int(b), ++m;
          break;
        }
    if (!m) continue;
    int chunks = 0, last_a = -5, last_b = -5;
    for (std::size_t a = 0; a < h[i].size(); ++a) {
      if (link[a] < 0) continue;
      if (int(a) != last_a + 1 || link[a] != last_b + 1) ++chunks;
      last_a = int(a), last_b = link[a];
    }
    const double p = double(m) / h[i].size(), q = double(m) / r[i].size();
    sum += p * q / (0.9 * p + 0.1 * q) * (1 - 0.5 * std::pow(double(chunks) / m, 3));
  }
  return sum / h.size();
}

Outcome oracle_equivalences() {
  Rng rng(5);
  // CTC: every T <= 6, V <= 3 (blank included), |target| <= 3.
  std::size_t ctc_cases = 0;
  double ctc_err = 0.0;
  bool infeasible_ok = true;
  for (std::size_t V = 2; V <= 3; ++V)
    for (std::size_t T = 1; T <= 6; ++T)
      for (std::size_t len = 1; len <= 3; ++len) {
        std::vector<int> target(len, 0);
        for (;;) {
          Tape tape(false);
          const Tensor lp = log_softmax_rows(tape.constant(randn({T, V}, 1.0, rng))).value();
          const int blank = static_cast<int>(V - 1);
          const double total = ctc_enumerate(lp, target, blank);
          if (total == 0.0) {
            try {
              ctc_negative_log_likelihood(lp, target, blank);
              infeasible_ok = false;
            } catch (const InfeasibleError&) {
            }
          } else {
            ctc_err = std::max(ctc_err, std::abs(ctc_negative_log_likelihood(lp, target, blank) +
                                                 std::log(total)));
            ++ctc_cases;
          }
          std::size_t i = 0;
          while (i < len && ++target[i] == static_cast<int>(V - 1)) target[i++] = 0;
          if (i == len) break;
        }
      }

  // Beam vs exhaustive on random decoders.
  int beam_agree = 0;
  EncoderConfig enc = tiny_encoder();
  enc.num_layers = 1;
  std::vector<float> wave(24);
  for (int m = 0; m < 200; ++m) {
    const std::size_t vocab = 4 + m % 3, max_len = 3 + m % 3;
    DecoderConfig dec = tiny_decoder(vocab);
    dec.max_target_len = 8;
    TranslationModel model(enc, dec, 1000 + m);
    for (auto& v : wave) v = static_cast<float>(randn({1}, 1.0, rng)[0]);
    Tape tape(false);
    Var e = model.encoder().encode(tape, wave, {});
    const auto memory = model.decoder().prepare_memory(tape, e);
    std::map<std::vector<int>, std::vector<double>> cache;
    NextTokenScorer scorer = [&](std::span<const int> prefix) {
      const std::vector<int> key(prefix.begin(), prefix.end());
      auto it = cache.find(key);
      if (it != cache.end()) return it->second;
      Tape step(false);
      const Tensor lp = model.decoder().forward(step, memory, prefix).value();
      const auto row = lp.row(lp.rows() - 1);
      return cache[key] = std::vector<double>(row.begin(), row.end());
    };
    BeamOptions o;
    o.max_len = max_len;
    o.beam = static_cast<std::size_t>(std::pow(vocab, max_len));
    o.include_greedy = false;
    std::vector<int> prefix{o.bos};
    double best = -1e300;
    best_sequence(scorer, prefix, 0.0, max_len, o.eos, best);
    beam_agree += std::abs(beam_search(scorer, o).log_prob - best) <= 1e-9;
  }

  // Metrics on a 3-sentence toy corpus.
  const std::vector<Sentence> hyp{tokenize("the cat sat on the mat"), tokenize("a dog barks"),
                                  tokenize("it is raining cats and dogs today")};
  const std::vector<Sentence> ref{tokenize("the cat is on the mat"), tokenize("the dog barks loudly"),
                                  tokenize("it is raining cats and dogs")};
  const auto got = score_all(hyp, ref);
  const std::map<std::string, double> want{{"bleu4", oracle_bleu(hyp, ref)},
                                           {"rouge_l", oracle_rouge(hyp, ref)},
                                           {"google_bleu", oracle_gleu(hyp, ref)},
                                           {"nist", oracle_nist(hyp, ref)},
                                           {"meteor_lite", oracle_meteor(hyp, ref)}};
  double metric_err = 0.0;
  for (const auto& [k, v] : want) metric_err = std::max(metric_err, std::abs(got.at(k) - v));

  return {ctc_err <= 1e-9 && infeasible_ok && beam_agree == 200 && metric_err <= 1e-6,
          fmt::format("ctc {} cases max err {:.1e}; beam = exhaustive on {}/200 models; metric "
                      "max err {:.1e} (bleu4 {:.3f})",
                      ctc_cases, ctc_err, beam_agree, metric_err, got.at("bleu4"))};
}

// --- 6 ---------------------------------------------------------------------

Outcome masking_statistics() {
  MaskConfig cfg;
  cfg.time_prob = 0.3;
  cfg.time_span = 6;
  cfg.feat_prob = 0.0;
  const std::size_t T = 100, draws = 10000;
  Rng rng(6);
  std::size_t masked = 0;
  bool spans_ok = true;
  for (std::size_t d = 0; d < draws; ++d) {
    const MaskRecord r = draw_mask(T, 4, cfg, rng);
    std::vector<bool> rebuilt(T, false);
    for (auto s : r.time_starts) {
      const std::size_t end = std::min(T, s + cfg.time_span);
      spans_ok = spans_ok && end - s <= cfg.time_span;
      for (std::size_t u = s; u < end; ++u) rebuilt[u] = true;
    }
    spans_ok = spans_ok && rebuilt == r.masked_frames;
    masked += r.masked_frame_count();
  }
  const double got = double(masked) / double(T * draws);

  // Independent simulation: each frame starts a span with probability p.
  std::minstd_rand oracle_rng(12345);
  std::bernoulli_distribution start(0.3);
  std::size_t oracle_masked = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    std::size_t covered_until = 0;
    for (std::size_t t = 0; t < T; ++t) {
      if (start(oracle_rng)) covered_until = std::max(covered_until, t + 6);
      oracle_masked += t < covered_until;
    }
  }
  const double want = double(oracle_masked) / double(T * draws);
  return {std::abs(got - want) <= 0.02 && spans_ok,
          fmt::format("masked fraction {:.4f} vs oracle {:.4f}, spans <= 6 {}", got, want,
                      spans_ok)};
}

// --- 7 ---------------------------------------------------------------------

Outcome balanced_sampling() {
  Rng rng(7);
  const std::size_t N = 100000;
  int violations = 0, checks = 0;
  double worst_z = 0.0;
  for (int setting = 0; setting < 20; ++setting) {
    const std::size_t L = 2 + rng() % 7;
    std::vector<std::size_t> n(L);
    for (auto& v : n) v = 1 + rng() % 5000;
    const double alpha = uniform01(rng);
    double z = 0;
    for (auto v : n) z += std::pow(double(v), alpha);
    BalancedSampler sampler(n, alpha);
    std::vector<std::size_t> hits(L, 0);
    for (std::size_t i = 0; i < N; ++i) ++hits[sampler.draw(rng)];
    for (std::size_t l = 0; l < L; ++l) {
      const double p = std::pow(double(n[l]), alpha) / z;
      const double sd = std::sqrt(N * p * (1 - p));
      const double dev = std::abs(double(hits[l]) - N * p) / sd;
      worst_z = std::max(worst_z, dev);
      violations += dev > 3.0;
      ++checks;
    }
  }
  return {violations == 0,
          fmt::format("{} language frequencies, {} outside 3 sigma, worst {:.2f} sigma", checks,
                      violations, worst_z)};
}

// --- 8 to 11 -----------------------------------------------------------------

struct SeedRun {
  double recall = 0.0;
  TierSummary multi_distilled, multi_baseline, zs_distilled, zs_baseline, zs_distilled_full;
  double multi_seconds = 0.0;
};

TierSummary bleu(const CellResult& r) { return r.report.tiers.at("bleu4"); }

SeedRun run_seed(const ExperimentConfig& base, std::uint64_t seed) {
  ExperimentConfig cfg = base;
  cfg.seed = seed;
  cfg.resolve();
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentSession session(cfg);
  SeedRun out;
  out.recall = session.distilled().retrieval_recall;
  const FinetuneMode A = FinetuneMode::kAdapters, F = FinetuneMode::kFull;
  const InitKind D = InitKind::kDistilled, B = InitKind::kBaseline;
  out.multi_distilled = bleu(session.run_cell({Scenario::kMultilingual, D, A}));
  out.multi_baseline = bleu(session.run_cell({Scenario::kMultilingual, B, A}));
  out.multi_seconds = seconds_since(t0);
  out.zs_distilled = bleu(session.run_cell({Scenario::kZeroShot, D, A}));
  out.zs_baseline = bleu(session.run_cell({Scenario::kZeroShot, B, A}));
  out.zs_distilled_full = bleu(session.run_cell({Scenario::kZeroShot, D, F}));
  std::fprintf(stderr,
               "seed %llu: recall %.2f | multilingual gap D %.2f B %.2f | zero-shot mid D %.2f B "
               "%.2f low D %.2f B %.2f | low adapters %.2f full %.2f | %.0f s\n",
               static_cast<unsigned long long>(seed), out.recall, out.multi_distilled.gap,
               out.multi_baseline.gap, out.zs_distilled.mid, out.zs_baseline.mid,
               out.zs_distilled.low, out.zs_baseline.low, out.zs_distilled.low,
               out.zs_distilled_full.low, seconds_since(t0));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto wanted = [&](int c) { return only.empty() || only.count(c) > 0; };

  std::map<int, Outcome> results;
  auto record = [&](int c, const std::function<Outcome()>& f) {
    if (!wanted(c)) return;
    try {
      results[c] = f();
    } catch (const std::exception& e) {
      results[c] = {false, std::string("threw: ") + e.what()};
    }
    std::printf("criterion %d: %s  %s\n", c, results[c].pass ? "PASS" : "FAIL",
                results[c].detail.c_str());
    std::fflush(stdout);
  };

  record(1, gradient_suite);
  record(2, kd_properties);
  record(3, adapter_contract);
  record(4, scheduler);
  record(5, oracle_equivalences);
  record(6, masking_statistics);
  record(7, balanced_sampling);

  if (wanted(8) || wanted(9) || wanted(10) || wanted(11)) {
    std::vector<SeedRun> runs;
    std::string error;
    try {
      const ExperimentConfig desk = parse_config(fs::path(SAMUKD_CONFIG_DIR) / "desk.yaml");
      const bool seeds_needed = wanted(8) || wanted(9) || wanted(10);
      for (std::uint64_t seed = 1; seed <= (seeds_needed ? 5u : 1u); ++seed)
        runs.push_back(run_seed(desk, seed));
    } catch (const std::exception& e) {
      error = std::string("threw: ") + e.what();
    }
    auto directional = [&](int c, const std::function<bool(const SeedRun&)>& claim,
                           const std::function<std::string(const SeedRun&)>& show,
                           const std::string& extra = "") {
      if (!wanted(c)) return;
      record(c, [&]() -> Outcome {
        if (!error.empty()) return {false, error};
        int wins = 0;
        std::string per_seed;
        for (const auto& r : runs) {
          const bool w = claim(r);
          wins += w;
          per_seed += fmt::format(" [{}{}]", show(r), w ? "" : " x");
        }
        return {wins >= 4 && extra.rfind("FAIL", 0) != 0,
                fmt::format("{}/5 seeds{}{}", wins, per_seed, extra.empty() ? "" : "; " + extra)};
      });
    };
    double multi_total = 0.0;
    for (const auto& r : runs) multi_total += r.multi_seconds;
    directional(
        8, [](const SeedRun& r) { return r.multi_distilled.gap < r.multi_baseline.gap; },
        [](const SeedRun& r) {
          return fmt::format("gap {:.2f} vs {:.2f}", r.multi_distilled.gap, r.multi_baseline.gap);
        },
        fmt::format("{}multilingual runtime {:.1f} min", multi_total < 1800 ? "" : "FAIL ",
                    multi_total / 60));
    directional(
        9,
        [](const SeedRun& r) {
          return r.zs_distilled.mid > r.zs_baseline.mid && r.zs_distilled.low > r.zs_baseline.low;
        },
        [](const SeedRun& r) {
          return fmt::format("mid {:.2f}/{:.2f} low {:.2f}/{:.2f}", r.zs_distilled.mid,
                             r.zs_baseline.mid, r.zs_distilled.low, r.zs_baseline.low);
        });
    directional(
        10, [](const SeedRun& r) { return r.zs_distilled.low >= r.zs_distilled_full.low; },
        [](const SeedRun& r) {
          return fmt::format("low {:.2f} vs {:.2f}", r.zs_distilled.low, r.zs_distilled_full.low);
        });
    record(11, [&]() -> Outcome {
      if (!error.empty()) return {false, error};
      const double recall = runs.front().recall;
      return {recall >= 0.1, fmt::format("recall@1 {:.2f} on 100 pairs (chance 0.01)", recall)};
    });
  }

  int failed = 0;
  for (const auto& [c, o] : results) failed += !o.pass;
  std::printf("%zu criteria, %d failed\n", results.size(), failed);
  return failed == 0 ? 0 : 1;
}
