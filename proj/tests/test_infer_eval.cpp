#include <cmath>
#include <sstream>

#include "doctest.h"
#include "samukd/error.hpp"
#include "samukd/infer_eval.hpp"

using namespace samukd;

namespace {

// Deterministic pseudo-random next-token distribution over 4 tokens.
std::vector<double> toy_scores(std::span<const int> prefix, std::uint64_t salt) {
  std::uint64_t h = salt;
  for (int t : prefix) h = mix_seed(h, static_cast<std::uint64_t>(t) + 1);
  Rng rng(h);
  std::vector<double> logits(4);
  double z = 0;
  for (auto& v : logits) {
    v = 2.0 * randn({1}, 1.0, rng)[0];
    z += std::exp(v);
  }
  for (auto& v : logits) v -= std::log(z);
  return logits;
}

// Best complete sequence by raw log-probability, by full enumeration.
void exhaustive(const NextTokenScorer& s, std::vector<int>& prefix, double lp, std::size_t max_len,
                int eos, double& best) {
  const auto next = s(prefix);
  for (std::size_t v = 0; v < next.size(); ++v) {
    prefix.push_back(static_cast<int>(v));
    const double score = lp + next[v];
    if (static_cast<int>(v) == eos || prefix.size() - 1 == max_len) {
      best = std::max(best, score);
    } else {
      exhaustive(s, prefix, score, max_len, eos, best);
    }
    prefix.pop_back();
  }
}

std::vector<Sentence> one(const std::string& s) { return {tokenize(s)}; }

}  // namespace

TEST_CASE("wide beam search finds the exhaustive optimum") {
  for (std::uint64_t salt = 0; salt < 25; ++salt) {
    NextTokenScorer s = [salt](std::span<const int> p) { return toy_scores(p, salt); };
    BeamOptions o;
    o.bos = 0;
    o.eos = 1;
    o.max_len = 4;
    o.beam = 4 * 4 * 4 * 4;
    std::vector<int> prefix{0};
    double best = -1e300;
    exhaustive(s, prefix, 0.0, o.max_len, o.eos, best);
    const auto got = beam_search(s, o);
    CHECK(got.log_prob == doctest::Approx(best).epsilon(1e-12));
    CHECK(got.finished);

    // A narrow beam never scores below greedy.
    o.beam = 2;
    const auto narrow = beam_search(s, o);
    const auto greedy = greedy_search(s, o.max_len, o.bos, o.eos);
    CHECK(narrow.log_prob >= greedy.log_prob - 1e-12);
    CHECK(narrow.log_prob <= best + 1e-12);
  }
}

TEST_CASE("beam options validation") {
  BeamOptions o;
  CHECK(o.beam == 5);
  o.beam = 0;
  CHECK_THROWS_AS(o.validate(), ConfigError);
  o.beam = 3;
  o.max_len = 0;
  CHECK_THROWS_AS(o.validate(), ConfigError);
}

TEST_CASE("bleu4 hand-computed values") {
  // Precisions 5/6, 3/5, 1/4 and a smoothed 1/(3+1); equal lengths.
  CHECK(score_bleu4(one("the cat sat on the mat"), one("the cat is on the mat")) ==
        doctest::Approx(100.0 * std::pow(0.03125, 0.25)).epsilon(1e-12));
  // Higher orders have no n-grams at all (smoothed to 1); brevity penalty e^{1-4/2}.
  CHECK(score_bleu4(one("the cat"), one("the cat sat down")) ==
        doctest::Approx(100.0 * std::exp(-1.0)).epsilon(1e-12));
  CHECK(score_bleu4(one("a b c d"), one("a b c d")) == doctest::Approx(100.0));
  CHECK(score_bleu4(one("x y"), one("a b")) == 0.0);
  CHECK_THROWS_AS(score_bleu4({}, {}), DataError);
  CHECK_THROWS_AS(score_bleu4(one("a"), {}), DataError);
}

TEST_CASE("rouge-l, google-bleu, meteor-lite and nist hand-computed values") {
  // LCS 3: precision 3/4, recall 3/5.
  CHECK(score_rouge_l(one("a b c d"), one("a c b d e")) ==
        doctest::Approx(2 * 0.75 * 0.6 / 1.35).epsilon(1e-12));
  // 3 matched n-grams; 3 in the hypothesis, 6 in the reference.
  CHECK(score_google_bleu(one("a b"), one("a b c")) == doctest::Approx(0.5));
  // One chunk of three matches; three chunks of three.
  CHECK(score_meteor_lite(one("a b c"), one("a b c")) == doctest::Approx(1.0 - 1.0 / 54.0));
  CHECK(score_meteor_lite(one("c b a"), one("a b c")) == doctest::Approx(0.5));
  // Unigrams carry log2(2) each; the bigram carries log2(1/1) = 0.
  CHECK(score_nist(one("a b"), one("a b")) == doctest::Approx(1.0));
  // Two thirds of the reference length halves the score.
  CHECK(score_nist(one("a b"), one("a b c")) == doctest::Approx(0.5 * std::log2(3.0)));
  const auto all = score_all(one("a b"), one("a b"));
  CHECK(all.size() == 5);
  CHECK(all.count("rouge_l") == 1);
}

TEST_CASE("transfer gap over tiers") {
  const std::map<std::string, Tier> tiers{
      {"aa-en", Tier::kHigh}, {"bb-en", Tier::kMid}, {"cc-en", Tier::kLow}, {"dd-en", Tier::kLow}};
  const std::map<std::string, double> scores{
      {"aa-en", 30.0}, {"bb-en", 20.0}, {"cc-en", 10.0}, {"dd-en", 6.0}};
  const auto s = compute_transfer_gap(scores, tiers);
  CHECK(s.high == 30.0);
  CHECK(s.mid == 20.0);
  CHECK(s.low == 8.0);
  CHECK(s.gap == 22.0);
  auto missing = scores;
  missing.erase("bb-en");
  auto fewer = tiers;
  fewer.erase("bb-en");
  CHECK_THROWS_AS(compute_transfer_gap(missing, fewer), AggregationError);
  missing["ee-en"] = 1.0;
  CHECK_THROWS_AS(compute_transfer_gap(missing, tiers), AggregationError);
}

TEST_CASE("report records survive a roundtrip") {
  std::vector<TaskScores> tasks{
      {"aa-en", Tier::kHigh, {{"bleu4", 41.25}, {"rouge_l", 0.5}}},
      {"bb-en", Tier::kMid, {{"bleu4", 1.0 / 3.0}, {"rouge_l", 0.25}}},
      {"cc-en", Tier::kLow, {{"bleu4", 2.0}, {"rouge_l", 0.125}}}};
  const MetricReport r = build_report(tasks);
  CHECK(r.trf_gap() == doctest::Approx(39.25));
  std::stringstream buf;
  write_report_records(r, buf);
  CHECK(buf.str().rfind(kReportHeader, 0) == 0);
  const MetricReport back = read_report_records(buf);
  REQUIRE(back.tasks.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.tasks[i].task == r.tasks[i].task);
    CHECK(back.tasks[i].tier == r.tasks[i].tier);
    CHECK(back.tasks[i].metrics == r.tasks[i].metrics);
  }
  CHECK(back.trf_gap() == r.trf_gap());
  CHECK(back.task("bb-en").metrics.at("bleu4") == 1.0 / 3.0);
  CHECK_THROWS_AS(back.task("zz-en"), DataError);

  std::stringstream bad("not a report\n");
  CHECK_THROWS_AS(read_report_records(bad), FormatError);
  std::ostringstream table;
  write_report_table(r, table);
  CHECK(table.str().find("aa-en") != std::string::npos);
}

TEST_CASE("evaluation decodes every task with an untrained model") {
  WorldConfig w;
  w.source_languages = {"aa", "bb", "cc"};
  w.num_concepts = 5;
  CorpusConfig cc;
  cc.train_pairs = {1200, 200, 20};
  cc.eval_pairs = 3;
  cc.bkg_per_language = 1;
  const Dataset ds = generate_corpus(w, cc, 6);
  EncoderConfig e;
  e.features.channels = 8;
  e.features.out_dim = 16;
  e.model_dim = 16;
  e.ffn_dim = 24;
  e.num_heads = 2;
  e.num_layers = 1;
  e.pos_conv_kernel = 3;
  DecoderConfig d;
  d.num_layers = 1;
  d.model_dim = 16;
  d.ffn_dim = 24;
  d.num_heads = 2;
  d.vocab_size = ds.world.target_vocab_size();
  d.max_target_len = 8;
  TranslationModel m(e, d, 1);
  std::vector<const TaskData*> tasks;
  for (const auto& t : ds.tasks) tasks.push_back(&t);
  BeamOptions o;
  o.beam = 2;
  const MetricReport r = evaluate_tasks(m, tasks, ds.world, o);
  REQUIRE(r.tasks.size() == 3);
  for (const auto& t : r.tasks) {
    CHECK(t.metrics.size() == 5);
    CHECK(t.metrics.at("bleu4") >= 0.0);
    CHECK(t.metrics.at("bleu4") <= 100.0);
  }
  CHECK(tokens_to_sentence(std::vector<int>{kBosToken, 3, kEosToken}) ==
        Sentence{"<s>", "w0", "</s>"});
}
