#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "samukd/error.hpp"
#include "samukd/translator.hpp"

using namespace samukd;

namespace {

EncoderConfig tiny_encoder() {
  EncoderConfig c;
  c.features.channels = 8;
  c.features.out_dim = 16;
  c.model_dim = 16;
  c.ffn_dim = 24;
  c.num_heads = 2;
  c.num_layers = 1;
  c.pos_conv_kernel = 3;
  return c;
}

DecoderConfig tiny_decoder(std::size_t vocab) {
  DecoderConfig c;
  c.num_layers = 1;
  c.model_dim = 16;
  c.ffn_dim = 24;
  c.num_heads = 2;
  c.vocab_size = vocab;
  c.max_target_len = 10;
  return c;
}

// Sum over every frame labelling that collapses (merge repeats, drop blanks)
// to the target.
double ctc_by_enumeration(const Tensor& lp, const std::vector<int>& target, int blank) {
  const std::size_t T = lp.rows(), V = lp.cols();
  std::vector<std::size_t> path(T, 0);
  double total = 0.0;
  while (true) {
    std::vector<int> collapsed;
    int prev = -1;
    double logp = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const int s = static_cast<int>(path[t]);
      logp += lp.at(t, path[t]);
      if (s != blank && s != prev) collapsed.push_back(s);
      prev = s;
    }
    if (collapsed == target) total += std::exp(logp);
    std::size_t k = 0;
    while (k < T && ++path[k] == V) path[k++] = 0;
    if (k == T) break;
  }
  return -std::log(total);
}

}  // namespace

TEST_CASE("three-phase schedule at the reference settings") {
  TrainPolicy p;
  p.total_iters = 28000;
  p.peak_lr = 5e-4;
  CHECK(lr_at(0, p) == 0.0);
  CHECK(lr_at(1400, p) == doctest::Approx(2.5e-4).epsilon(1e-12));
  CHECK(lr_at(2800, p) == doctest::Approx(5e-4).epsilon(1e-12));
  CHECK(lr_at(14000, p) == doctest::Approx(5e-4).epsilon(1e-12));
  CHECK(lr_at(21000, p) == doctest::Approx(2.5e-4).epsilon(1e-12));
  CHECK(lr_at(28000, p) == 0.0);
  CHECK_THROWS_AS(lr_at(28001, p), RangeError);
}

TEST_CASE("ctc loss equals the alignment sum on small cases") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t labels = 1 + rng() % 2, len = 1 + rng() % 2;
    std::vector<int> target(len);
    for (auto& y : target) y = static_cast<int>(rng() % labels);
    const std::size_t T = len + 1 + rng() % 3;
    Tape tape(false);
    Var lp = log_softmax_rows(tape.constant(randn({T, labels + 1}, 1.0, rng)));
    const int blank = static_cast<int>(labels);
    CHECK(ctc_negative_log_likelihood(lp.value(), target, blank) ==
          doctest::Approx(ctc_by_enumeration(lp.value(), target, blank)).epsilon(1e-9));
  }
}

TEST_CASE("ctc with too few frames is infeasible") {
  Tape tape(false);
  Var lp = log_softmax_rows(tape.constant(Tensor::matrix(2, 3)));
  // "a a" needs a blank between the repeats: three frames.
  CHECK_THROWS_AS(ctc_negative_log_likelihood(lp.value(), std::vector<int>{0, 0}, 2),
                  InfeasibleError);
  CHECK_NOTHROW(ctc_negative_log_likelihood(lp.value(), std::vector<int>{0, 1}, 2));
}

TEST_CASE("decoder inputs are replaced with probability p") {
  std::vector<int> targets(20000, 5), preds(20000, 9);
  Rng rng(3);
  const Replacement r = sample_decoder_inputs(targets, preds, 0.3, rng);
  const double frac = static_cast<double>(r.replaced) / 20000.0;
  CHECK(std::abs(frac - 0.3) < 4.0 * std::sqrt(0.3 * 0.7 / 20000.0));
  std::size_t nine = 0;
  for (int t : r.tokens) nine += t == 9;
  CHECK(nine == r.replaced);
  CHECK(sample_decoder_inputs(targets, preds, 0.0, rng).replaced == 0);
  CHECK_THROWS_AS(sample_decoder_inputs(targets, std::vector<int>{1}, 0.3, rng), ContractError);
  CHECK_THROWS_AS(sample_decoder_inputs(targets, preds, 1.5, rng), RangeError);
}

TEST_CASE("decoder input and target framing") {
  const std::vector<int> y{4, 5};
  CHECK(decoder_input(y) == std::vector<int>{kBosToken, 4, 5});
  CHECK(decoder_target(y) == std::vector<int>{4, 5, kEosToken});
}

TEST_CASE("decoder contract errors") {
  TranslationModel model(tiny_encoder(), tiny_decoder(8), 1);
  std::vector<float> wave(40, 0.1f);
  Tape tape(false);
  CHECK_THROWS_AS(model.forward_translation_logits(tape, wave, std::vector<int>{4, 5}),
                  ContractError);
  CHECK_THROWS_AS(model.forward_translation_logits(tape, wave, std::vector<int>(11, kBosToken)),
                  LengthError);
  CHECK_THROWS_AS(model.forward_translation_logits(tape, wave, std::vector<int>{kBosToken, 8}),
                  VocabularyError);
  Var lp = model.forward_translation_logits(tape, wave, std::vector<int>{kBosToken, 4});
  CHECK(lp.value().shape() == Shape{2, 8});
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0;
    for (double v : lp.value().row(r)) s += std::exp(v);
    CHECK(s == doctest::Approx(1.0));
  }
  DecoderConfig bad = tiny_decoder(8);
  bad.model_dim = 8;
  bad.num_heads = 2;
  CHECK_THROWS_AS(TranslationModel(tiny_encoder(), bad, 1), ConfigError);
}

TEST_CASE("decoder is causal: later tokens do not change earlier rows") {
  TranslationModel model(tiny_encoder(), tiny_decoder(8), 2);
  std::vector<float> wave(40);
  for (std::size_t i = 0; i < wave.size(); ++i) wave[i] = std::sin(0.3f * static_cast<float>(i));
  Tape t1(false), t2(false);
  const Tensor a = model.forward_translation_logits(t1, wave, std::vector<int>{1, 4, 5}).value();
  const Tensor b = model.forward_translation_logits(t2, wave, std::vector<int>{1, 4, 6}).value();
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 8; ++c) CHECK(a.at(r, c) == b.at(r, c));
}

TEST_CASE("fine-tuning policies choose the trainable set") {
  TranslationModel model(tiny_encoder(), tiny_decoder(8), 3);
  TrainPolicy p;
  const FreezeSummary s = apply_finetune_policy(model, p);
  CHECK(model.encoder().has_adapters());
  for (const auto& name : s.trainable_names) {
    const bool ok = name.find("_adapter.") != std::string::npos ||
                    (name.rfind("decoder.", 0) == 0 &&
                     (name.find("norm.") != std::string::npos ||
                      name.find(".cross_attn.") != std::string::npos));
    CHECK_MESSAGE(ok, name);
  }
  model.visit([&](const std::string& name, Parameter& q) {
    if (name.find("_adapter.") != std::string::npos) CHECK(q.trainable);
    if (name.find("decoder.embedding") != std::string::npos) CHECK_FALSE(q.trainable);
    if (name.find(".self_attn.") != std::string::npos) CHECK_FALSE(q.trainable);
  });

  TranslationModel full(tiny_encoder(), tiny_decoder(8), 3);
  p.mode = FinetuneMode::kFull;
  apply_finetune_policy(full, p);
  full.visit([&](const std::string& name, Parameter& q) {
    if (name.rfind("encoder.", 0) == 0) CHECK(q.trainable);
  });
  CHECK(parse_finetune_mode("full") == FinetuneMode::kFull);
  CHECK_THROWS_AS(parse_finetune_mode("partial"), ConfigError);
}

TEST_CASE("translation training: determinism, log contents and zero-shot task set") {
  WorldConfig w;
  w.source_languages = {"aa", "bb", "cc"};
  w.num_concepts = 5;
  CorpusConfig cc;
  cc.train_pairs = {1200, 200, 20};
  cc.eval_pairs = 4;
  cc.bkg_per_language = 1;
  const Dataset ds = generate_corpus(w, cc, 2);
  std::vector<TaskSpec> specs;
  for (const auto& t : ds.tasks) specs.push_back(t.spec);
  const auto split = make_scenario_splits(specs, Scenario::kZeroShot);
  std::vector<const TaskData*> tasks;
  for (const auto& s : split.train) tasks.push_back(&ds.task(s.name()));

  TrainPolicy p;
  p.total_iters = 12;
  p.batch_frames = 60;
  p.peak_lr = 3e-3;
  auto run = [&](std::ostringstream& log) {
    TranslationModel m(tiny_encoder(), tiny_decoder(ds.world.target_vocab_size()), 4);
    apply_finetune_policy(m, p);
    const TrainResult r = run_translation_training(m, tasks, ds.world, p, &log);
    std::vector<double> flat;
    m.visit([&](const std::string&, Parameter& q) {
      flat.insert(flat.end(), q.value.values().begin(), q.value.values().end());
    });
    return std::make_pair(r, flat);
  };
  std::ostringstream l1, l2;
  const auto [r1, w1] = run(l1);
  const auto [r2, w2] = run(l2);
  CHECK(w1 == w2);
  CHECK(l1.str() == l2.str());
  REQUIRE(r1.log.size() == 12);
  for (const auto& e : r1.log) {
    for (const auto& t : e.tasks) CHECK(t == "aa-en");
    CHECK(std::isfinite(e.loss));
    CHECK(e.lr == doctest::Approx(lr_at(e.iter, p)));
  }
  CHECK(l1.str().find("tasks=aa-en") != std::string::npos);
  CHECK(l1.str().find("bb-en") == std::string::npos);

  TranslationModel m(tiny_encoder(), tiny_decoder(ds.world.target_vocab_size()), 4);
  const double acc = token_accuracy(m, ds.tasks[0].eval, ds.world);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  CHECK_THROWS_AS(run_translation_training(m, {}, ds.world, p), DataError);
}
