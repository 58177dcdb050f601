#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "samukd/distill.hpp"
#include "samukd/error.hpp"

using namespace samukd;

namespace {

EncoderConfig small_encoder() {
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

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST_CASE("kd loss is beta times the cosine distance") {
  const std::vector<double> e{1.0, 2.0, -0.5}, z{0.3, -1.0, 2.0};
  const double want = 32.0 * (1.0 - cosine(e, z));
  CHECK(kd_loss_value(e, z, 32.0) == doctest::Approx(want).epsilon(1e-12));
  CHECK(kd_loss_value(e, e, 32.0) == doctest::Approx(0.0));
  const std::vector<double> neg{-1.0, -2.0, 0.5};
  CHECK(kd_loss_value(e, neg, 32.0) == doctest::Approx(64.0));
  const std::vector<double> zero(3, 0.0);
  CHECK_THROWS_AS(kd_loss_value(zero, z, 1.0), NumericError);

  Tape tape(false);
  Var v = kd_loss(tape.constant(Tensor({1, 3}, e)), z, 32.0);
  CHECK(v.value()[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("pooling weights form a distribution over frames") {
  Rng rng(2);
  PoolingHead head(16, 5, rng);
  Tape tape(false);
  Var ctx = tape.constant(randn({7, 16}, 1.0, rng));
  Var w = attention_weights(tape, ctx, head);
  REQUIRE(w.value().rows() == 7);
  double s = 0;
  for (double v : w.value().values()) {
    CHECK(v > 0.0);
    s += v;
  }
  CHECK(s == doctest::Approx(1.0));
  Var e = attentive_pool(tape, ctx, head);
  CHECK(e.value().shape() == Shape{1, 5});
  for (double v : e.value().values()) CHECK(std::abs(v) < 1.0);  // tanh range
}

TEST_CASE("teacher embeds a concept sequence the same way in every language") {
  TeacherOracle teacher(12, 8, 3);
  const std::vector<int> a{1, 4, 7};
  const auto z = teacher.embed(a);
  double norm = 0;
  for (double v : z) norm += v * v;
  CHECK(norm == doctest::Approx(1.0));
  // The mean of the concept rows, normalized.
  std::vector<double> mean(8, 0.0);
  for (int c : a)
    for (std::size_t j = 0; j < 8; ++j) mean[j] += teacher.table().at(c, j);
  CHECK(cosine(mean, z) == doctest::Approx(1.0));
  CHECK_THROWS_AS(teacher.embed(std::vector<int>{}), DataError);
  CHECK_THROWS_AS(teacher.embed(std::vector<int>{12}), VocabularyError);
}

TEST_CASE("distillation freezes only the feature extractor") {
  Rng rng(1);
  SpeechEncoder enc(small_encoder(), rng);
  prepare_for_distillation(enc);
  enc.visit("", [](const std::string& name, Parameter& p) {
    CHECK(p.trainable == (name.rfind("features.", 0) != 0));
  });
}

TEST_CASE("speed perturbation adds one copy per non-unit factor") {
  Corpus c;
  for (int i = 0; i < 3; ++i) {
    Utterance u;
    u.id = "u" + std::to_string(i);
    u.waveform.assign(40, 0.5f);
    u.frames = 10;
    c.utterances.push_back(u);
  }
  const std::vector<double> factors{0.9, 1.0, 1.1};
  const Corpus out = augment_with_speed_perturbation(c, factors, 4);
  CHECK(out.utterances.size() == 9);
  CHECK(out.utterances[3].waveform.size() == 44);
  CHECK(out.utterances[3].frames == 11);
}

TEST_CASE("distillation lowers the loss and is deterministic") {
  WorldConfig w;
  w.source_languages = {"aa", "bb"};
  w.num_concepts = 8;
  CorpusConfig cc;
  cc.train_pairs = {1, 1};
  cc.eval_pairs = 1;
  cc.bkg_per_language = 40;
  const Dataset ds = generate_corpus(w, cc, 4);
  const TeacherOracle teacher(8, 8, 9);
  DistillConfig cfg;
  cfg.steps = 60;
  cfg.batch_size = 8;
  cfg.embed_dim = 8;
  cfg.speed_perturb = false;

  auto run = [&](std::ostream* log) {
    Rng rng(3);
    SpeechEncoder enc(small_encoder(), rng);
    PoolingHead head(16, 8, rng);
    const DistillResult r = run_distillation(enc, head, teacher, ds.background, cfg, log);
    return std::make_pair(r, utterance_embedding(enc, head, ds.background.utterances[0].waveform));
  };
  std::ostringstream log;
  const auto [r1, e1] = run(&log);
  const auto [r2, e2] = run(nullptr);
  CHECK(r1.final_loss < r1.initial_loss);
  CHECK(r1.log.size() == 60);
  CHECK(e1 == e2);
  CHECK(log.str().find("step=60 ") != std::string::npos);
  CHECK_THROWS_AS(
      [&] {
        Rng rng(3);
        SpeechEncoder enc(small_encoder(), rng);
        PoolingHead head(16, 8, rng);
        run_distillation(enc, head, teacher, Corpus{}, cfg);
      }(),
      DataError);
}

TEST_CASE("recall at 1 counts nearest-neighbour hits") {
  const std::vector<std::vector<double>> q{{1, 0}, {0, 1}, {1, 1}};
  const std::vector<std::vector<double>> c{{2, 0.1}, {0.1, 2}, {-1, 1}};
  // Query 2 is closest to candidate 0 or 1, not to its own index.
  CHECK(recall_at_1(q, c) == doctest::Approx(2.0 / 3.0));
}
