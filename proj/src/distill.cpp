#include "samukd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include "samukd/error.hpp"
#include "samukd/optim.hpp"

namespace samukd {

PoolingHead::PoolingHead(std::size_t model_dim, std::size_t embed_dim, Rng& rng)
    : scorer(model_dim, 1, rng), projection(model_dim, embed_dim, rng) {}

void PoolingHead::visit(const std::string& prefix, const ParameterVisitor& fn) {
  scorer.visit(prefix + "scorer", fn);
  projection.visit(prefix + "projection", fn);
}

Var attention_weights(Tape& tape, Var context, PoolingHead& head) {
  Var scores = head.scorer(tape, context);                   // [T×1]
  return transpose(softmax_rows(transpose(scores)));         // softmax over frames
}

Var attentive_pool(Tape& tape, Var context, PoolingHead& head) {
  Var w = attention_weights(tape, context, head);
  Var pooled = matmul(transpose(w), context);  // [1×d]
  return activation(head.projection(tape, pooled), Activation::kTanh);
}

TeacherOracle::TeacherOracle(std::size_t num_concepts, std::size_t embed_dim, std::uint64_t seed) {
  if (num_concepts == 0 || embed_dim == 0) throw ConfigError("teacher: empty embedding table");
  Rng rng(seed);
  table_ = randn({num_concepts, embed_dim}, 1.0, rng);
}

std::vector<double> TeacherOracle::embed(std::span<const int> concepts) const {
  if (concepts.empty()) throw DataError("teacher: empty concept sequence");
  std::vector<double> z(embed_dim(), 0.0);
  for (int c : concepts) {
    if (c < 0 || static_cast<std::size_t>(c) >= num_concepts()) {
      throw VocabularyError("teacher: unknown concept id " + std::to_string(c));
    }
    const auto row = table_.row(static_cast<std::size_t>(c));
    for (std::size_t j = 0; j < z.size(); ++j) z[j] += row[j];
  }
  double norm = 0.0;
  for (double v : z) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw NumericError("teacher: sentence embedding has zero norm");
  for (auto& v : z) v /= norm;
  return z;
}

namespace {

struct CosineParts {
  double dot = 0.0;
  double ne = 0.0;
  double nz = 0.0;
};

CosineParts cosine_parts(std::span<const double> e, std::span<const double> z) {
  if (e.size() != z.size()) {
    throw DimensionError("kd_loss: embedding sizes " + std::to_string(e.size()) + " and " +
                         std::to_string(z.size()) + " differ");
  }
  CosineParts p;
  for (std::size_t i = 0; i < e.size(); ++i) {
    p.dot += e[i] * z[i];
    p.ne += e[i] * e[i];
    p.nz += z[i] * z[i];
  }
  p.ne = std::sqrt(p.ne);
  p.nz = std::sqrt(p.nz);
  if (p.ne == 0.0) throw NumericError("kd_loss: student embedding has zero norm");
  if (p.nz == 0.0) throw NumericError("kd_loss: teacher embedding has zero norm");
  return p;
}

}  // namespace

double kd_loss_value(std::span<const double> e, std::span<const double> z, double beta) {
  const auto p = cosine_parts(e, z);
  return beta * (1.0 - p.dot / (p.ne * p.nz));
}

Var kd_loss(Var e, std::span<const double> z, double beta) {
  const auto& ev = e.value();
  const auto p = cosine_parts(ev.values(), z);
  const double loss = beta * (1.0 - p.dot / (p.ne * p.nz));
  std::vector<double> zc(z.begin(), z.end());
  return e.tape->push(Tensor::scalar(loss), {e},
                      [e, zc = std::move(zc), p, beta](Tape& t, std::uint32_t self) {
                        const double g = t.grad(self)[0];
                        const auto& x = t.value(e);
                        auto& ge = t.grad(e);
                        const double inv = 1.0 / (p.ne * p.nz);
                        const double k = p.dot / (p.ne * p.ne * p.ne * p.nz);
                        for (std::size_t i = 0; i < ge.size(); ++i) {
                          ge[i] -= g * beta * (zc[i] * inv - x[i] * k);
                        }
                      });
}

void DistillConfig::validate() const {
  if (!(beta > 0.0)) throw ConfigError("distill: beta must be positive");
  if (!(lr > 0.0)) throw ConfigError("distill: lr must be positive");
  if (warmup_frac < 0.0 || const_frac < 0.0 || warmup_frac + const_frac > 1.0) {
    throw ConfigError("distill: need warmup_frac, const_frac >= 0 and their sum <= 1");
  }
  if (batch_size == 0) throw ConfigError("distill: batch_size must be >= 1");
  if (embed_dim == 0) throw ConfigError("distill: embed_dim must be >= 1");
  if (!(balance_alpha >= 0.0 && balance_alpha <= 1.0)) {
    throw ConfigError("distill: balance_alpha must lie in [0, 1]");
  }
  for (double f : perturb_factors) {
    if (!(f > 0.0)) throw ConfigError("distill: speed factors must be positive");
  }
}

void prepare_for_distillation(SpeechEncoder& encoder) {
  encoder.visit("", [](const std::string& name, Parameter& p) {
    p.trainable = name.rfind("features.", 0) != 0;
  });
}

Corpus augment_with_speed_perturbation(const Corpus& corpus, std::span<const double> factors,
                                       std::size_t down_factor) {
  Corpus out = corpus;
  for (double f : factors) {
    if (f == 1.0) continue;
    for (const auto& u : corpus.utterances) {
      Utterance v = u;
      v.id = u.id + "-sp" + std::to_string(std::lround(f * 100));
      v.waveform = speed_perturb(u.waveform, f);
      v.frames = v.waveform.size() / down_factor;
      if (v.frames == 0) continue;
      out.utterances.push_back(std::move(v));
    }
  }
  return out;
}

DistillResult run_distillation(SpeechEncoder& encoder, PoolingHead& head,
                               const TeacherOracle& teacher, const Corpus& corpus,
                               const DistillConfig& config, std::ostream* log) {
  config.validate();
  if (corpus.empty()) throw DataError("distillation corpus is empty");
  if (head.embed_dim() != teacher.embed_dim()) {
    throw ConfigError("distill: pooling head emits " + std::to_string(head.embed_dim()) +
                      " dims, teacher " + std::to_string(teacher.embed_dim()));
  }
  prepare_for_distillation(encoder);

  const Corpus pool =
      config.speed_perturb
          ? augment_with_speed_perturbation(corpus, config.perturb_factors,
                                            encoder.config().features.down_factor())
          : corpus;
  std::map<std::string, std::vector<std::size_t>> by_language;
  for (std::size_t i = 0; i < pool.utterances.size(); ++i) {
    by_language[pool.utterances[i].language].push_back(i);
  }
  std::vector<const std::vector<std::size_t>*> groups;
  std::vector<std::size_t> counts;
  for (const auto& [lang, idx] : by_language) {
    groups.push_back(&idx);
    counts.push_back(idx.size());
  }
  BalancedSampler sampler(counts, config.balance_alpha);
  std::vector<std::vector<double>> targets;
  targets.reserve(pool.utterances.size());
  for (const auto& u : pool.utterances) targets.push_back(teacher.embed(u.concepts));

  auto params = collect_parameters(encoder, "encoder.");
  auto head_params = collect_parameters(head, "head.");
  params.insert(params.end(), head_params.begin(), head_params.end());
  AdamOptimizer opt(params);
  Rng rng(config.seed);
  EncodeOptions enc_opts;
  enc_opts.adapters_active = false;

  DistillResult result;
  result.initial_loss = mean_distillation_loss(encoder, head, teacher, corpus, config.beta);
  for (std::size_t step = 1; step <= config.steps; ++step) {
    opt.zero_grad();
    Tape tape;
    Var total;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const auto& group = *groups[sampler.draw(rng)];
      const auto j = std::min(group.size() - 1,
                              static_cast<std::size_t>(uniform01(rng) * static_cast<double>(group.size())));
      const auto& u = pool.utterances[group[j]];
      Var c = encoder.encode(tape, u.waveform, enc_opts);
      Var l = kd_loss(attentive_pool(tape, c, head), targets[group[j]], config.beta);
      total = b == 0 ? l : add(total, l);
    }
    Var loss = scale(total, 1.0 / static_cast<double>(config.batch_size));
    tape.backward(loss);
    const double lr = three_phase_lr(step, config.steps, config.lr, config.warmup_frac,
                                     config.const_frac);
    opt.step(lr);
    const double v = loss.value()[0];
    if (!std::isfinite(v)) throw NumericError("distillation loss diverged at step " + std::to_string(step));
    result.log.push_back({step, v, lr});
    if (log != nullptr) {
      *log << "step=" << step << " loss=" << v << " lr=" << lr << " seed=" << config.seed
           << "\n";
    }
  }
  result.final_loss = mean_distillation_loss(encoder, head, teacher, corpus, config.beta);
  return result;
}

double mean_distillation_loss(SpeechEncoder& encoder, PoolingHead& head,
                              const TeacherOracle& teacher, const Corpus& corpus, double beta) {
  if (corpus.empty()) throw DataError("distillation corpus is empty");
  double total = 0.0;
  for (const auto& u : corpus.utterances) {
    total += kd_loss_value(utterance_embedding(encoder, head, u.waveform), teacher.embed(u.concepts),
                           beta);
  }
  return total / static_cast<double>(corpus.utterances.size());
}

std::vector<double> utterance_embedding(SpeechEncoder& encoder, PoolingHead& head,
                                        std::span<const float> waveform) {
  Tape tape(false);
  EncodeOptions opts;
  opts.adapters_active = false;
  Var e = attentive_pool(tape, encoder.encode(tape, waveform, opts), head);
  const auto& v = e.value();
  return {v.values().begin(), v.values().end()};
}

double recall_at_1(const std::vector<std::vector<double>>& queries,
                   const std::vector<std::vector<double>>& candidates) {
  if (queries.empty() || queries.size() != candidates.size()) {
    throw DataError("retrieval needs equally many queries and candidates");
  }
  auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      d += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    return na == 0.0 || nb == 0.0 ? -2.0 : d / std::sqrt(na * nb);
  };
  std::size_t hits = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    std::size_t best = 0;
    double best_score = -3.0;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      const double s = cosine(queries[i], candidates[j]);
      if (s > best_score) {
        best_score = s;
        best = j;
      }
    }
    if (best == i) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

}  // namespace samukd
