#include "samukd/translator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "samukd/error.hpp"

namespace samukd {

void DecoderConfig::validate() const {
  if (num_heads == 0 || model_dim % num_heads != 0) {
    throw ConfigError("decoder model_dim must be divisible by num_heads");
  }
  if (model_dim < 2) throw ConfigError("decoder model_dim must be >= 2");
  if (vocab_size < 4) throw ConfigError("decoder vocabulary needs pad, bos, eos and one token");
  if (max_target_len == 0) throw ConfigError("decoder max_target_len must be >= 1");
  if (ffn_dim == 0) throw ConfigError("decoder ffn_dim must be >= 1");
}

void DecoderLayer::visit(const std::string& prefix, const ParameterVisitor& fn) {
  self_norm.visit(prefix + ".self_norm", fn);
  self_attn.visit(prefix + ".self_attn", fn);
  cross_norm.visit(prefix + ".cross_norm", fn);
  cross_attn.visit(prefix + ".cross_attn", fn);
  ffn_norm.visit(prefix + ".ffn_norm", fn);
  ffn_in.visit(prefix + ".ffn_in", fn);
  ffn_out.visit(prefix + ".ffn_out", fn);
}

Tensor sinusoid_table(std::size_t rows, std::size_t dim) {
  Tensor t = Tensor::matrix(rows, dim);
  for (std::size_t p = 0; p < rows; ++p) {
    for (std::size_t i = 0; i < dim; i += 2) {
      const double angle =
          static_cast<double>(p) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
      t.at(p, i) = std::sin(angle);
      if (i + 1 < dim) t.at(p, i + 1) = std::cos(angle);
    }
  }
  return t;
}

Decoder::Decoder(DecoderConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  const std::size_t d = config_.model_dim;
  embedding_ = Parameter(randn({config_.vocab_size, d}, 1.0, rng));
  positions_ = sinusoid_table(config_.max_target_len, d);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    DecoderLayer layer{LayerNormParams(d),
                       MultiHeadAttention(d, config_.num_heads, rng),
                       LayerNormParams(d),
                       MultiHeadAttention(d, config_.num_heads, rng),
                       LayerNormParams(d),
                       Linear(d, config_.ffn_dim, rng, std::sqrt(2.0)),
                       Linear(config_.ffn_dim, d, rng)};
    layers_.push_back(std::move(layer));
  }
  final_norm_ = LayerNormParams(d);
  output_ = Linear(d, config_.vocab_size, rng);
}

Decoder::Memory Decoder::prepare_memory(Tape& tape, Var encoder_out) {
  if (encoder_out.value().cols() != config_.model_dim) {
    throw ConfigError("decoder expects " + std::to_string(config_.model_dim) +
                      "-dim encoder output, got " + std::to_string(encoder_out.value().cols()));
  }
  if (config_.memory_positions) {
    encoder_out = add_const(encoder_out,
                            sinusoid_table(encoder_out.value().rows(), config_.model_dim));
  }
  Memory m;
  for (auto& layer : layers_) {
    m.keys.push_back(layer.cross_attn.key(tape, encoder_out));
    m.values.push_back(layer.cross_attn.value(tape, encoder_out));
  }
  return m;
}

Var Decoder::forward(Tape& tape, const Memory& memory, std::span<const int> tokens) {
  const std::size_t len = tokens.size();
  if (len == 0) throw LengthError("decoder input is empty");
  if (len > config_.max_target_len) {
    throw LengthError("decoder input of " + std::to_string(len) + " tokens exceeds max_target_len " +
                      std::to_string(config_.max_target_len));
  }
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= config_.vocab_size) {
      throw VocabularyError("token id " + std::to_string(t) + " outside the decoder vocabulary");
    }
  }
  Tensor pos = Tensor::matrix(len, config_.model_dim);
  std::copy(positions_.data(), positions_.data() + pos.size(), pos.data());
  Var x = add_const(gather_rows(tape.param(embedding_), tokens), pos);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = layers_[l];
    Var h = layer.self_norm(tape, x);
    x = add(x, layer.self_attn(tape, h, h, true));
    h = layer.cross_norm(tape, x);
    x = add(x, layer.cross_attn.attend(tape, h, memory.keys[l], memory.values[l], false));
    h = layer.ffn_norm(tape, x);
    x = add(x, layer.ffn_out(tape, activation(layer.ffn_in(tape, h), Activation::kRelu)));
  }
  return log_softmax_rows(output_(tape, final_norm_(tape, x)));
}

void Decoder::visit(const std::string& prefix, const ParameterVisitor& fn) {
  fn(prefix + "embedding", embedding_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].visit(prefix + "layers." + std::to_string(i), fn);
  }
  final_norm_.visit(prefix + "final_norm", fn);
  output_.visit(prefix + "output", fn);
}

TranslationModel::TranslationModel(EncoderConfig encoder, DecoderConfig decoder,
                                   std::uint64_t seed) {
  if (encoder.model_dim != decoder.model_dim) {
    throw ConfigError("encoder model_dim " + std::to_string(encoder.model_dim) +
                      " != decoder model_dim " + std::to_string(decoder.model_dim));
  }
  Rng enc_rng(mix_seed(seed, "encoder"));
  encoder_ = SpeechEncoder(std::move(encoder), enc_rng);
  Rng dec_rng(mix_seed(seed, "decoder"));
  decoder_ = Decoder(std::move(decoder), dec_rng);
}

Var TranslationModel::forward_translation_logits(Tape& tape, std::span<const float> waveform,
                                                 std::span<const int> prefix,
                                                 const EncodeOptions& options) {
  if (prefix.empty() || prefix.front() != kBosToken) {
    throw ContractError("decoder prefix must start with BOS");
  }
  if (prefix.size() > decoder_.config().max_target_len) {
    throw LengthError("prefix of " + std::to_string(prefix.size()) +
                      " tokens exceeds max_target_len " +
                      std::to_string(decoder_.config().max_target_len));
  }
  Var c = encoder_.encode(tape, waveform, options);
  return decoder_.forward(tape, decoder_.prepare_memory(tape, c), prefix);
}

void TranslationModel::visit(const ParameterVisitor& fn) {
  encoder_.visit("encoder.", fn);
  decoder_.visit("decoder.", fn);
}

std::vector<NamedParameter> TranslationModel::named_parameters() {
  std::vector<NamedParameter> out;
  visit([&out](const std::string& name, Parameter& p) { out.push_back({name, &p}); });
  return out;
}

std::size_t TranslationModel::parameter_count() {
  std::size_t n = 0;
  visit([&n](const std::string&, Parameter& p) { n += p.value.size(); });
  return n;
}

const char* finetune_mode_name(FinetuneMode mode) {
  return mode == FinetuneMode::kAdapters ? "adapters" : "full";
}

FinetuneMode parse_finetune_mode(const std::string& name) {
  if (name == "adapters") return FinetuneMode::kAdapters;
  if (name == "full") return FinetuneMode::kFull;
  throw ConfigError("train: unknown mode '" + name + "' (expected adapters or full)");
}

MaskConfig mask_from_fractions(double time_fraction, std::size_t time_span, double feat_fraction,
                               std::size_t feat_span) {
  if (time_span == 0 || feat_span == 0) throw ConfigError("mask spans must be >= 1");
  MaskConfig m;
  m.time_prob = time_fraction / static_cast<double>(time_span);
  m.time_span = time_span;
  m.feat_prob = feat_fraction / static_cast<double>(feat_span);
  m.feat_span = feat_span;
  return m;
}

void TrainPolicy::validate() const {
  if (!(replacement_prob >= 0.0 && replacement_prob <= 1.0)) {
    throw ConfigError("train: replacement_prob must lie in [0, 1]");
  }
  if (!(peak_lr > 0.0)) throw ConfigError("train: peak_lr must be positive");
  if (total_iters == 0) throw ConfigError("train: total_iters must be >= 1");
  if (warmup_frac < 0.0 || const_frac < 0.0 || warmup_frac + const_frac > 1.0) {
    throw ConfigError("train: need warmup_frac, const_frac >= 0 and warmup_frac + const_frac <= 1");
  }
  if (batch_frames == 0) throw ConfigError("train: batch_frames must be >= 1");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw ConfigError("train: label_smoothing must lie in [0, 1)");
  }
  if (!(balance_alpha >= 0.0 && balance_alpha <= 1.0)) {
    throw ConfigError("train: balance_alpha must lie in [0, 1]");
  }
  mask.validate();
  adam.validate();
  adapter.hidden_size(2);
}

namespace {

bool decoder_param_trainable(const std::string& name) {
  return name.find("norm.") != std::string::npos ||
         name.find(".cross_attn.") != std::string::npos;
}

}  // namespace

FreezeSummary apply_finetune_policy(TranslationModel& model, const TrainPolicy& policy) {
  policy.validate();
  const bool adapters = policy.mode == FinetuneMode::kAdapters;
  if (adapters && !model.encoder().has_adapters()) {
    Rng rng(mix_seed(policy.seed, "adapters"));
    model.encoder().insert_adapters(policy.adapter, rng);
  }
  FreezeSummary summary;
  model.visit([&](const std::string& name, Parameter& p) {
    if (name.rfind("encoder.", 0) == 0) {
      p.trainable = adapters ? name.find("_adapter.") != std::string::npos : true;
    } else {
      p.trainable = decoder_param_trainable(name);
    }
    summary.total += p.value.size();
    if (p.trainable) {
      summary.trainable += p.value.size();
      summary.trainable_names.push_back(name);
    }
  });
  return summary;
}

double lr_at(std::size_t iter, const TrainPolicy& policy) {
  return three_phase_lr(iter, policy.total_iters, policy.peak_lr, policy.warmup_frac,
                        policy.const_frac);
}

Replacement sample_decoder_inputs(std::span<const int> targets, std::span<const int> predictions,
                                  double p, Rng& rng) {
  if (targets.size() != predictions.size()) {
    throw ContractError("sample_decoder_inputs: " + std::to_string(targets.size()) +
                        " targets vs " + std::to_string(predictions.size()) + " predictions");
  }
  if (!(p >= 0.0 && p <= 1.0)) throw RangeError("replacement probability must lie in [0, 1]");
  Replacement r;
  r.tokens.assign(targets.begin(), targets.end());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (uniform01(rng) < p) {
      r.tokens[i] = predictions[i];
      ++r.replaced;
    }
  }
  return r;
}

// --- CTC -------------------------------------------------------------------

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct CtcLattice {
  std::vector<int> ext;  // blank-extended label sequence
  std::vector<double> alpha;
  std::vector<double> beta;
  double log_likelihood = kNegInf;
};

CtcLattice ctc_lattice(const Tensor& lp, std::span<const int> target, int blank, bool with_beta) {
  const std::size_t frames = lp.rows();
  const std::size_t cols = lp.cols();
  if (blank < 0 || static_cast<std::size_t>(blank) >= cols) {
    throw DimensionError("ctc: blank index outside the log-prob columns");
  }
  std::size_t repeats = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] < 0 || static_cast<std::size_t>(target[i]) >= cols || target[i] == blank) {
      throw VocabularyError("ctc: target label " + std::to_string(target[i]) + " is invalid");
    }
    if (i > 0 && target[i] == target[i - 1]) ++repeats;
  }
  if (frames == 0 || frames < target.size() + repeats) {
    throw InfeasibleError("ctc: " + std::to_string(frames) + " frames cannot emit " +
                          std::to_string(target.size()) + " labels with " +
                          std::to_string(repeats) + " repeats");
  }
  CtcLattice lat;
  lat.ext.push_back(blank);
  for (int t : target) {
    lat.ext.push_back(t);
    lat.ext.push_back(blank);
  }
  const std::size_t s = lat.ext.size();
  auto skip_ok = [&](std::size_t j) {
    return j >= 2 && lat.ext[j] != blank && lat.ext[j] != lat.ext[j - 2];
  };
  lat.alpha.assign(frames * s, kNegInf);
  lat.alpha[0] = lp.at(0, static_cast<std::size_t>(blank));
  if (s > 1) lat.alpha[1] = lp.at(0, static_cast<std::size_t>(lat.ext[1]));
  for (std::size_t t = 1; t < frames; ++t) {
    for (std::size_t j = 0; j < s; ++j) {
      double a = lat.alpha[(t - 1) * s + j];
      if (j >= 1) a = log_add(a, lat.alpha[(t - 1) * s + j - 1]);
      if (skip_ok(j)) a = log_add(a, lat.alpha[(t - 1) * s + j - 2]);
      if (a != kNegInf) a += lp.at(t, static_cast<std::size_t>(lat.ext[j]));
      lat.alpha[t * s + j] = a;
    }
  }
  lat.log_likelihood = lat.alpha[(frames - 1) * s + s - 1];
  if (s > 1) lat.log_likelihood = log_add(lat.log_likelihood, lat.alpha[(frames - 1) * s + s - 2]);
  if (lat.log_likelihood == kNegInf || std::isnan(lat.log_likelihood)) {
    throw InfeasibleError("ctc: target has zero probability under the given frames");
  }
  if (!with_beta) return lat;
  lat.beta.assign(frames * s, kNegInf);
  lat.beta[(frames - 1) * s + s - 1] = lp.at(frames - 1, static_cast<std::size_t>(lat.ext[s - 1]));
  if (s > 1) {
    lat.beta[(frames - 1) * s + s - 2] =
        lp.at(frames - 1, static_cast<std::size_t>(lat.ext[s - 2]));
  }
  for (std::size_t t = frames - 1; t-- > 0;) {
    for (std::size_t j = 0; j < s; ++j) {
      double b = lat.beta[(t + 1) * s + j];
      if (j + 1 < s) b = log_add(b, lat.beta[(t + 1) * s + j + 1]);
      if (j + 2 < s && skip_ok(j + 2)) b = log_add(b, lat.beta[(t + 1) * s + j + 2]);
      if (b != kNegInf) b += lp.at(t, static_cast<std::size_t>(lat.ext[j]));
      lat.beta[t * s + j] = b;
    }
  }
  return lat;
}

}  // namespace

double ctc_negative_log_likelihood(const Tensor& log_probs, std::span<const int> target,
                                   int blank) {
  return -ctc_lattice(log_probs, target, blank, false).log_likelihood;
}

Var ctc_loss(Var log_probs, std::span<const int> target, int blank) {
  CtcLattice lat = ctc_lattice(log_probs.value(), target, blank, true);
  const double nll = -lat.log_likelihood;
  return log_probs.tape->push(
      Tensor::scalar(nll), {log_probs},
      [log_probs, lat = std::move(lat)](Tape& t, std::uint32_t self) {
        const double g = t.grad(self)[0];
        const auto& lp = t.value(log_probs);
        auto& gl = t.grad(log_probs);
        const std::size_t s = lat.ext.size();
        for (std::size_t f = 0; f < lp.rows(); ++f) {
          for (std::size_t j = 0; j < s; ++j) {
            const double ab = lat.alpha[f * s + j] + lat.beta[f * s + j];
            if (ab == kNegInf) continue;
            const auto k = static_cast<std::size_t>(lat.ext[j]);
            // Each lattice node's occupancy, divided out of the emission
            // counted twice in alpha·beta.
            gl.at(f, k) -= g * std::exp(ab - lp.at(f, k) - lat.log_likelihood);
          }
        }
      });
}

// --- training --------------------------------------------------------------

std::vector<int> decoder_input(std::span<const int> target) {
  std::vector<int> out;
  out.reserve(target.size() + 1);
  out.push_back(kBosToken);
  out.insert(out.end(), target.begin(), target.end());
  return out;
}

std::vector<int> decoder_target(std::span<const int> target) {
  std::vector<int> out(target.begin(), target.end());
  out.push_back(kEosToken);
  return out;
}

std::string format_log_entry(const TrainLogEntry& e) {
  std::ostringstream os;
  os << "iter=" << e.iter << " lr=" << e.lr << " loss=" << e.loss
     << " masked=" << e.masked_fraction << " replaced=" << e.replaced_fraction << " tasks=";
  for (std::size_t i = 0; i < e.tasks.size(); ++i) os << (i ? "," : "") << e.tasks[i];
  return os.str();
}

namespace {

std::vector<int> argmax_rows(const Tensor& t) {
  std::vector<int> out(t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto row = t.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace

TrainResult run_translation_training(TranslationModel& model,
                                     const std::vector<const TaskData*>& tasks,
                                     const SyntheticWorld& world, const TrainPolicy& policy,
                                     std::ostream* log) {
  policy.validate();
  if (tasks.empty()) throw DataError("no translation tasks to train on");
  std::vector<std::size_t> counts;
  for (const auto* t : tasks) {
    if (t->train.empty()) throw DataError("task " + t->spec.name() + " has no training pairs");
    counts.push_back(t->train.utterances.size());
  }
  auto params = model.named_parameters();
  if (std::none_of(params.begin(), params.end(),
                   [](const NamedParameter& p) { return p.param->trainable; })) {
    throw ContractError("no trainable parameters; apply a finetune policy first");
  }
  const BalancedSampler sampler(counts, policy.balance_alpha);
  AdamOptimizer opt(params, policy.adam);
  Rng rng(policy.seed);
  auto& encoder = model.encoder();
  auto& decoder = model.decoder();

  TrainResult result;
  for (std::size_t iter = 1; iter <= policy.total_iters; ++iter) {
    // Assemble the batch first so the draw sequence does not depend on masks.
    std::vector<const Utterance*> batch;
    std::set<std::string> names;
    std::size_t frames = 0;
    while (frames < policy.batch_frames) {
      const auto* task = tasks[sampler.draw(rng)];
      const auto& pool = task->train.utterances;
      const auto j = std::min(pool.size() - 1,
                              static_cast<std::size_t>(uniform01(rng) * static_cast<double>(pool.size())));
      batch.push_back(&pool[j]);
      names.insert(task->spec.name());
      frames += std::max<std::size_t>(pool[j].frames, 1);
    }

    opt.zero_grad();
    Tape tape;
    Var total;
    std::size_t tokens = 0, masked = 0, all_frames = 0, replaced = 0, replaceable = 0;
    EncodeOptions enc_opts;
    enc_opts.mask = &policy.mask;
    enc_opts.rng = &rng;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& u = *batch[b];
      const auto target = world.target_tokens(u.concepts);
      auto input = decoder_input(target);
      const auto gold = decoder_target(target);
      MaskRecord rec;
      Var c = encoder.encode(tape, u.waveform, enc_opts, &rec);
      masked += rec.masked_frame_count();
      all_frames += rec.masked_frames.size();
      if (policy.replacement_prob > 0.0) {
        Tape probe(false);
        Var mem_c = probe.constant(c.value());
        const auto pred = argmax_rows(
            decoder.forward(probe, decoder.prepare_memory(probe, mem_c), input).value());
        // Input position i+1 holds target i, which the output at i predicts.
        std::span<const int> shifted(input.data() + 1, input.size() - 1);
        const auto mixed = sample_decoder_inputs(
            shifted, std::span<const int>(pred.data(), pred.size() - 1), policy.replacement_prob, rng);
        std::copy(mixed.tokens.begin(), mixed.tokens.end(), input.begin() + 1);
        replaced += mixed.replaced;
        replaceable += shifted.size();
      }
      Var lp = decoder.forward(tape, decoder.prepare_memory(tape, c), input);
      Var nll = smoothed_nll(lp, gold, policy.label_smoothing);
      total = b == 0 ? nll : add(total, nll);
      tokens += gold.size();
    }
    Var loss = scale(total, 1.0 / static_cast<double>(tokens));
    tape.backward(loss);
    const double lr = lr_at(iter, policy);
    opt.step(lr);

    TrainLogEntry entry;
    entry.iter = iter;
    entry.lr = lr;
    entry.loss = loss.value()[0];
    if (!std::isfinite(entry.loss)) {
      throw NumericError("translation loss diverged at iteration " + std::to_string(iter));
    }
    entry.masked_fraction =
        all_frames ? static_cast<double>(masked) / static_cast<double>(all_frames) : 0.0;
    entry.replaced_fraction =
        replaceable ? static_cast<double>(replaced) / static_cast<double>(replaceable) : 0.0;
    entry.tasks.assign(names.begin(), names.end());
    if (log != nullptr) *log << format_log_entry(entry) << "\n";
    result.log.push_back(std::move(entry));
  }
  return result;
}

double token_accuracy(TranslationModel& model, const Corpus& corpus, const SyntheticWorld& world) {
  if (corpus.empty()) throw DataError("accuracy needs a non-empty corpus");
  std::size_t hits = 0, total = 0;
  for (const auto& u : corpus.utterances) {
    const auto target = world.target_tokens(u.concepts);
    const auto gold = decoder_target(target);
    Tape tape(false);
    const auto pred = argmax_rows(
        model.forward_translation_logits(tape, u.waveform, decoder_input(target)).value());
    for (std::size_t i = 0; i < gold.size(); ++i) hits += pred[i] == gold[i] ? 1 : 0;
    total += gold.size();
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace samukd
