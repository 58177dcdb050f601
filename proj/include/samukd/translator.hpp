#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "samukd/datagen.hpp"
#include "samukd/encoder.hpp"
#include "samukd/gradcheck.hpp"
#include "samukd/optim.hpp"

namespace samukd {

struct DecoderConfig {
  std::size_t num_layers = 2;
  std::size_t model_dim = 32;
  std::size_t ffn_dim = 64;
  std::size_t num_heads = 4;
  std::size_t vocab_size = 27;
  // Longest decoder input (BOS plus target tokens).
  std::size_t max_target_len = 16;
  // Add fixed sinusoidal positions to the encoder output before the
  // cross-attention projections.
  bool memory_positions = true;

  void validate() const;
};

// Fixed sinusoidal position table [rows×dim].
Tensor sinusoid_table(std::size_t rows, std::size_t dim);

struct DecoderLayer {
  LayerNormParams self_norm;
  MultiHeadAttention self_attn;
  LayerNormParams cross_norm;
  MultiHeadAttention cross_attn;
  LayerNormParams ffn_norm;
  Linear ffn_in;
  Linear ffn_out;

  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

/// Pre-norm transformer decoder: masked self-attention, cross-attention over
/// the encoder output and a ReLU feed-forward block per layer, fixed
/// sinusoidal positions, a final norm and a projection to log-probabilities.
class Decoder {
 public:
  // Per-layer cross-attention keys and values, computed once per utterance.
  struct Memory {
    std::vector<Var> keys;
    std::vector<Var> values;
  };

  Decoder() = default;
  Decoder(DecoderConfig config, Rng& rng);

  const DecoderConfig& config() const noexcept { return config_; }
  Memory prepare_memory(Tape& tape, Var encoder_out);
  // tokens[L] (starting with BOS) -> log-probabilities [L×V].
  Var forward(Tape& tape, const Memory& memory, std::span<const int> tokens);
  void visit(const std::string& prefix, const ParameterVisitor& fn);

 private:
  DecoderConfig config_;
  Parameter embedding_;  // [V×d]
  Tensor positions_;     // [max_target_len×d], fixed
  std::vector<DecoderLayer> layers_;
  LayerNormParams final_norm_;
  Linear output_;
};

class TranslationModel {
 public:
  TranslationModel(EncoderConfig encoder, DecoderConfig decoder, std::uint64_t seed);

  SpeechEncoder& encoder() noexcept { return encoder_; }
  Decoder& decoder() noexcept { return decoder_; }

  // Log-probabilities [L×V] for prefix[L]. Throws ContractError unless the
  // prefix starts with BOS, LengthError when it exceeds max_target_len.
  Var forward_translation_logits(Tape& tape, std::span<const float> waveform,
                                 std::span<const int> prefix, const EncodeOptions& options = {});

  // Parameters named "encoder.*" and "decoder.*".
  void visit(const ParameterVisitor& fn);
  std::vector<NamedParameter> named_parameters();
  std::size_t parameter_count();

 private:
  SpeechEncoder encoder_;
  Decoder decoder_;
};

enum class FinetuneMode { kAdapters, kFull };
const char* finetune_mode_name(FinetuneMode mode);
FinetuneMode parse_finetune_mode(const std::string& name);

// Start probabilities that mask roughly `fraction` of the positions with spans
// of `span`: fraction / span per index.
MaskConfig mask_from_fractions(double time_fraction, std::size_t time_span,
                               double feat_fraction, std::size_t feat_span);

struct TrainPolicy {
  FinetuneMode mode = FinetuneMode::kAdapters;
  double replacement_prob = 0.3;
  double peak_lr = 5e-4;
  std::size_t total_iters = 2000;
  double warmup_frac = 0.1;
  double const_frac = 0.4;
  std::size_t batch_frames = 4096;
  MaskConfig mask = mask_from_fractions(0.3, 6, 0.5, 64);
  AdamConfig adam;
  // Conventional soft-target smoothing; 0 disables it.
  double label_smoothing = 0.0;
  AdapterConfig adapter;
  double balance_alpha = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

struct FreezeSummary {
  std::size_t trainable = 0;
  std::size_t total = 0;
  std::vector<std::string> trainable_names;
};

/// adapters: inserts encoder adapters (if absent) and trains only them, the
/// decoder norms and the decoder cross-attention. full: every encoder
/// parameter plus the same decoder subset.
FreezeSummary apply_finetune_policy(TranslationModel& model, const TrainPolicy& policy);

double lr_at(std::size_t iter, const TrainPolicy& policy);

struct Replacement {
  std::vector<int> tokens;
  std::size_t replaced = 0;
};

// Each position independently takes predictions[i] with probability p.
// Throws ContractError on a length mismatch, RangeError for p outside [0, 1].
Replacement sample_decoder_inputs(std::span<const int> targets, std::span<const int> predictions,
                                  double p, Rng& rng);

// Negative log-likelihood of `target` under frame log-probabilities
// [T×(V+1)] summed over all CTC alignments; `blank` is the blank column.
// Throws InfeasibleError when no alignment fits in T frames.
double ctc_negative_log_likelihood(const Tensor& log_probs, std::span<const int> target, int blank);
Var ctc_loss(Var log_probs, std::span<const int> target, int blank);

struct TrainLogEntry {
  std::size_t iter = 0;
  double lr = 0.0;
  double loss = 0.0;
  double masked_fraction = 0.0;
  double replaced_fraction = 0.0;
  std::vector<std::string> tasks;
};

struct TrainResult {
  std::vector<TrainLogEntry> log;
};

std::string format_log_entry(const TrainLogEntry& entry);

/// Per iteration: draw tasks with the balanced sampler and utterances
/// uniformly until the frame budget is met, mask features, replace decoder
/// inputs with the model's argmax predictions, then one Adam step on the mean
/// token NLL at lr_at(iter). Throws DataError when there is nothing to train on.
TrainResult run_translation_training(TranslationModel& model,
                                     const std::vector<const TaskData*>& tasks,
                                     const SyntheticWorld& world, const TrainPolicy& policy,
                                     std::ostream* log = nullptr);

// Teacher-forced argmax accuracy over target tokens and EOS.
double token_accuracy(TranslationModel& model, const Corpus& corpus, const SyntheticWorld& world);

// BOS + tokens for decoder input, tokens + EOS for the prediction targets.
std::vector<int> decoder_input(std::span<const int> target);
std::vector<int> decoder_target(std::span<const int> target);

}  // namespace samukd
