#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "samukd/datagen.hpp"
#include "samukd/encoder.hpp"
#include "samukd/nn.hpp"

namespace samukd {

/// Attention pooling over frames followed by a tanh projection:
/// w = softmax(c·s), e = tanh(W·Σ_t w_t c_t + b).
struct PoolingHead {
  Linear scorer;      // d -> 1
  Linear projection;  // d -> d_e

  PoolingHead() = default;
  PoolingHead(std::size_t model_dim, std::size_t embed_dim, Rng& rng);

  std::size_t embed_dim() const { return projection.bias.value.size(); }
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

// context[T×d] -> e[1×d_e].
Var attentive_pool(Tape& tape, Var context, PoolingHead& head);
// The frame weights alone, [T×1].
Var attention_weights(Tape& tape, Var context, PoolingHead& head);

/// Frozen sentence embedder standing in for a text teacher: a random concept
/// table, averaged over the sentence and unit-normalized. Depends only on the
/// concept sequence, so every rendering of a sentence gets the same z.
class TeacherOracle {
 public:
  TeacherOracle(std::size_t num_concepts, std::size_t embed_dim, std::uint64_t seed);

  std::size_t num_concepts() const noexcept { return table_.rows(); }
  std::size_t embed_dim() const noexcept { return table_.cols(); }
  const Tensor& table() const noexcept { return table_; }

  // Throws DataError for an empty sequence, VocabularyError for an unknown id.
  std::vector<double> embed(std::span<const int> concepts) const;

 private:
  Tensor table_;
};

// β·(1 − cos(e, z)) as a fused op on e[1×n]; z is a constant. Throws
// NumericError when either norm is zero.
Var kd_loss(Var e, std::span<const double> z, double beta);
double kd_loss_value(std::span<const double> e, std::span<const double> z, double beta);

struct DistillConfig {
  double beta = 32.0;
  // Peak rate of a three-phase schedule (warmup, constant, linear decay).
  double lr = 3e-3;
  double warmup_frac = 0.1;
  double const_frac = 0.4;
  std::size_t steps = 500;
  std::size_t batch_size = 64;
  std::size_t embed_dim = 16;
  double balance_alpha = 0.5;
  bool speed_perturb = true;
  std::vector<double> perturb_factors{0.9, 1.1};
  std::uint64_t seed = 1;

  void validate() const;
};

struct DistillStep {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct DistillResult {
  std::vector<DistillStep> log;
  // Mean loss over the (unaugmented) corpus before and after training.
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Freezes the feature extractor and makes the rest of the encoder trainable.
void prepare_for_distillation(SpeechEncoder& encoder);

// Adds the perturbed copies (factors other than 1) of every utterance.
Corpus augment_with_speed_perturbation(const Corpus& corpus, std::span<const double> factors,
                                       std::size_t down_factor);

/// Adam on the mean batch loss. Batches draw languages with the balanced
/// sampler, then utterances uniformly within the language. When `log` is set,
/// writes one line per step: "step=<n> loss=<v> lr=<v> seed=<s>".
/// Throws DataError for an empty corpus.
DistillResult run_distillation(SpeechEncoder& encoder, PoolingHead& head,
                               const TeacherOracle& teacher, const Corpus& corpus,
                               const DistillConfig& config, std::ostream* log = nullptr);

double mean_distillation_loss(SpeechEncoder& encoder, PoolingHead& head,
                              const TeacherOracle& teacher, const Corpus& corpus, double beta);

// Inference-path utterance embedding (no masking, adapters inactive).
std::vector<double> utterance_embedding(SpeechEncoder& encoder, PoolingHead& head,
                                        std::span<const float> waveform);

// Fraction of queries whose cosine nearest neighbour among the candidates is
// the candidate with the same index.
double recall_at_1(const std::vector<std::vector<double>>& queries,
                   const std::vector<std::vector<double>>& candidates);

}  // namespace samukd
