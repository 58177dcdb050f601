#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "samukd/nn.hpp"

namespace samukd {

// Decoder token ids: specials first, then target-language word ids shifted by
// kNumSpecialTokens.
inline constexpr int kPadToken = 0;
inline constexpr int kBosToken = 1;
inline constexpr int kEosToken = 2;
inline constexpr int kNumSpecialTokens = 3;

enum class Tier { kHigh, kMid, kLow };

const char* tier_name(Tier tier);
Tier parse_tier(const std::string& name);

// > 100 high, [10, 100] mid, < 10 low. Throws RangeError for negative input.
Tier classify_tier(double hours);

// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);
std::uint64_t mix_seed(std::uint64_t seed, const std::string& salt);

struct WorldConfig {
  std::vector<std::string> source_languages;
  std::string target_language = "en";
  std::size_t num_concepts = 24;
  std::size_t samples_per_concept = 8;
  // Cosine components mixed into each motif (capped at samples - 1); 0 draws
  // white Gaussian motifs instead.
  std::size_t motif_components = 3;
  std::size_t min_concepts = 3;
  std::size_t max_concepts = 6;
  double noise_std = 0.05;
  // Source-language carrier offsets are spread evenly over [-max, max].
  double max_carrier_offset = 1.0;
  // Each source language multiplies motif sample i by
  // 1 + depth·cos(2π·f·i/S + φ) with its own frequency f and phase φ;
  // 0 leaves only the offset to tell languages apart.
  double carrier_depth = 0.0;

  void validate() const;
};

/// A synthetic language: a bijective concept -> word rendering for text and,
/// for speech, a carrier that reshapes the shared concept motifs (per-sample
/// gain plus a constant offset), so the same sentence sounds different in
/// every language.
class SyntheticLanguage {
 public:
  SyntheticLanguage(std::string id, std::size_t num_concepts, double carrier_offset,
                    std::vector<float> carrier_gain, Rng& rng);

  const std::string& id() const noexcept { return id_; }
  std::vector<int> render(std::span<const int> concepts) const;
  // Inverse of render. Throws VocabularyError for unknown words.
  std::vector<int> parse(std::span<const int> words) const;
  double carrier_offset() const noexcept { return carrier_offset_; }
  // Gain per motif sample; empty means unit gain.
  const std::vector<float>& carrier_gain() const noexcept { return carrier_gain_; }
  std::size_t num_concepts() const noexcept { return concept_to_word_.size(); }

 private:
  std::string id_;
  std::vector<int> concept_to_word_;
  std::vector<int> word_to_concept_;
  double carrier_offset_ = 0.0;
  std::vector<float> carrier_gain_;
};

class SyntheticWorld {
 public:
  SyntheticWorld(WorldConfig config, std::uint64_t seed);

  const WorldConfig& config() const noexcept { return config_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const SyntheticLanguage& language(const std::string& id) const;
  const std::vector<SyntheticLanguage>& sources() const noexcept { return sources_; }
  const SyntheticLanguage& target() const noexcept { return target_; }

  std::vector<int> random_concepts(Rng& rng) const;
  // Concatenated concept motifs plus the language's carrier offset and
  // Gaussian noise.
  std::vector<float> synthesize(const std::string& language, std::span<const int> concepts,
                                Rng& rng) const;
  const std::vector<float>& motif(int concept_id) const;
  // Target-language decoder tokens (without BOS/EOS).
  std::vector<int> target_tokens(std::span<const int> concepts) const;
  std::vector<int> concepts_from_target(std::span<const int> tokens) const;
  std::size_t target_vocab_size() const { return config_.num_concepts + kNumSpecialTokens; }

 private:
  WorldConfig config_;
  std::uint64_t seed_;
  std::vector<std::vector<float>> motifs_;  // one per concept
  std::vector<SyntheticLanguage> sources_;
  SyntheticLanguage target_;
};

struct Utterance {
  std::string id;
  std::string language;
  std::vector<int> concepts;
  std::vector<float> waveform;
  std::size_t frames = 0;

  friend bool operator==(const Utterance&, const Utterance&) = default;
};

struct Corpus {
  std::vector<Utterance> utterances;

  std::map<std::string, std::size_t> per_language() const;
  std::size_t total_frames() const;
  bool empty() const noexcept { return utterances.empty(); }

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

struct TaskSpec {
  std::string source;
  std::string target;
  Tier tier = Tier::kLow;
  double hours = 0.0;

  std::string name() const { return source + "-" + target; }
  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct TaskData {
  TaskSpec spec;
  Corpus train;
  Corpus eval;

  friend bool operator==(const TaskData&, const TaskData&) = default;
};

enum class Scenario { kMultilingual, kZeroShot };
const char* scenario_name(Scenario s);
Scenario parse_scenario(const std::string& name);

struct CorpusConfig {
  // Translation training pairs per source language, parallel to
  // WorldConfig::source_languages.
  std::vector<std::size_t> train_pairs;
  std::size_t eval_pairs = 40;
  std::size_t bkg_per_language = 200;
  double frames_per_hour = 100.0;
  std::size_t down_factor = 4;

  void validate(std::size_t num_languages) const;
};

struct Dataset {
  WorldConfig world_config;
  CorpusConfig corpus_config;
  std::uint64_t seed = 0;
  SyntheticWorld world;
  // Transcribed multilingual pool used for distillation.
  Corpus background;
  std::vector<TaskData> tasks;

  const TaskData& task(const std::string& name) const;
};

/// Deterministic in (configs, seed). Each (language, split) shard draws from
/// its own derived seed; output order is language, then index.
Dataset generate_corpus(const WorldConfig& world, const CorpusConfig& corpus, std::uint64_t seed);

// Concept sequences rendered as speech in two languages: pairs of translations.
std::vector<std::pair<Utterance, Utterance>> generate_parallel_speech(const SyntheticWorld& world,
                                                                      const std::string& lang_x,
                                                                      const std::string& lang_y,
                                                                      std::size_t count,
                                                                      std::size_t down_factor,
                                                                      std::uint64_t seed);

// p_l ∝ n_l^alpha. Throws DataError for a zero count, RangeError for alpha
// outside [0, 1].
std::vector<double> balanced_sampling_distribution(std::span<const std::size_t> counts,
                                                   double alpha);

class BalancedSampler {
 public:
  BalancedSampler(std::vector<std::size_t> counts, double alpha);

  std::size_t draw(Rng& rng) const;
  const std::vector<double>& probabilities() const noexcept { return probs_; }

 private:
  std::vector<double> probs_;
  std::vector<double> cumulative_;
};

// Linear-interpolation resampling to round(S / factor) samples.
std::vector<float> speed_perturb(std::span<const float> waveform, double factor);

struct ScenarioSplit {
  std::vector<TaskSpec> train;
  std::vector<TaskSpec> eval;
};

ScenarioSplit make_scenario_splits(const std::vector<TaskSpec>& tasks, Scenario scenario);

// Directory layout: world.json, manifest.tsv, waves/<id>.f32 (little-endian
// float32). Throws IoError on failures.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace samukd
