#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "samukd/datagen.hpp"
#include "samukd/distill.hpp"
#include "samukd/encoder.hpp"
#include "samukd/infer_eval.hpp"
#include "samukd/translator.hpp"

namespace samukd {

enum class InitKind { kDistilled, kBaseline };
const char* init_kind_name(InitKind kind);
InitKind parse_init_kind(const std::string& name);

// Masking as target fractions; converted with mask_from_fractions.
struct MaskFractions {
  double time_fraction = 0.3;
  std::size_t time_span = 6;
  double feat_fraction = 0.5;
  std::size_t feat_span = 64;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;

  // data
  WorldConfig world;
  CorpusConfig corpus;

  // distill
  DistillConfig distill;
  // Held-out translation pairs for the retrieval check, drawn between the
  // first and last listed languages.
  std::size_t retrieval_pairs = 100;

  // model; decoder.vocab_size is derived from the world.
  EncoderConfig encoder;
  DecoderConfig decoder;

  // train; the mode is taken per cell from `modes`, train.mask from `mask`.
  TrainPolicy train;
  MaskFractions mask;

  // eval
  BeamOptions beam;

  // scenario
  Scenario scenario = Scenario::kMultilingual;
  std::vector<InitKind> inits{InitKind::kDistilled, InitKind::kBaseline};
  std::vector<FinetuneMode> modes{FinetuneMode::kAdapters};

  // Fills the seeds and derived sizes, then validates every section.
  void resolve();
};

/// Nested YAML sections: data, distill, model, train, eval, scenario, plus a
/// top-level seed. data.languages and scenario.name are required; everything
/// else has a default. Unknown keys are rejected by name. Throws ConfigError.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::filesystem::path& path);

// Resolved configuration as YAML; parse_config_text(to_yaml(c)) reproduces c.
std::string to_yaml(const ExperimentConfig& config);

// 64-bit FNV-1a over the canonical YAML, as 16 hex digits.
std::string config_digest(const ExperimentConfig& config);

}  // namespace samukd
