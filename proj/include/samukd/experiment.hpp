#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "samukd/config.hpp"
#include "samukd/datagen.hpp"
#include "samukd/distill.hpp"
#include "samukd/infer_eval.hpp"
#include "samukd/translator.hpp"

namespace samukd {

struct DistillOutcome {
  // Distilled encoder under a freshly initialised decoder.
  TranslationModel model;
  PoolingHead head;
  DistillResult result;
  // recall@1 on held-out pairs (last listed language -> first).
  double retrieval_recall = 0.0;
};

Dataset generate_dataset(const ExperimentConfig& config);

// Model at its initial weights for the config seed, rounded to float32 so
// that it matches what a checkpoint would hold.
TranslationModel initial_model(const ExperimentConfig& config);

DistillOutcome distill_encoder(const ExperimentConfig& config, const Dataset& dataset,
                               std::ostream* log = nullptr);

double retrieval_recall(const ExperimentConfig& config, const SyntheticWorld& world,
                        TranslationModel& model, PoolingHead& head);

struct TrainOutcome {
  FreezeSummary freeze;
  TrainResult result;
};

// Applies the fine-tuning policy for `mode` and trains on the scenario's
// training tasks; the weights end rounded to float32.
TrainOutcome train_model(TranslationModel& model, const ExperimentConfig& config,
                         const Dataset& dataset, Scenario scenario, FinetuneMode mode,
                         std::ostream* log = nullptr);

// Beam-decodes every task's eval set.
MetricReport evaluate_model(TranslationModel& model, const ExperimentConfig& config,
                            const Dataset& dataset);

struct CellSpec {
  Scenario scenario = Scenario::kMultilingual;
  InitKind init = InitKind::kDistilled;
  FinetuneMode mode = FinetuneMode::kAdapters;

  // "<scenario>_<init>_<mode>".
  std::string name() const;
};

struct CellResult {
  CellSpec spec;
  TrainOutcome train;
  MetricReport report;
};

/// Holds the generated data and distils at most once, so every cell of a
/// matrix starts from the same weights. Cells may use either scenario; the
/// data does not depend on it.
class ExperimentSession {
 public:
  // `distill_log` receives the per-step distillation log.
  explicit ExperimentSession(ExperimentConfig config, std::ostream* distill_log = nullptr);

  const ExperimentConfig& config() const noexcept { return config_; }
  const Dataset& dataset() const noexcept { return dataset_; }
  // Distils on first use.
  const DistillOutcome& distilled();
  TranslationModel starting_model(InitKind init);
  CellResult run_cell(const CellSpec& spec, std::ostream* train_log = nullptr);

 private:
  ExperimentConfig config_;
  std::ostream* log_;
  Dataset dataset_;
  std::optional<DistillOutcome> distilled_;
};

/// gen-data -> (distill) -> policy -> train -> decode -> metrics for every
/// init × mode cell. Writes into `out`: config.yaml, distill.log (if
/// distilled), per cell <name>.train.log, <name>.report.tsv and
/// <name>.report.txt, and summary.tsv with the tier means and gaps.
std::vector<CellResult> run_experiment(const ExperimentConfig& config,
                                       const std::filesystem::path& out,
                                       std::ostream* log = nullptr);

}  // namespace samukd
