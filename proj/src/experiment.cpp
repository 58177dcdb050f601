#include "samukd/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "samukd/checkpoint.hpp"
#include "samukd/error.hpp"

namespace samukd {

namespace {

void snap(TranslationModel& model) {
  const auto params = model.named_parameters();
  snap_to_float32(params);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

Dataset generate_dataset(const ExperimentConfig& config) {
  return generate_corpus(config.world, config.corpus, config.seed);
}

TranslationModel initial_model(const ExperimentConfig& config) {
  TranslationModel model(config.encoder, config.decoder, config.seed);
  snap(model);
  return model;
}

double retrieval_recall(const ExperimentConfig& config, const SyntheticWorld& world,
                        TranslationModel& model, PoolingHead& head) {
  const auto& langs = config.world.source_languages;
  const auto pairs = generate_parallel_speech(world, langs.back(), langs.front(),
                                              config.retrieval_pairs, config.corpus.down_factor,
                                              mix_seed(config.seed, "retrieval"));
  std::vector<std::vector<double>> queries, candidates;
  for (const auto& [x, y] : pairs) {
    queries.push_back(utterance_embedding(model.encoder(), head, x.waveform));
    candidates.push_back(utterance_embedding(model.encoder(), head, y.waveform));
  }
  return recall_at_1(queries, candidates);
}

DistillOutcome distill_encoder(const ExperimentConfig& config, const Dataset& dataset,
                               std::ostream* log) {
  Rng rng(mix_seed(config.seed, "head"));
  DistillOutcome out{initial_model(config), PoolingHead(config.encoder.model_dim,
                                                        config.distill.embed_dim, rng),
                     {}, 0.0};
  const TeacherOracle teacher(config.world.num_concepts, config.distill.embed_dim,
                              mix_seed(config.seed, "teacher"));
  out.result = run_distillation(out.model.encoder(), out.head, teacher, dataset.background,
                                config.distill, log);
  snap(out.model);
  std::vector<NamedParameter> head_params;
  out.head.visit("head.", [&](const std::string& n, Parameter& p) { head_params.push_back({n, &p}); });
  snap_to_float32(head_params);
  if (config.retrieval_pairs > 0) {
    out.retrieval_recall = retrieval_recall(config, dataset.world, out.model, out.head);
  }
  return out;
}

TrainOutcome train_model(TranslationModel& model, const ExperimentConfig& config,
                         const Dataset& dataset, Scenario scenario, FinetuneMode mode,
                         std::ostream* log) {
  TrainPolicy policy = config.train;
  policy.mode = mode;
  TrainOutcome out;
  out.freeze = apply_finetune_policy(model, policy);
  std::vector<TaskSpec> specs;
  for (const auto& t : dataset.tasks) specs.push_back(t.spec);
  const ScenarioSplit split = make_scenario_splits(specs, scenario);
  std::vector<const TaskData*> tasks;
  for (const auto& s : split.train) tasks.push_back(&dataset.task(s.name()));
  out.result = run_translation_training(model, tasks, dataset.world, policy, log);
  snap(model);
  return out;
}

MetricReport evaluate_model(TranslationModel& model, const ExperimentConfig& config,
                            const Dataset& dataset) {
  if (model.decoder().config().vocab_size != dataset.world.target_vocab_size()) {
    throw DataError("model vocabulary has " + std::to_string(model.decoder().config().vocab_size) +
                    " tokens, corpus needs " + std::to_string(dataset.world.target_vocab_size()));
  }
  std::vector<const TaskData*> tasks;
  for (const auto& t : dataset.tasks) tasks.push_back(&t);
  return evaluate_tasks(model, tasks, dataset.world, config.beam);
}

std::string CellSpec::name() const {
  return std::string(scenario_name(scenario)) + "_" + init_kind_name(init) + "_" +
         finetune_mode_name(mode);
}

ExperimentSession::ExperimentSession(ExperimentConfig config, std::ostream* log)
    : config_(std::move(config)), log_(log), dataset_(generate_dataset(config_)) {}

const DistillOutcome& ExperimentSession::distilled() {
  if (!distilled_) distilled_ = distill_encoder(config_, dataset_, log_);
  return *distilled_;
}

TranslationModel ExperimentSession::starting_model(InitKind init) {
  if (init == InitKind::kDistilled) return distilled().model;
  return initial_model(config_);
}

CellResult ExperimentSession::run_cell(const CellSpec& spec, std::ostream* train_log) {
  CellResult out;
  out.spec = spec;
  TranslationModel model = starting_model(spec.init);
  out.train = train_model(model, config_, dataset_, spec.scenario, spec.mode, train_log);
  out.report = evaluate_model(model, config_, dataset_);
  return out;
}

std::vector<CellResult> run_experiment(const ExperimentConfig& config,
                                       const std::filesystem::path& out, std::ostream* log) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
  {
    auto f = open_out(out / "config.yaml");
    f << to_yaml(config);
  }
  const bool any_distilled =
      std::find(config.inits.begin(), config.inits.end(), InitKind::kDistilled) != config.inits.end();
  std::ofstream distill_log;
  if (any_distilled) distill_log = open_out(out / "distill.log");
  ExperimentSession session(config, any_distilled ? &distill_log : nullptr);
  if (any_distilled) {
    const DistillOutcome& d = session.distilled();
    distill_log << "initial_loss=" << d.result.initial_loss
                << " final_loss=" << d.result.final_loss
                << " recall_at_1=" << d.retrieval_recall << "\n";
  }

  std::vector<CellResult> results;
  auto summary = open_out(out / "summary.tsv");
  summary << "cell\thigh\tmid\tlow\ttrf_gap\n";
  for (auto init : config.inits) {
    for (auto mode : config.modes) {
      const CellSpec spec{config.scenario, init, mode};
      const std::string name = spec.name();
      if (log) *log << "cell " << name << "\n";
      auto train_log = open_out(out / (name + ".train.log"));
      CellResult r = session.run_cell(spec, &train_log);
      auto records = open_out(out / (name + ".report.tsv"));
      write_report_records(r.report, records);
      auto table = open_out(out / (name + ".report.txt"));
      write_report_table(r.report, table);
      const TierSummary& t = r.report.tiers.at("bleu4");
      char line[256];
      std::snprintf(line, sizeof line, "%s\t%.6f\t%.6f\t%.6f\t%.6f\n", name.c_str(), t.high, t.mid,
                    t.low, t.gap);
      summary << line;
      results.push_back(std::move(r));
    }
  }
  return results;
}

}  // namespace samukd
