// Command-line driver: each pipeline stage reads the previous stage's files.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "samukd/checkpoint.hpp"
#include "samukd/config.hpp"
#include "samukd/error.hpp"
#include "samukd/experiment.hpp"
#include "samukd/grad_suite.hpp"

namespace fs = std::filesystem;
using namespace samukd;

namespace {

constexpr int kInternalExit = 5;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = parse_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.resolve();
  }
  spdlog::info("resolved config (digest {}):\n{}", config_digest(cfg), to_yaml(cfg));
  return cfg;
}

std::ofstream open_log(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
  cmd->add_option("--config", c.config, "YAML experiment configuration")->required();
  cmd->add_option("--seed", c.seed, "Override the configured seed");
  cmd->add_option("--out", c.out, out_help)->required();
}

void write_reports(const MetricReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  auto records = open_log(dir / "report.tsv");
  write_report_records(report, records);
  auto table = open_log(dir / "report.txt");
  write_report_table(report, table);
  write_report_table(report, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("samukd"));
  spdlog::set_pattern("[%H:%M:%S] %v");

  CLI::App app{"Distillation-initialised speech translation at desk scale"};
  app.require_subcommand(1);

  Common gen_opts;
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus");
  add_common(gen, gen_opts, "Output corpus directory");

  Common distill_opts;
  std::string distill_data;
  auto* distill = app.add_subcommand("distill", "Distil the encoder on the background pool");
  add_common(distill, distill_opts, "Output checkpoint");
  distill->add_option("--data", distill_data, "Corpus directory")->required();

  Common train_opts;
  std::string train_data, train_init, train_mode, train_scenario, train_log;
  auto* train = app.add_subcommand("train", "Fine-tune for translation");
  add_common(train, train_opts, "Output checkpoint");
  train->add_option("--data", train_data, "Corpus directory")->required();
  train->add_option("--init", train_init, "Distilled checkpoint (omit for the random baseline)");
  train->add_option("--mode", train_mode, "adapters or full (default: first configured mode)");
  train->add_option("--scenario", train_scenario, "Override the configured scenario");
  train->add_option("--log", train_log, "Training log file");

  Common eval_opts;
  std::string eval_data, eval_ckpt;
  auto* evaluate = app.add_subcommand("evaluate", "Decode the eval sets and score them");
  add_common(evaluate, eval_opts, "Output report directory");
  evaluate->add_option("--data", eval_data, "Corpus directory")->required();
  evaluate->add_option("--checkpoint", eval_ckpt, "Trained checkpoint")->required();

  Common exp_opts;
  std::string exp_scenario;
  auto* experiment = app.add_subcommand("experiment", "Run the full pipeline for every cell");
  add_common(experiment, exp_opts, "Output directory");
  experiment->add_option("--scenario", exp_scenario, "Override the configured scenario");

  std::size_t gc_cases = 100;
  std::uint64_t gc_seed = 0;
  double gc_tol = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gradcheck->add_option("--cases", gc_cases, "Seeded cases per check");
  gradcheck->add_option("--seed", gc_seed, "Suite seed");
  gradcheck->add_option("--tolerance", gc_tol, "Largest accepted relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorClass::kConfig);
  }

  try {
    if (*gen) {
      const ExperimentConfig cfg = load_config(gen_opts);
      const Dataset ds = generate_dataset(cfg);
      write_dataset(ds, gen_opts.out);
      spdlog::info("wrote {} tasks and {} background utterances to {}", ds.tasks.size(),
                   ds.background.utterances.size(), gen_opts.out);
    } else if (*distill) {
      const ExperimentConfig cfg = load_config(distill_opts);
      const Dataset ds = read_dataset(distill_data);
      DistillOutcome d = distill_encoder(cfg, ds, nullptr);
      spdlog::info("distillation loss {:.4f} -> {:.4f}, recall@1 {:.3f}", d.result.initial_loss,
                   d.result.final_loss, d.retrieval_recall);
      save_model_checkpoint(distill_opts.out, d.model,
                            {config_digest(cfg), cfg.distill.steps, {}}, &d.head);
    } else if (*train) {
      ExperimentConfig cfg = load_config(train_opts);
      if (!train_scenario.empty()) cfg.scenario = parse_scenario(train_scenario);
      const FinetuneMode mode =
          train_mode.empty() ? cfg.modes.front() : parse_finetune_mode(train_mode);
      const Dataset ds = read_dataset(train_data);
      TranslationModel model =
          train_init.empty() ? initial_model(cfg) : load_model_checkpoint(train_init).model;
      std::ofstream log_file;
      if (!train_log.empty()) log_file = open_log(train_log);
      const TrainOutcome r =
          train_model(model, cfg, ds, cfg.scenario, mode, train_log.empty() ? nullptr : &log_file);
      spdlog::info("trained {} of {} parameters, final loss {:.4f}", r.freeze.trainable,
                   r.freeze.total, r.result.log.empty() ? 0.0 : r.result.log.back().loss);
      save_model_checkpoint(train_opts.out, model,
                            {config_digest(cfg), cfg.train.total_iters, {}});
    } else if (*evaluate) {
      const ExperimentConfig cfg = load_config(eval_opts);
      const Dataset ds = read_dataset(eval_data);
      LoadedModel loaded = load_model_checkpoint(eval_ckpt);
      const MetricReport report = evaluate_model(loaded.model, cfg, ds);
      write_reports(report, eval_opts.out);
    } else if (*experiment) {
      ExperimentConfig cfg = load_config(exp_opts);
      if (!exp_scenario.empty()) cfg.scenario = parse_scenario(exp_scenario);
      const auto results = run_experiment(cfg, exp_opts.out, nullptr);
      for (const auto& r : results) {
        const TierSummary& t = r.report.tiers.at("bleu4");
        spdlog::info("{}: BLEU-4 high {:.2f} mid {:.2f} low {:.2f} TRFGap {:.2f}", r.spec.name(),
                     t.high, t.mid, t.low, t.gap);
      }
    } else if (*gradcheck) {
      const GradSuiteReport r = run_gradient_suite(gc_cases, gc_seed, gc_tol);
      for (const auto& e : r.entries) {
        std::cout << (e.passed ? "ok   " : "FAIL ") << e.name << "  cases=" << e.cases
                  << " components=" << e.components << " max_rel=" << e.max_rel_error << "\n";
      }
      std::cout << (r.passed ? "gradient suite passed" : "gradient suite FAILED")
                << ", max relative error " << r.max_rel_error << "\n";
      return r.passed ? 0 : static_cast<int>(ErrorClass::kNumeric);
    }
  } catch (const Error& e) {
    spdlog::error("{} error: {}", error_class_name(e.error_class()), e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return kInternalExit;
  }
  return 0;
}
