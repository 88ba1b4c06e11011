#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gateshare/config.hpp"
#include "gateshare/error.hpp"
#include "gateshare/pipeline.hpp"
#include "gateshare/synthdata.hpp"

namespace fs = std::filesystem;
using namespace gateshare;

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::vector<double> target_rates;
  std::string ablation = "none";
  std::size_t workers = 1;
};

ExperimentConfig resolve_config(const CommonArgs& args) {
  ExperimentConfig cfg = ExperimentConfig::load(args.config_path);
  if (args.seed) {
    cfg.seed = *args.seed;
    cfg.train.seed = *args.seed;
  }
  if (args.out_dir) cfg.output_dir = *args.out_dir;
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool rates = false) {
  cmd->add_option("--config", args.config_path, "experiment config (JSON)")
      ->required();
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_option("--out", args.out_dir, "override the output directory");
  cmd->add_option("--workers", args.workers, "parallel retrain workers");
  if (rates) {
    cmd->add_option("--target-rates", args.target_rates,
                    "instance-gate target rates, e.g. 1.0 0.8 0.55");
    cmd->add_option("--ablation", args.ablation,
                    "none | task_only | instance_only");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task- and instance-conditioned multi-task training"};
  app.require_subcommand(1);

  CommonArgs args;
  bool inline_refs = false;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  add_common(gen, args);

  CLI::App* single = app.add_subcommand(
      "single-task", "train per-task reference models and write reference CSVs");
  add_common(single, args);

  CLI::App* train_cmd = app.add_subcommand(
      "train", "warm-up + alternating network/policy optimization");
  add_common(train_cmd, args, true);

  CLI::App* retrain_cmd = app.add_subcommand(
      "retrain", "plan-fixed retraining with instance gates at target rates");
  add_common(retrain_cmd, args, true);

  CLI::App* eval_cmd =
      app.add_subcommand("evaluate", "recompute eval.json for retrained variants");
  add_common(eval_cmd, args, true);

  CLI::App* sweep = app.add_subcommand(
      "sweep", "full pipeline: references, training, retrains, report");
  add_common(sweep, args, true);
  sweep->add_flag("--inline-references", inline_refs,
                  "compute single-task references inline");

  CLI::App* report_cmd =
      app.add_subcommand("report", "join run artifacts into summary.json");
  add_common(report_cmd, args);

  CLI::App* ablate = app.add_subcommand(
      "ablate", "run the pipeline with a component disabled");
  add_common(ablate, args, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      ExperimentConfig cfg = resolve_config(args);
      if (!cfg.use_synthetic)
        throw ConfigError("gen-data: config selects a csv dataset");
      const MultiTaskData data = generate(cfg.synth, cfg.seed);
      fs::create_directories(cfg.output_dir);
      save_csv(data, (fs::path(cfg.output_dir) / "data.csv").string());
      std::ofstream spec_out(fs::path(cfg.output_dir) / "dataset_spec.json");
      spec_out << cfg.synth.to_json().dump(2) << "\n";
      std::cout << "wrote " << cfg.output_dir << "/data.csv ("
                << data.train.n + data.val.n + data.test.n << " rows)\n";
    } else if (single->parsed()) {
      ExperimentConfig cfg = resolve_config(args);
      run_single_task(cfg);
      std::cout << "references written to " << cfg.output_dir << "\n";
    } else if (train_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(args);
      run_training(cfg, ablation_from_string(args.ablation));
      std::cout << "policy and trained model written to " << cfg.output_dir << "\n";
    } else if (retrain_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(args);
      std::vector<double> rates = args.target_rates;
      if (rates.empty()) rates.push_back(cfg.train.target_rate);
      run_retrain_stage(cfg, rates, ablation_from_string(args.ablation),
                        args.workers);
      std::cout << "retrained " << rates.size() << " variant(s) into "
                << cfg.output_dir << "\n";
    } else if (eval_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(args);
      std::vector<double> rates = args.target_rates;
      if (rates.empty()) rates.push_back(cfg.train.target_rate);
      run_retrain_stage(cfg, rates, ablation_from_string(args.ablation),
                        args.workers);
      std::cout << "evaluation artifacts refreshed in " << cfg.output_dir << "\n";
    } else if (sweep->parsed()) {
      ExperimentConfig cfg = resolve_config(args);
      const nlohmann::json summary =
          run_full(cfg, args.target_rates, ablation_from_string(args.ablation),
                   args.workers, inline_refs);
      std::cout << summary.dump(2) << "\n";
    } else if (report_cmd->parsed()) {
      ExperimentConfig cfg = resolve_config(args);
      const nlohmann::json summary = run_report(cfg.output_dir);
      std::cout << summary.dump(2) << "\n";
    } else if (ablate->parsed()) {
      ExperimentConfig cfg = resolve_config(args);
      const Ablation ab = ablation_from_string(args.ablation);
      if (ab == Ablation::None)
        throw ConfigError("ablate: pass --ablation task_only or instance_only");
      const nlohmann::json summary =
          run_full(cfg, args.target_rates, ab, args.workers, true);
      std::cout << summary.dump(2) << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericsError& e) {
    std::cerr << "numerical divergence: " << e.what() << "\n";
    return 3;
  } catch (const ArtifactError& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
