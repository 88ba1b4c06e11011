#pragma once

#include <string>
#include <vector>

#include "gateshare/config.hpp"
#include "gateshare/metrics.hpp"
#include "gateshare/policy.hpp"
#include "gateshare/trainer.hpp"

namespace gateshare {

enum class Ablation { None, TaskOnly, InstanceOnly };
Ablation ablation_from_string(const std::string& s);
std::string ablation_to_string(Ablation a);

/// Trains one ungated reference model per task and writes
/// references_val.csv / references_test.csv into the output directory.
SingleTaskReference run_single_task(const ExperimentConfig& cfg);

struct TrainingArtifacts {
  Backbone backbone;
  PolicyDistribution policy;
  TrainingArtifacts(Backbone b, PolicyDistribution p)
      : backbone(std::move(b)), policy(std::move(p)) {}
};

/// Warm-up + alternating optimization. Writes trained_model.json,
/// policy.json, policy.csv and metrics.csv. With InstanceOnly ablation the
/// policy phase is skipped (pure hard sharing for the whole budget).
TrainingArtifacts run_training(const ExperimentConfig& cfg,
                               Ablation ablation = Ablation::None);

struct VariantResult {
  double target_rate = 1.0;
  std::size_t plan_index = 0;
  double delta_val = 0.0;
  double delta_test = 0.0;
  CostSummary cost;
  std::vector<std::vector<MetricValue>> test_metrics;
};

/// Per-target-rate retraining with plan selection; writes per-variant
/// directories plus cost.csv, plotdata.csv and gate_rates.csv.
std::vector<VariantResult> run_retrain_stage(const ExperimentConfig& cfg,
                                             const std::vector<double>& rates,
                                             Ablation ablation,
                                             std::size_t workers);

/// Joins run artifacts into summary.json / summary.csv. Throws ArtifactError
/// listing every missing input.
nlohmann::json run_report(const std::string& output_dir);

/// Full pipeline: references (inline or preexisting), training, retraining
/// over the target rates, report.
nlohmann::json run_full(const ExperimentConfig& cfg, std::vector<double> rates,
                        Ablation ablation, std::size_t workers,
                        bool inline_references);

}  // namespace gateshare
