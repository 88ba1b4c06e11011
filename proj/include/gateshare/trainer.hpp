#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gateshare/backbone.hpp"
#include "gateshare/data.hpp"
#include "gateshare/losses.hpp"
#include "gateshare/metrics.hpp"
#include "gateshare/optim.hpp"
#include "gateshare/policy.hpp"
#include "gateshare/rng.hpp"

namespace gateshare {

struct TrainConfig {
  std::size_t warm_up_epochs = 12;
  std::size_t e1 = 1;  // network epochs per alternation
  std::size_t e2 = 1;  // policy epochs per alternation
  std::size_t max_epochs = 60;
  std::size_t retrain_epochs = 40;
  std::size_t single_task_epochs = 0;  // 0 = max_epochs
  std::size_t batch_size = 64;

  double lr_network = 0.05;
  double lr_policy = 0.02;
  double lr_gates = 0.05;
  std::size_t lr_halve_period = 10000;

  double tau_initial = 5.0;
  double tau_decay = 0.965;
  double tau_floor = 0.5;
  DecayTrigger tau_trigger = DecayTrigger::OnMetricMet;
  double tau_retrain = 1.0;  // constant during retraining

  double target_rate = 1.0;
  std::uint64_t seed = 1;
  std::size_t num_sampled_plans = 8;
  std::size_t curriculum_cadence = 0;  // 0 = auto

  bool relaxed_weights_in_network_epochs = true;
  bool retrain_from_scratch = false;
  bool stochastic_eval_gates = false;

  double sgd_momentum = 0.9;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  double policy_logit_clamp = 30.0;

  void validate() const;
  std::size_t effective_single_task_epochs() const {
    return single_task_epochs ? single_task_epochs : max_epochs;
  }
};

/// lr = base * 0.5^floor(epoch / period)
double step_lr(std::size_t epoch, double base_lr, std::size_t halve_period);

struct EpochLogRow {
  std::size_t epoch = 0;
  std::string phase;
  double tau = 0.0;
  double lr = 0.0;
  double loss_total = 0.0;
  std::vector<double> loss_task;
  double loss_sparsity = 0.0;
  double loss_sharing = 0.0;
  double loss_instance = 0.0;
  std::vector<std::pair<std::string, double>> val_metrics;  // task{k}_{name}
  std::vector<double> beta_hat;  // per block; -1 for blocks without data
};

void write_metrics_csv(const std::vector<EpochLogRow>& rows, std::size_t num_blocks,
                       const std::string& path);

struct EvalOptions {
  bool gates_active = true;
  bool stochastic_gates = false;
  SeededRng* rng = nullptr;
};

struct EvalOutcome {
  std::vector<std::vector<MetricValue>> per_task;
  // Per block, aggregated over tasks that executed it; -1 when never reached.
  std::vector<double> threshold_rate;  // fraction of instances with alpha > 0.5
  std::vector<double> mean_alpha;      // expected execute rate
};

/// Deterministic evaluation of a model under discrete plans.
EvalOutcome evaluate_plans(Backbone& backbone,
                           const std::vector<ExecutionPlan>& plans,
                           const Dataset& split, const EvalOptions& opts = {});

/// Alternating optimization: warm-up epochs of hard sharing, then e1 network
/// epochs (task losses, relaxed policy weights, frozen logits) alternating
/// with e2 policy epochs (task + sparsity + sharing, frozen network weights).
/// The temperature decays per its trigger; the curriculum frontier grows per
/// post-warm-up epoch. Checkpoints capture the complete mutable state.
class AlternatingTrainer {
 public:
  AlternatingTrainer(const TrainConfig& cfg, const LossWeights& weights,
                     const MultiTaskData& data, Backbone& backbone,
                     PolicyDistribution& policy);

  bool done() const { return epoch_ >= cfg_.max_epochs; }
  std::size_t epoch() const { return epoch_; }
  double tau() const { return schedule_.tau; }
  Phase current_phase() const;

  void run_epoch();
  void run_all();

  const std::vector<EpochLogRow>& log() const { return log_; }
  const std::vector<std::vector<MetricValue>>& warmup_baseline() const {
    return warmup_baseline_;
  }

  nlohmann::json checkpoint() const;
  void restore(const nlohmann::json& j);

 private:
  void train_batch(Phase phase, const std::vector<std::size_t>& batch,
                   EpochLogRow& row, std::size_t batches);
  std::vector<ExecutionPlan> threshold_plans() const;

  TrainConfig cfg_;
  LossWeights weights_;
  const MultiTaskData& data_;
  Backbone& backbone_;
  PolicyDistribution& policy_;
  SgdMomentum net_opt_;
  Adam policy_opt_;
  SeededRng data_rng_;
  SeededRng noise_rng_;
  TemperatureSchedule schedule_;
  std::size_t epoch_ = 0;
  std::size_t cadence_ = 1;
  std::vector<std::vector<MetricValue>> warmup_baseline_;
  std::vector<EpochLogRow> log_;
};

/// Plan-fixed retraining with instance gates in straight-through mode at a
/// constant temperature; blocks with u = 0 never enter the graph.
class RetrainTrainer {
 public:
  RetrainTrainer(const TrainConfig& cfg, const LossWeights& weights,
                 const MultiTaskData& data, Backbone& backbone,
                 std::vector<ExecutionPlan> plans, std::uint64_t stream_salt = 0);

  bool done() const { return epoch_ >= cfg_.retrain_epochs; }
  std::size_t epoch() const { return epoch_; }
  void run_epoch();
  void run_all();

  const std::vector<EpochLogRow>& log() const { return log_; }
  const std::vector<ExecutionPlan>& plans() const { return plans_; }
  /// Hard execute fraction per block observed in the most recent training
  /// epoch (straight-through forward bits); -1 where no gate ran.
  std::vector<double> last_epoch_hard_rates() const { return hard_rates_; }

  nlohmann::json checkpoint() const;
  void restore(const nlohmann::json& j);

 private:
  TrainConfig cfg_;
  LossWeights weights_;
  const MultiTaskData& data_;
  Backbone& backbone_;
  std::vector<ExecutionPlan> plans_;
  SgdMomentum net_opt_;
  SgdMomentum gate_opt_;
  SeededRng data_rng_;
  SeededRng noise_rng_;
  std::size_t epoch_ = 0;
  std::vector<double> hard_rates_;
  std::vector<EpochLogRow> log_;
};

struct TrainOutcome {
  std::vector<EpochLogRow> log;
  double final_tau = 0.0;
};

/// Algorithm entry point: trains `backbone` and `policy` in place.
TrainOutcome train(const TrainConfig& cfg, const LossWeights& weights,
                   const MultiTaskData& data, Backbone& backbone,
                   PolicyDistribution& policy);

struct RetrainOutcome {
  Backbone model;
  std::vector<ExecutionPlan> plans;
  std::vector<EpochLogRow> log;
  EvalOutcome val_eval;
  std::vector<double> train_hard_rates;
  double val_delta = 0.0;      // vs. single-task references, when provided
  CostSummary cost;
};

/// Retrains a copy of `trained` under the given plans (fresh gates; network
/// weights carried over unless retrain_from_scratch).
RetrainOutcome retrain(const TrainConfig& cfg, const LossWeights& weights,
                       const MultiTaskData& data, const Backbone& trained,
                       const std::vector<ExecutionPlan>& plans,
                       const SingleTaskReference* refs, std::uint64_t stream_salt);

/// Samples num_sampled_plans architectures, retrains each, and returns the
/// best by validation delta (ties by lower expected FLOPs). The scorer is
/// injectable for tests.
struct SelectionResult {
  RetrainOutcome best;
  std::size_t best_index = 0;
  std::vector<double> scores;
};

SelectionResult select_best(
    const TrainConfig& cfg, const LossWeights& weights, const MultiTaskData& data,
    const Backbone& trained, const PolicyDistribution& policy,
    const SingleTaskReference& refs, std::size_t workers = 1,
    std::function<double(const RetrainOutcome&)> scorer = nullptr);

/// Trains one ungated hard-shared backbone on a single task's loss and
/// returns that task's validation/test metrics.
struct SingleTaskOutcome {
  std::vector<MetricValue> val_metrics;
  std::vector<MetricValue> test_metrics;
};

SingleTaskOutcome train_single_task(const TrainConfig& cfg,
                                    const LossWeights& weights,
                                    const MultiTaskData& data,
                                    const BackboneSpec& spec, std::size_t task);

}  // namespace gateshare
