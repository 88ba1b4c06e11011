#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gateshare/data.hpp"
#include "gateshare/gumbel.hpp"
#include "gateshare/rng.hpp"
#include "gateshare/tensor.hpp"

namespace gateshare {

struct HeadSpec {
  TaskKind kind = TaskKind::Classification;
  std::size_t output_dim = 2;  // classes for classification, 1 otherwise
};

/// Static description of the residual trunk: an input projection (stem) to a
/// constant feature width, `num_blocks` residual blocks, and one head per
/// task. Blocks flagged in `gate_enable` carry an instance gating unit;
/// blocks flagged `always_on` are excluded from the task policy.
struct BackboneSpec {
  std::size_t input_dim = 16;
  std::size_t feature_dim = 32;
  std::size_t num_blocks = 8;
  std::size_t num_tasks = 2;
  std::vector<std::size_t> hidden_widths;  // per block; empty = feature_dim
  std::vector<HeadSpec> heads;             // size num_tasks
  std::vector<bool> gate_enable;           // size num_blocks
  std::vector<bool> always_on;             // size num_blocks
  std::size_t gate_hidden = 0;             // 0 = max(2, feature_dim / 4)

  std::size_t hidden_width(std::size_t l) const;
  std::size_t gate_hidden_width() const;
  void validate() const;

  nlohmann::json to_json() const;
  static BackboneSpec from_json(const nlohmann::json& j);
};

/// Realized discrete policy for one task after sampling.
struct ExecutionPlan {
  std::size_t task = 0;
  std::vector<int> execute;  // u[l] in {0,1}

  static ExecutionPlan all_ones(std::size_t task, std::size_t num_blocks);
};

/// Residual block parameters: two linear layers with a ReLU between, identity
/// shortcut (widths are constant across the trunk so no projection is needed).
struct ResidualBlock {
  Tensor w1, b1, w2, b2;
  Tensor transform(const Tensor& x) const;  // Z
};

/// Per-block relevance estimator: two linear layers on the block input,
/// emitting a skip/execute logit pair per instance.
struct GatingUnit {
  Tensor w1, b1, w2, b2;
  Tensor logits(const Tensor& x) const;         // [n,2]
  std::vector<double> execute_probability(const Tensor& x) const;  // softmax col 1
};

enum class ForwardMode {
  HardShared,     // all blocks, no gates, no policy weighting (warm-up)
  PolicyRelaxed,  // transform scaled by relaxed policy weight, gates open
  RetrainST,      // discrete plan; straight-through gates on gated blocks
  EvalHard        // discrete plan; deterministic (or sampled) hard gates
};

struct ForwardOptions {
  ForwardMode mode = ForwardMode::HardShared;
  const ExecutionPlan* plan = nullptr;              // RetrainST / EvalHard
  const std::vector<Tensor>* policy_weights = nullptr;  // PolicyRelaxed, per block
  double tau = 1.0;                                 // gate temperature
  SeededRng* rng = nullptr;                         // gate noise source
  bool gates_active = true;                         // false: all gates open
  bool stochastic_eval_gates = false;
};

/// Per-block gate observations from one forward pass.
struct GateRecord {
  std::size_t block = 0;
  bool evaluated = false;
  std::vector<int> w_hard;      // per instance
  std::vector<double> alpha;    // per instance execute probability
  Tensor w_soft;                // [n] relaxed execute probabilities (graph)
  Tensor beta;                  // scalar mean of w_soft (graph)
};

struct TaskForwardResult {
  Tensor output;                 // head output
  std::vector<GateRecord> gates; // entries only for evaluated gated blocks
};

class Backbone {
 public:
  explicit Backbone(BackboneSpec spec);

  const BackboneSpec& spec() const { return spec_; }

  /// Stem + blocks + heads from one stream; gates from a separate stream so
  /// enabling gates never perturbs network initialization.
  void init_network(SeededRng& rng);
  void init_gates(SeededRng& rng);

  std::vector<Tensor> network_params();  // stem, blocks, heads
  std::vector<Tensor> gate_params();
  std::vector<Tensor> block_params(std::size_t l);
  std::vector<std::pair<std::string, Tensor>> named_params();

  Backbone clone() const;

  const ResidualBlock& block(std::size_t l) const { return blocks_[l]; }
  ResidualBlock& block(std::size_t l) { return blocks_[l]; }
  bool has_gate(std::size_t l) const { return gates_[l].has_value(); }
  const GatingUnit& gate(std::size_t l) const { return *gates_[l]; }
  GatingUnit& gate(std::size_t l) { return *gates_[l]; }

  /// Trunk + head for one task. The gate trace drives the instance loss and
  /// execute-rate reporting.
  TaskForwardResult forward_task(const Tensor& x, std::size_t task,
                                 const ForwardOptions& opts);

  /// Trunk shared verbatim across tasks (hard sharing): computed once.
  std::vector<TaskForwardResult> forward_all_shared(const Tensor& x);

  nlohmann::json to_json() const;
  static Backbone from_json(const nlohmann::json& j);

 private:
  Tensor trunk(const Tensor& x, const ForwardOptions& opts,
               std::vector<GateRecord>* gates_out);

  BackboneSpec spec_;
  Tensor stem_w_, stem_b_;
  std::vector<ResidualBlock> blocks_;
  std::vector<std::optional<GatingUnit>> gates_;
  std::vector<Tensor> head_w_, head_b_;
};

/// Applies one block with the task/instance fusion rule:
///   u = 0 or w = 0: Y = X (the gate is not evaluated when u = 0)
///   u = 1 and w = 1: Y = ReLU(X + Z)
/// Returns Y plus the gate decisions and relaxed execute probabilities.
struct BlockForwardResult {
  Tensor y;
  std::vector<int> w_hard;
  std::vector<double> alpha;  // per-instance execute probability
  Tensor w_soft;              // [n]; undefined when the gate was not evaluated
};

BlockForwardResult block_forward(const ResidualBlock& block, const GatingUnit* gate,
                                 const Tensor& x, int u, double tau, SeededRng* rng,
                                 bool train_mode = true,
                                 bool stochastic_eval = false);

/// Cost accountant. `gate_rates` holds the empirical per-block execute
/// fraction for gated blocks (ignored elsewhere). FLOPs count a
/// multiply-accumulate as 2; expected cost averages over tasks: each block
/// contributes its FLOPs times the fraction of tasks executing it, gated
/// blocks additionally scaled by their execute rate plus the (unscaled)
/// gating-unit overhead. Head costs are averaged over tasks.
struct CostSummary {
  double params = 0.0;
  double expected_flops = 0.0;
};

CostSummary count_cost(const BackboneSpec& spec,
                       const std::vector<ExecutionPlan>& plans,
                       const std::vector<double>& gate_rates);

double block_flops(const BackboneSpec& spec, std::size_t l);
double gate_flops(const BackboneSpec& spec);

}  // namespace gateshare
