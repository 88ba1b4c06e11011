#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

#include "gateshare/backbone.hpp"
#include "gateshare/losses.hpp"
#include "gateshare/rng.hpp"
#include "gateshare/tensor.hpp"

namespace gateshare {

/// Trainable per-block, per-task execution distribution. Each entry is a
/// skip/execute logit pair; alpha(l,k) is the softmax execute probability.
/// Blocks outside the curriculum frontier and always-on blocks are pinned:
/// their effective alpha is exactly 1 and no gradient reaches their logits.
class PolicyDistribution {
 public:
  PolicyDistribution(std::size_t num_blocks, std::size_t num_tasks,
                     std::vector<bool> always_on);

  std::size_t num_blocks() const { return num_blocks_; }
  std::size_t num_tasks() const { return num_tasks_; }

  std::size_t frontier() const { return frontier_; }
  void set_frontier(std::size_t frontier);
  /// Blocks eligible for policy learning (not always-on).
  std::size_t max_frontier() const;
  bool always_on(std::size_t l) const { return always_on_[l]; }
  bool learnable(std::size_t l) const;

  /// Execute probability; exactly 1 for pinned blocks.
  double alpha(std::size_t l, std::size_t k) const;
  std::vector<std::vector<double>> alpha_matrix() const;
  std::vector<bool> learnable_mask() const;

  /// Graph node for alpha(l,k); undefined Tensor for pinned blocks.
  Tensor alpha_node(std::size_t l, std::size_t k) const;
  AlphaView alpha_view() const;

  Tensor logits(std::size_t l, std::size_t k) const { return logits_[l][k]; }
  std::vector<Tensor> logit_params();

  /// Project logits back into [-bound, bound] after an optimizer step.
  void clamp_logits(double bound = 30.0);

  nlohmann::json to_json() const;
  static PolicyDistribution from_json(const nlohmann::json& j);
  /// rows = blocks, cols = tasks.
  void write_alpha_csv(const std::string& path) const;

 private:
  std::size_t num_blocks_, num_tasks_;
  std::vector<bool> always_on_;
  std::size_t frontier_ = 0;
  std::vector<std::vector<Tensor>> logits_;  // [L][K], each shape [2]
};

/// One relaxed policy sample per learnable (block, task): fresh Gumbel noise,
/// temperature tau. weight(l,k) is the execute component, which multiplies the
/// block transform during policy training; pinned blocks yield an undefined
/// Tensor (weight exactly 1, no gradient).
struct PolicyWeightSet {
  std::vector<std::vector<Tensor>> pair;    // [L][K] relaxed [2] samples
  std::vector<std::vector<Tensor>> weight;  // [L][K] execute scalars

  std::vector<Tensor> weights_for_task(std::size_t k) const;
};

PolicyWeightSet relaxed_policy_weights(const PolicyDistribution& dist, double tau,
                                       SeededRng& rng);

/// Discrete plans, one per task: hard Gumbel-argmax sample for learnable
/// blocks, 1 for pinned blocks.
std::vector<ExecutionPlan> sample_plan(const PolicyDistribution& dist,
                                       SeededRng& rng);

/// Frontier growth: one block every `cadence` epochs, from the last block
/// toward the first, counting only blocks eligible for learning. Newly
/// unfrozen logits are reset to the warm value (0,0), i.e. alpha = 0.5.
/// Returns the updated frontier.
std::size_t advance_curriculum(PolicyDistribution& dist,
                               std::size_t epochs_since_warmup,
                               std::size_t cadence);

void write_plans_csv(const std::vector<ExecutionPlan>& plans,
                     const std::string& path);
nlohmann::json plans_to_json(const std::vector<ExecutionPlan>& plans);
std::vector<ExecutionPlan> plans_from_json(const nlohmann::json& j);

}  // namespace gateshare
