#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "gateshare/data.hpp"
#include "gateshare/tensor.hpp"

namespace gateshare {

/// Training proceeds through four phases; each activates a different subset of
/// loss terms.
enum class Phase { WarmUp, NetworkStep, PolicyStep, Retrain };

struct LossWeights {
  std::vector<double> lambda_task;  // per task; empty = all ones
  double lambda_sparsity = 0.05;
  double lambda_sharing = 0.05;
  double lambda_instance = 1.0;
  double target_rate = 1.0;
  // Eq-style double sum over ordered task pairs doubles the sharing term;
  // kept as a flag for exactness studies.
  bool ordered_pairs = false;

  void validate(std::size_t num_tasks) const;
  double task_weight(std::size_t k) const;
};

/// View of the execution-probability matrix as graph scalars. alpha[l][k] may
/// be an empty Tensor for pinned blocks (alpha fixed at 1, excluded from the
/// regularizers).
struct AlphaView {
  std::vector<std::vector<Tensor>> alpha;  // [L][K]
  std::size_t num_blocks() const { return alpha.size(); }
  std::size_t num_tasks() const { return alpha.empty() ? 0 : alpha[0].size(); }
  bool pinned(std::size_t l) const { return !alpha[l].empty() && !alpha[l][0].defined(); }
};

/// Sum of log alpha over learnable entries. Always <= 0; adding it to the
/// total with positive weight drives execution probabilities down.
Tensor sparsity_loss(const AlphaView& alpha);

/// Depth-weighted disagreement between task columns:
/// sum over task pairs and blocks of ((L-l)/L) * |alpha_l,k1 - alpha_l,k2|
/// with blocks indexed l = 1..L. Unordered pairs unless ordered_pairs.
Tensor sharing_loss(const AlphaView& alpha, bool ordered_pairs = false);

/// Squared deviation of per-block mean relaxed execute probability from the
/// target rate: sum over gated blocks of (beta_l - t)^2.
Tensor instance_loss(const std::vector<Tensor>& beta, double target_rate);

/// Per-task prediction loss, mean over the batch.
///   classification: cross-entropy on logits [n,C]
///   binary:         cross-entropy on a single logit column, computed via
///                   softplus for stability
///   regression:     mean squared error
/// `labels` is the batch slice of the task column.
Tensor task_loss(const Tensor& head_output, const std::vector<double>& labels,
                 TaskKind kind, std::size_t classes);

/// Weighted total with phase gating:
///   WarmUp / NetworkStep: task terms only
///   PolicyStep:           task + sparsity + sharing
///   Retrain:              task + instance
Tensor total_loss(const std::vector<Tensor>& task_losses,
                  const std::optional<Tensor>& sparsity,
                  const std::optional<Tensor>& sharing,
                  const std::optional<Tensor>& instance,
                  const LossWeights& weights, Phase phase);

// Plain-value mirrors used for reporting and by test oracles.
double sparsity_value(const std::vector<std::vector<double>>& alpha,
                      const std::vector<bool>& learnable);
double sharing_value(const std::vector<std::vector<double>>& alpha,
                     const std::vector<bool>& learnable, bool ordered_pairs = false);
double instance_value(const std::vector<double>& beta, double target_rate);

}  // namespace gateshare
