#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "gateshare/rng.hpp"
#include "gateshare/tensor.hpp"

namespace gateshare {

/// Two-way execute/skip distribution. pi = [1-alpha, alpha] where alpha is the
/// probability of executing. Stored as a logit pair; alpha is recovered by
/// softmax.
struct BernoulliLogits {
  double logit_skip = 0.0;
  double logit_exec = 0.0;

  static BernoulliLogits from_alpha(double alpha);

  double alpha() const;
  std::array<double, 2> pi() const;       // [skip, exec], sums to 1
  std::array<double, 2> log_pi() const;   // normalized log-probabilities
};

/// n independent Gumbel(0,1) draws as a constant tensor.
Tensor sample_gumbel(SeededRng& rng, std::size_t n);

/// Discrete decision: argmax_j (log pi(j) + g(j)). Ties break toward execute.
int hard_sample(const BernoulliLogits& pi, const std::array<double, 2>& g);

/// Temperature-relaxed sample on the 2-simplex.
std::array<double, 2> relaxed_sample(const BernoulliLogits& pi,
                                     const std::array<double, 2>& g, double tau);

/// One-hot of hard_sample; the graph variant below carries the relaxed
/// gradient.
std::array<double, 2> straight_through_sample(const BernoulliLogits& pi,
                                              const std::array<double, 2>& g,
                                              double tau);

// Graph variants. `logits` is a [2] tensor (possibly trainable); the returned
// tensors are differentiable w.r.t. it.

Tensor relaxed_sample_node(const Tensor& logits, const std::array<double, 2>& g,
                           double tau);

/// hard + (relaxed - stop_gradient(relaxed)): forward exactly one-hot,
/// backward the relaxed gradient.
Tensor straight_through_node(const Tensor& logits, const std::array<double, 2>& g,
                             double tau);

/// Row-batched relaxed samples for per-instance gates: logits [n,2],
/// g [n,2] constant noise -> [n,2] on the simplex per row.
Tensor relaxed_rows(const Tensor& logits, const Tensor& g, double tau);

struct StraightThroughRows {
  std::vector<int> hard;  // per-row decision in {0,1}
  Tensor w;               // [n]; forward exactly hard, backward relaxed
  Tensor w_soft;          // [n]; the relaxed execute probability (column 1)
};

StraightThroughRows straight_through_rows(const Tensor& logits, const Tensor& g,
                                          double tau);

/// Decay trigger for the sampling temperature.
enum class DecayTrigger { EveryEpoch, OnMetricMet };

struct TemperatureSchedule {
  double initial = 5.0;
  double decay_rate = 0.965;
  double floor = 0.5;
  DecayTrigger trigger = DecayTrigger::OnMetricMet;
  double tau = 5.0;

  static TemperatureSchedule make(double initial, double decay_rate, double floor,
                                  DecayTrigger trigger);

  /// tau <- max(floor, tau * decay_rate) when the trigger fired, else
  /// unchanged. Returns the updated tau.
  double step(bool trigger_fired);
};

}  // namespace gateshare
