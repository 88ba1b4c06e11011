#include "gateshare/gumbel.hpp"

#include <cmath>

#include "gateshare/error.hpp"

namespace gateshare {

namespace {

void check_tau(double tau, const char* op) {
  if (!(tau > 0.0))
    throw ConfigError(std::string(op) + ": temperature must be > 0, got " +
                      std::to_string(tau));
}

void check_pair(const Tensor& t, const char* op) {
  if (t.numel() != 2)
    throw ShapeError(op, "expected a logit pair, got shape " +
                             shape_to_string(t.shape()));
}

}  // namespace

BernoulliLogits BernoulliLogits::from_alpha(double alpha) {
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw ConfigError("BernoulliLogits: alpha must lie strictly in (0,1), got " +
                      std::to_string(alpha));
  return {std::log(1.0 - alpha), std::log(alpha)};
}

double BernoulliLogits::alpha() const {
  // softmax component 1 of the pair == sigmoid of the logit difference
  const double d = logit_exec - logit_skip;
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

std::array<double, 2> BernoulliLogits::pi() const {
  const double a = alpha();
  return {1.0 - a, a};
}

std::array<double, 2> BernoulliLogits::log_pi() const {
  const double mx = std::max(logit_skip, logit_exec);
  const double lse =
      mx + std::log(std::exp(logit_skip - mx) + std::exp(logit_exec - mx));
  return {logit_skip - lse, logit_exec - lse};
}

Tensor sample_gumbel(SeededRng& rng, std::size_t n) {
  if (n == 0) throw ConfigError("sample_gumbel: n must be >= 1");
  std::vector<double> out(n);
  for (double& v : out) v = rng.gumbel();
  return Tensor::from_data({n}, std::move(out));
}

int hard_sample(const BernoulliLogits& pi, const std::array<double, 2>& g) {
  const auto lp = pi.log_pi();
  const double score_skip = lp[0] + g[0];
  const double score_exec = lp[1] + g[1];
  return score_exec >= score_skip ? 1 : 0;
}

std::array<double, 2> relaxed_sample(const BernoulliLogits& pi,
                                     const std::array<double, 2>& g, double tau) {
  check_tau(tau, "relaxed_sample");
  const auto lp = pi.log_pi();
  const double a0 = (lp[0] + g[0]) / tau;
  const double a1 = (lp[1] + g[1]) / tau;
  const double mx = std::max(a0, a1);
  const double e0 = std::exp(a0 - mx);
  const double e1 = std::exp(a1 - mx);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

std::array<double, 2> straight_through_sample(const BernoulliLogits& pi,
                                              const std::array<double, 2>& g,
                                              double tau) {
  check_tau(tau, "straight_through_sample");
  const int h = hard_sample(pi, g);
  return {h == 0 ? 1.0 : 0.0, h == 1 ? 1.0 : 0.0};
}

Tensor relaxed_sample_node(const Tensor& logits, const std::array<double, 2>& g,
                           double tau) {
  check_tau(tau, "relaxed_sample");
  check_pair(logits, "relaxed_sample");
  const Tensor noise = Tensor::from_data({2}, {g[0], g[1]});
  const Tensor scores = scale(add(log_softmax(logits, 0), noise), 1.0 / tau);
  return softmax(scores, 0);
}

Tensor straight_through_node(const Tensor& logits, const std::array<double, 2>& g,
                             double tau) {
  check_pair(logits, "straight_through_sample");
  const Tensor relaxed = relaxed_sample_node(logits, g, tau);
  BernoulliLogits pi{logits.at(0), logits.at(1)};
  const int h = hard_sample(pi, g);
  const Tensor onehot =
      Tensor::from_data({2}, {h == 0 ? 1.0 : 0.0, h == 1 ? 1.0 : 0.0});
  return add(onehot, sub(relaxed, relaxed.detach()));
}

Tensor relaxed_rows(const Tensor& logits, const Tensor& g, double tau) {
  check_tau(tau, "relaxed_rows");
  if (logits.shape().size() != 2 || logits.shape()[1] != 2)
    throw ShapeError("relaxed_rows", "expected [n,2] logits, got " +
                                         shape_to_string(logits.shape()));
  if (g.shape() != logits.shape())
    throw ShapeError("relaxed_rows", "noise shape " + shape_to_string(g.shape()) +
                                         " does not match logits " +
                                         shape_to_string(logits.shape()));
  const Tensor scores = scale(add(log_softmax(logits, 1), g), 1.0 / tau);
  return softmax(scores, 1);
}

StraightThroughRows straight_through_rows(const Tensor& logits, const Tensor& g,
                                          double tau) {
  const Tensor relaxed = relaxed_rows(logits, g, tau);
  const std::size_t n = logits.shape()[0];
  StraightThroughRows out;
  out.hard.resize(n);
  std::vector<double> hard_vals(n);
  for (std::size_t i = 0; i < n; ++i) {
    BernoulliLogits pi{logits.at(i * 2), logits.at(i * 2 + 1)};
    const int h = hard_sample(pi, {g.at(i * 2), g.at(i * 2 + 1)});
    out.hard[i] = h;
    hard_vals[i] = static_cast<double>(h);
  }
  out.w_soft = column(relaxed, 1);
  const Tensor hard_t = Tensor::from_data({n}, std::move(hard_vals));
  out.w = add(hard_t, sub(out.w_soft, out.w_soft.detach()));
  return out;
}

TemperatureSchedule TemperatureSchedule::make(double initial, double decay_rate,
                                              double floor, DecayTrigger trigger) {
  if (!(initial > 0.0) || !(floor > 0.0))
    throw ConfigError("TemperatureSchedule: initial and floor must be > 0");
  if (!(decay_rate > 0.0) || decay_rate > 1.0)
    throw ConfigError("TemperatureSchedule: decay_rate must lie in (0,1]");
  TemperatureSchedule s;
  s.initial = initial;
  s.decay_rate = decay_rate;
  s.floor = floor;
  s.trigger = trigger;
  s.tau = initial;
  return s;
}

double TemperatureSchedule::step(bool trigger_fired) {
  if (trigger_fired) tau = std::max(floor, tau * decay_rate);
  return tau;
}

}  // namespace gateshare
