#include "gateshare/losses.hpp"

#include <cmath>

#include "gateshare/error.hpp"

namespace gateshare {

void LossWeights::validate(std::size_t num_tasks) const {
  if (!lambda_task.empty() && lambda_task.size() != num_tasks)
    throw ConfigError("losses: lambda_task has " +
                      std::to_string(lambda_task.size()) + " entries for " +
                      std::to_string(num_tasks) + " tasks");
  for (double l : lambda_task)
    if (l < 0.0) throw ConfigError("losses: negative task weight");
  if (lambda_sparsity < 0.0 || lambda_sharing < 0.0 || lambda_instance < 0.0)
    throw ConfigError("losses: negative loss weight");
  if (!(target_rate > 0.0) || target_rate > 1.0)
    throw ConfigError("losses: target_rate must lie in (0,1]");
}

double LossWeights::task_weight(std::size_t k) const {
  return lambda_task.empty() ? 1.0 : lambda_task.at(k);
}

Tensor sparsity_loss(const AlphaView& view) {
  Tensor acc = Tensor::scalar(0.0);
  for (const auto& row : view.alpha)
    for (const auto& a : row)
      if (a.defined()) acc = add(acc, log(a));
  return acc;
}

Tensor sharing_loss(const AlphaView& view, bool ordered_pairs) {
  const std::size_t L = view.num_blocks();
  const std::size_t K = view.num_tasks();
  Tensor acc = Tensor::scalar(0.0);
  for (std::size_t k1 = 0; k1 < K; ++k1) {
    for (std::size_t k2 = k1 + 1; k2 < K; ++k2) {
      for (std::size_t l = 0; l < L; ++l) {
        const Tensor& a1 = view.alpha[l][k1];
        const Tensor& a2 = view.alpha[l][k2];
        if (!a1.defined() || !a2.defined()) continue;  // pinned: both at 1
        const double w = static_cast<double>(L - (l + 1)) / static_cast<double>(L);
        if (w == 0.0) continue;
        acc = add(acc, scale(abs(sub(a1, a2)), w));
      }
    }
  }
  if (ordered_pairs) acc = scale(acc, 2.0);
  return acc;
}

Tensor instance_loss(const std::vector<Tensor>& beta, double target_rate) {
  Tensor acc = Tensor::scalar(0.0);
  const Tensor t = Tensor::scalar(target_rate);
  for (const auto& b : beta) {
    if (!b.defined()) continue;
    const Tensor dev = sub(b, t);
    acc = add(acc, mul(dev, dev));
  }
  return acc;
}

Tensor task_loss(const Tensor& head_output, const std::vector<double>& labels,
                 TaskKind kind, std::size_t classes) {
  const std::size_t n = head_output.shape()[0];
  if (labels.size() != n)
    throw ShapeError("task_loss", "batch of " + std::to_string(n) + " rows with " +
                                      std::to_string(labels.size()) + " labels");
  switch (kind) {
    case TaskKind::Classification: {
      if (head_output.shape().size() != 2 || head_output.shape()[1] != classes)
        throw ShapeError("task_loss", "expected logits [n," +
                                          std::to_string(classes) + "], got " +
                                          shape_to_string(head_output.shape()));
      std::vector<double> onehot(n * classes, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double raw = labels[i];
        const auto c = static_cast<long long>(raw);
        if (raw != static_cast<double>(c) || c < 0 ||
            c >= static_cast<long long>(classes))
          throw ConfigError("task_loss: label " + std::to_string(raw) +
                            " out of range for " + std::to_string(classes) +
                            " classes");
        onehot[i * classes + static_cast<std::size_t>(c)] = 1.0;
      }
      const Tensor mask = Tensor::from_data({n, classes}, std::move(onehot));
      const Tensor picked = mul(log_softmax(head_output, 1), mask);
      return scale(sum(picked), -1.0 / static_cast<double>(n));
    }
    case TaskKind::Binary: {
      Tensor z = head_output;
      if (z.shape().size() == 2) {
        if (z.shape()[1] != 1)
          throw ShapeError("task_loss", "binary head must emit one logit, got " +
                                            shape_to_string(z.shape()));
        z = column(z, 0);
      }
      std::vector<double> y(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != 0.0 && labels[i] != 1.0)
          throw ConfigError("task_loss: binary label must be 0 or 1, got " +
                            std::to_string(labels[i]));
        y[i] = labels[i];
      }
      const Tensor yt = Tensor::from_data({n}, std::move(y));
      // mean(softplus(z) - y*z) == mean binary cross-entropy on logits
      const Tensor per = sub(softplus(z), mul(yt, z));
      return mean(per);
    }
    case TaskKind::Regression: {
      Tensor p = head_output;
      if (p.shape().size() == 2) {
        if (p.shape()[1] != 1)
          throw ShapeError("task_loss", "regression head must emit one value, got " +
                                            shape_to_string(p.shape()));
        p = column(p, 0);
      }
      const Tensor yt = Tensor::from_data({n}, labels);
      const Tensor diff = sub(p, yt);
      return mean(mul(diff, diff));
    }
  }
  throw ConfigError("task_loss: unknown task kind");
}

Tensor total_loss(const std::vector<Tensor>& task_losses,
                  const std::optional<Tensor>& sparsity,
                  const std::optional<Tensor>& sharing,
                  const std::optional<Tensor>& instance,
                  const LossWeights& weights, Phase phase) {
  weights.validate(task_losses.size());
  Tensor acc = Tensor::scalar(0.0);
  for (std::size_t k = 0; k < task_losses.size(); ++k)
    acc = add(acc, scale(task_losses[k], weights.task_weight(k)));
  const bool policy_terms = phase == Phase::PolicyStep;
  const bool instance_terms = phase == Phase::Retrain;
  if (policy_terms && sparsity.has_value() && weights.lambda_sparsity > 0.0)
    acc = add(acc, scale(*sparsity, weights.lambda_sparsity));
  if (policy_terms && sharing.has_value() && weights.lambda_sharing > 0.0)
    acc = add(acc, scale(*sharing, weights.lambda_sharing));
  if (instance_terms && instance.has_value() && weights.lambda_instance > 0.0)
    acc = add(acc, scale(*instance, weights.lambda_instance));
  return acc;
}

double sparsity_value(const std::vector<std::vector<double>>& alpha,
                      const std::vector<bool>& learnable) {
  double acc = 0.0;
  for (std::size_t l = 0; l < alpha.size(); ++l) {
    if (!learnable.empty() && !learnable[l]) continue;
    for (double a : alpha[l]) acc += std::log(a);
  }
  return acc;
}

double sharing_value(const std::vector<std::vector<double>>& alpha,
                     const std::vector<bool>& learnable, bool ordered_pairs) {
  const std::size_t L = alpha.size();
  const std::size_t K = L ? alpha[0].size() : 0;
  double acc = 0.0;
  for (std::size_t k1 = 0; k1 < K; ++k1)
    for (std::size_t k2 = k1 + 1; k2 < K; ++k2)
      for (std::size_t l = 0; l < L; ++l) {
        if (!learnable.empty() && !learnable[l]) continue;
        const double w = static_cast<double>(L - (l + 1)) / static_cast<double>(L);
        acc += w * std::fabs(alpha[l][k1] - alpha[l][k2]);
      }
  return ordered_pairs ? 2.0 * acc : acc;
}

double instance_value(const std::vector<double>& beta, double target_rate) {
  double acc = 0.0;
  for (double b : beta) acc += (b - target_rate) * (b - target_rate);
  return acc;
}

}  // namespace gateshare
