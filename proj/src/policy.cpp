#include "gateshare/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gateshare/error.hpp"
#include "gateshare/serialize.hpp"

namespace gateshare {

PolicyDistribution::PolicyDistribution(std::size_t num_blocks,
                                       std::size_t num_tasks,
                                       std::vector<bool> always_on)
    : num_blocks_(num_blocks),
      num_tasks_(num_tasks),
      always_on_(std::move(always_on)) {
  if (always_on_.size() != num_blocks_)
    throw ConfigError("policy: always_on must have one entry per block");
  logits_.resize(num_blocks_);
  for (auto& row : logits_) {
    row.resize(num_tasks_);
    for (auto& t : row) t = Tensor::zeros({2}, true);
  }
}

std::size_t PolicyDistribution::max_frontier() const {
  std::size_t eligible = 0;
  for (bool a : always_on_)
    if (!a) ++eligible;
  return eligible;
}

void PolicyDistribution::set_frontier(std::size_t frontier) {
  frontier_ = std::min(frontier, max_frontier());
}

bool PolicyDistribution::learnable(std::size_t l) const {
  if (always_on_[l]) return false;
  // The frontier covers the trailing `frontier_` eligible blocks.
  std::size_t trailing_eligible = 0;
  for (std::size_t i = num_blocks_; i-- > l + 1;)
    if (!always_on_[i]) ++trailing_eligible;
  return trailing_eligible < frontier_;
}

double PolicyDistribution::alpha(std::size_t l, std::size_t k) const {
  if (!learnable(l)) return 1.0;
  BernoulliLogits bl{logits_[l][k].at(0), logits_[l][k].at(1)};
  return bl.alpha();
}

std::vector<std::vector<double>> PolicyDistribution::alpha_matrix() const {
  std::vector<std::vector<double>> m(num_blocks_,
                                     std::vector<double>(num_tasks_, 1.0));
  for (std::size_t l = 0; l < num_blocks_; ++l)
    for (std::size_t k = 0; k < num_tasks_; ++k) m[l][k] = alpha(l, k);
  return m;
}

std::vector<bool> PolicyDistribution::learnable_mask() const {
  std::vector<bool> m(num_blocks_);
  for (std::size_t l = 0; l < num_blocks_; ++l) m[l] = learnable(l);
  return m;
}

Tensor PolicyDistribution::alpha_node(std::size_t l, std::size_t k) const {
  if (!learnable(l)) return Tensor();
  return select(softmax(logits_[l][k], 0), 1);
}

AlphaView PolicyDistribution::alpha_view() const {
  AlphaView view;
  view.alpha.resize(num_blocks_);
  for (std::size_t l = 0; l < num_blocks_; ++l) {
    view.alpha[l].resize(num_tasks_);
    for (std::size_t k = 0; k < num_tasks_; ++k)
      view.alpha[l][k] = alpha_node(l, k);
  }
  return view;
}

std::vector<Tensor> PolicyDistribution::logit_params() {
  std::vector<Tensor> out;
  out.reserve(num_blocks_ * num_tasks_);
  for (auto& row : logits_)
    for (auto& t : row) out.push_back(t);
  return out;
}

void PolicyDistribution::clamp_logits(double bound) {
  for (auto& row : logits_)
    for (auto& t : row)
      for (double& v : t.mutable_data()) v = std::clamp(v, -bound, bound);
}

nlohmann::json PolicyDistribution::to_json() const {
  nlohmann::json j;
  j["num_blocks"] = num_blocks_;
  j["num_tasks"] = num_tasks_;
  j["always_on"] = always_on_;
  j["frontier"] = frontier_;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : logits_) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& t : row) r.push_back(tensor_record(t.shape(), t.data()));
    rows.push_back(std::move(r));
  }
  j["logits"] = std::move(rows);
  nlohmann::json alpha_rows = nlohmann::json::array();
  for (const auto& row : alpha_matrix()) alpha_rows.push_back(row);
  j["alpha"] = std::move(alpha_rows);
  return j;
}

PolicyDistribution PolicyDistribution::from_json(const nlohmann::json& j) {
  PolicyDistribution dist(j.at("num_blocks").get<std::size_t>(),
                          j.at("num_tasks").get<std::size_t>(),
                          j.at("always_on").get<std::vector<bool>>());
  dist.frontier_ = j.at("frontier").get<std::size_t>();
  const auto& rows = j.at("logits");
  for (std::size_t l = 0; l < dist.num_blocks_; ++l)
    for (std::size_t k = 0; k < dist.num_tasks_; ++k) {
      Shape shape;
      std::vector<double> data;
      read_tensor_record(rows.at(l).at(k), shape, data);
      dist.logits_[l][k].mutable_data() = std::move(data);
    }
  return dist;
}

void PolicyDistribution::write_alpha_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write policy csv: " + path);
  out << "block";
  for (std::size_t k = 0; k < num_tasks_; ++k) out << ",task" << k;
  out << "\n";
  out.precision(17);
  const auto m = alpha_matrix();
  for (std::size_t l = 0; l < num_blocks_; ++l) {
    out << l;
    for (std::size_t k = 0; k < num_tasks_; ++k) out << "," << m[l][k];
    out << "\n";
  }
}

std::vector<Tensor> PolicyWeightSet::weights_for_task(std::size_t k) const {
  std::vector<Tensor> out(weight.size());
  for (std::size_t l = 0; l < weight.size(); ++l) out[l] = weight[l][k];
  return out;
}

PolicyWeightSet relaxed_policy_weights(const PolicyDistribution& dist, double tau,
                                       SeededRng& rng) {
  PolicyWeightSet set;
  const std::size_t L = dist.num_blocks(), K = dist.num_tasks();
  set.pair.assign(L, std::vector<Tensor>(K));
  set.weight.assign(L, std::vector<Tensor>(K));
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t k = 0; k < K; ++k) {
      if (!dist.learnable(l)) continue;  // weight exactly 1, no gradient
      const auto g = rng.gumbel_pair();
      set.pair[l][k] = relaxed_sample_node(dist.logits(l, k), g, tau);
      set.weight[l][k] = select(set.pair[l][k], 1);
    }
  }
  return set;
}

std::vector<ExecutionPlan> sample_plan(const PolicyDistribution& dist,
                                       SeededRng& rng) {
  std::vector<ExecutionPlan> plans;
  const std::size_t L = dist.num_blocks(), K = dist.num_tasks();
  plans.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    ExecutionPlan plan;
    plan.task = k;
    plan.execute.resize(L, 1);
    for (std::size_t l = 0; l < L; ++l) {
      if (!dist.learnable(l)) {
        plan.execute[l] = 1;
        continue;
      }
      BernoulliLogits bl{dist.logits(l, k).at(0), dist.logits(l, k).at(1)};
      plan.execute[l] = hard_sample(bl, rng.gumbel_pair());
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

std::size_t advance_curriculum(PolicyDistribution& dist,
                               std::size_t epochs_since_warmup,
                               std::size_t cadence) {
  if (cadence == 0) throw ConfigError("advance_curriculum: cadence must be >= 1");
  const std::size_t before = dist.frontier();
  const std::size_t target =
      std::min(epochs_since_warmup / cadence, dist.max_frontier());
  if (target > before) {
    dist.set_frontier(target);
    // Reset logits of blocks that just became learnable to the warm value.
    for (std::size_t l = 0; l < dist.num_blocks(); ++l) {
      if (!dist.learnable(l)) continue;
      std::size_t trailing = 0;
      for (std::size_t i = dist.num_blocks(); i-- > l + 1;)
        if (!dist.always_on(i)) ++trailing;
      if (trailing >= before) {  // newly inside the frontier
        for (std::size_t k = 0; k < dist.num_tasks(); ++k) {
          auto& d = dist.logits(l, k).mutable_data();
          d[0] = 0.0;
          d[1] = 0.0;
        }
      }
    }
  }
  return dist.frontier();
}

void write_plans_csv(const std::vector<ExecutionPlan>& plans,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write plan csv: " + path);
  out << "block";
  for (const auto& p : plans) out << ",task" << p.task;
  out << "\n";
  if (plans.empty()) return;
  const std::size_t L = plans[0].execute.size();
  for (std::size_t l = 0; l < L; ++l) {
    out << l;
    for (const auto& p : plans) out << "," << p.execute[l];
    out << "\n";
  }
}

nlohmann::json plans_to_json(const std::vector<ExecutionPlan>& plans) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& p : plans)
    j.push_back({{"task", p.task}, {"execute", p.execute}});
  return j;
}

std::vector<ExecutionPlan> plans_from_json(const nlohmann::json& j) {
  std::vector<ExecutionPlan> plans;
  for (const auto& e : j) {
    ExecutionPlan p;
    p.task = e.at("task").get<std::size_t>();
    p.execute = e.at("execute").get<std::vector<int>>();
    plans.push_back(std::move(p));
  }
  return plans;
}

}  // namespace gateshare
