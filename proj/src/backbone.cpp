#include "gateshare/backbone.hpp"

#include <cmath>

#include "gateshare/error.hpp"
#include "gateshare/serialize.hpp"

namespace gateshare {

std::size_t BackboneSpec::hidden_width(std::size_t l) const {
  if (hidden_widths.empty()) return feature_dim;
  return hidden_widths.at(l);
}

std::size_t BackboneSpec::gate_hidden_width() const {
  if (gate_hidden > 0) return gate_hidden;
  return std::max<std::size_t>(2, feature_dim / 4);
}

void BackboneSpec::validate() const {
  if (num_blocks < 1) throw ConfigError("backbone: num_blocks must be >= 1");
  if (num_tasks < 2) throw ConfigError("backbone: num_tasks must be >= 2");
  if (input_dim == 0 || feature_dim == 0)
    throw ConfigError("backbone: zero dimension");
  if (!hidden_widths.empty() && hidden_widths.size() != num_blocks)
    throw ConfigError("backbone: hidden_widths must have one entry per block");
  if (heads.size() != num_tasks)
    throw ConfigError("backbone: need one head per task, got " +
                      std::to_string(heads.size()) + " for " +
                      std::to_string(num_tasks) + " tasks");
  if (gate_enable.size() != num_blocks || always_on.size() != num_blocks)
    throw ConfigError("backbone: gate_enable/always_on must have one entry per block");
  for (const auto& h : heads) {
    if (h.kind == TaskKind::Classification && h.output_dim < 2)
      throw ConfigError("backbone: classification head needs >= 2 classes");
    if (h.kind != TaskKind::Classification && h.output_dim != 1)
      throw ConfigError("backbone: non-classification heads emit one value");
  }
}

nlohmann::json BackboneSpec::to_json() const {
  nlohmann::json heads_j = nlohmann::json::array();
  for (const auto& h : heads)
    heads_j.push_back({{"kind", task_kind_name(h.kind)}, {"output_dim", h.output_dim}});
  return nlohmann::json{{"input_dim", input_dim},
                        {"feature_dim", feature_dim},
                        {"num_blocks", num_blocks},
                        {"num_tasks", num_tasks},
                        {"hidden_widths", hidden_widths},
                        {"heads", heads_j},
                        {"gate_enable", gate_enable},
                        {"always_on", always_on},
                        {"gate_hidden", gate_hidden}};
}

BackboneSpec BackboneSpec::from_json(const nlohmann::json& j) {
  BackboneSpec s;
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.feature_dim = j.at("feature_dim").get<std::size_t>();
  s.num_blocks = j.at("num_blocks").get<std::size_t>();
  s.num_tasks = j.at("num_tasks").get<std::size_t>();
  s.hidden_widths = j.value("hidden_widths", std::vector<std::size_t>{});
  s.heads.clear();
  for (const auto& h : j.at("heads")) {
    HeadSpec hs;
    hs.kind = task_kind_from_name(h.at("kind").get<std::string>());
    hs.output_dim = h.at("output_dim").get<std::size_t>();
    s.heads.push_back(hs);
  }
  s.gate_enable = j.at("gate_enable").get<std::vector<bool>>();
  s.always_on = j.at("always_on").get<std::vector<bool>>();
  s.gate_hidden = j.value("gate_hidden", std::size_t{0});
  s.validate();
  return s;
}

ExecutionPlan ExecutionPlan::all_ones(std::size_t task, std::size_t num_blocks) {
  return {task, std::vector<int>(num_blocks, 1)};
}

Tensor ResidualBlock::transform(const Tensor& x) const {
  return linear(relu(linear(x, w1, b1)), w2, b2);
}

Tensor GatingUnit::logits(const Tensor& x) const {
  return linear(relu(linear(x, w1, b1)), w2, b2);
}

std::vector<double> GatingUnit::execute_probability(const Tensor& x) const {
  const Tensor l = logits(x);
  const std::size_t n = l.shape()[0];
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    BernoulliLogits bl{l.at(i * 2), l.at(i * 2 + 1)};
    out[i] = bl.alpha();
  }
  return out;
}

namespace {

Tensor init_matrix(SeededRng& rng, std::size_t rows, std::size_t cols) {
  // He-style fan-in scaling.
  const double s = std::sqrt(2.0 / static_cast<double>(rows));
  std::vector<double> v(rows * cols);
  for (double& x : v) x = s * rng.normal();
  return Tensor::from_data({rows, cols}, std::move(v), true);
}

Tensor init_bias(std::size_t n) { return Tensor::zeros({n}, true); }

}  // namespace

Backbone::Backbone(BackboneSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  blocks_.resize(spec_.num_blocks);
  gates_.resize(spec_.num_blocks);
  head_w_.resize(spec_.num_tasks);
  head_b_.resize(spec_.num_tasks);
}

void Backbone::init_network(SeededRng& rng) {
  const std::size_t f = spec_.feature_dim;
  stem_w_ = init_matrix(rng, spec_.input_dim, f);
  stem_b_ = init_bias(f);
  for (std::size_t l = 0; l < spec_.num_blocks; ++l) {
    const std::size_t h = spec_.hidden_width(l);
    blocks_[l].w1 = init_matrix(rng, f, h);
    blocks_[l].b1 = init_bias(h);
    blocks_[l].w2 = init_matrix(rng, h, f);
    blocks_[l].b2 = init_bias(f);
  }
  for (std::size_t k = 0; k < spec_.num_tasks; ++k) {
    head_w_[k] = init_matrix(rng, f, spec_.heads[k].output_dim);
    head_b_[k] = init_bias(spec_.heads[k].output_dim);
  }
}

void Backbone::init_gates(SeededRng& rng) {
  const std::size_t f = spec_.feature_dim;
  const std::size_t gh = spec_.gate_hidden_width();
  for (std::size_t l = 0; l < spec_.num_blocks; ++l) {
    if (!spec_.gate_enable[l]) {
      gates_[l].reset();
      continue;
    }
    GatingUnit g;
    g.w1 = init_matrix(rng, f, gh);
    g.b1 = init_bias(gh);
    g.w2 = init_matrix(rng, gh, 2);
    g.b2 = init_bias(2);
    gates_[l] = std::move(g);
  }
}

std::vector<Tensor> Backbone::network_params() {
  std::vector<Tensor> out{stem_w_, stem_b_};
  for (auto& b : blocks_) {
    out.push_back(b.w1);
    out.push_back(b.b1);
    out.push_back(b.w2);
    out.push_back(b.b2);
  }
  for (std::size_t k = 0; k < spec_.num_tasks; ++k) {
    out.push_back(head_w_[k]);
    out.push_back(head_b_[k]);
  }
  return out;
}

std::vector<Tensor> Backbone::gate_params() {
  std::vector<Tensor> out;
  for (auto& g : gates_) {
    if (!g.has_value()) continue;
    out.push_back(g->w1);
    out.push_back(g->b1);
    out.push_back(g->w2);
    out.push_back(g->b2);
  }
  return out;
}

std::vector<Tensor> Backbone::block_params(std::size_t l) {
  return {blocks_[l].w1, blocks_[l].b1, blocks_[l].w2, blocks_[l].b2};
}

std::vector<std::pair<std::string, Tensor>> Backbone::named_params() {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("stem.w", stem_w_);
  out.emplace_back("stem.b", stem_b_);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    out.emplace_back(p + "w1", blocks_[l].w1);
    out.emplace_back(p + "b1", blocks_[l].b1);
    out.emplace_back(p + "w2", blocks_[l].w2);
    out.emplace_back(p + "b2", blocks_[l].b2);
  }
  for (std::size_t l = 0; l < gates_.size(); ++l) {
    if (!gates_[l].has_value()) continue;
    const std::string p = "gate" + std::to_string(l) + ".";
    out.emplace_back(p + "w1", gates_[l]->w1);
    out.emplace_back(p + "b1", gates_[l]->b1);
    out.emplace_back(p + "w2", gates_[l]->w2);
    out.emplace_back(p + "b2", gates_[l]->b2);
  }
  for (std::size_t k = 0; k < head_w_.size(); ++k) {
    const std::string p = "head" + std::to_string(k) + ".";
    out.emplace_back(p + "w", head_w_[k]);
    out.emplace_back(p + "b", head_b_[k]);
  }
  return out;
}

Backbone Backbone::clone() const {
  Backbone copy(spec_);
  auto dup = [](const Tensor& t) {
    if (!t.defined()) return Tensor();
    return Tensor::from_data(t.shape(), t.data(), t.requires_grad());
  };
  copy.stem_w_ = dup(stem_w_);
  copy.stem_b_ = dup(stem_b_);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    copy.blocks_[l].w1 = dup(blocks_[l].w1);
    copy.blocks_[l].b1 = dup(blocks_[l].b1);
    copy.blocks_[l].w2 = dup(blocks_[l].w2);
    copy.blocks_[l].b2 = dup(blocks_[l].b2);
    if (gates_[l].has_value()) {
      GatingUnit g;
      g.w1 = dup(gates_[l]->w1);
      g.b1 = dup(gates_[l]->b1);
      g.w2 = dup(gates_[l]->w2);
      g.b2 = dup(gates_[l]->b2);
      copy.gates_[l] = std::move(g);
    }
  }
  for (std::size_t k = 0; k < head_w_.size(); ++k) {
    copy.head_w_[k] = dup(head_w_[k]);
    copy.head_b_[k] = dup(head_b_[k]);
  }
  return copy;
}

BlockForwardResult block_forward(const ResidualBlock& block, const GatingUnit* gate,
                                 const Tensor& x, int u, double tau, SeededRng* rng,
                                 bool train_mode, bool stochastic_eval) {
  BlockForwardResult res;
  const std::size_t n = x.shape()[0];
  if (u == 0) {
    // Task policy skips the block: the gating unit is not evaluated.
    res.y = x;
    res.w_hard.assign(n, 0);
    return res;
  }
  if (gate == nullptr) {
    res.y = relu(add(x, block.transform(x)));
    res.w_hard.assign(n, 1);
    return res;
  }
  const Tensor z = block.transform(x);
  const Tensor gate_logits = gate->logits(x);
  res.alpha.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    BernoulliLogits bl{gate_logits.at(i * 2), gate_logits.at(i * 2 + 1)};
    res.alpha[i] = bl.alpha();
  }
  if (train_mode) {
    if (rng == nullptr)
      throw ConfigError("block_forward: gate sampling requires an rng");
    std::vector<double> noise(n * 2);
    for (double& v : noise) v = rng->gumbel();
    const Tensor g = Tensor::from_data({n, 2}, std::move(noise));
    StraightThroughRows st = straight_through_rows(gate_logits, g, tau);
    const Tensor executed = relu(add(x, z));
    const Tensor ones = Tensor::full({n}, 1.0);
    res.y = add(mul_rows(executed, st.w), mul_rows(x, sub(ones, st.w)));
    res.w_hard = std::move(st.hard);
    res.w_soft = st.w_soft;
    return res;
  }
  // Evaluation: deterministic threshold on the execute probability by
  // default; optionally a stochastic hard sample.
  std::vector<double> w(n);
  res.w_hard.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    BernoulliLogits bl{gate_logits.at(i * 2), gate_logits.at(i * 2 + 1)};
    int h;
    if (stochastic_eval) {
      if (rng == nullptr)
        throw ConfigError("block_forward: stochastic eval gates require an rng");
      h = hard_sample(bl, rng->gumbel_pair());
    } else {
      h = bl.alpha() > 0.5 ? 1 : 0;
    }
    res.w_hard[i] = h;
    w[i] = static_cast<double>(h);
  }
  const Tensor wt = Tensor::from_data({n}, std::move(w));
  const Tensor ones = Tensor::full({n}, 1.0);
  const Tensor executed = relu(add(x, z));
  res.y = add(mul_rows(executed, wt), mul_rows(x, sub(ones, wt)));
  return res;
}

Tensor Backbone::trunk(const Tensor& x, const ForwardOptions& opts,
                       std::vector<GateRecord>* gates_out) {
  Tensor h = linear(x, stem_w_, stem_b_);
  for (std::size_t l = 0; l < spec_.num_blocks; ++l) {
    switch (opts.mode) {
      case ForwardMode::HardShared: {
        h = relu(add(h, blocks_[l].transform(h)));
        break;
      }
      case ForwardMode::PolicyRelaxed: {
        const Tensor* w = nullptr;
        if (opts.policy_weights != nullptr && l < opts.policy_weights->size() &&
            (*opts.policy_weights)[l].defined())
          w = &(*opts.policy_weights)[l];
        Tensor z = blocks_[l].transform(h);
        if (w != nullptr) z = mul(z, *w);
        h = relu(add(h, z));
        break;
      }
      case ForwardMode::RetrainST:
      case ForwardMode::EvalHard: {
        if (opts.plan == nullptr)
          throw ConfigError("forward: discrete modes require an execution plan");
        const int u = opts.plan->execute.at(l);
        const bool gated = opts.gates_active && gates_[l].has_value();
        if (u == 0) {
          continue;  // skipped: Y = X, gate untouched
        }
        if (!gated) {
          h = relu(add(h, blocks_[l].transform(h)));
          break;
        }
        BlockForwardResult r = block_forward(
            blocks_[l], &*gates_[l], h, 1, opts.tau, opts.rng,
            opts.mode == ForwardMode::RetrainST, opts.stochastic_eval_gates);
        h = r.y;
        if (gates_out != nullptr) {
          GateRecord rec;
          rec.block = l;
          rec.evaluated = true;
          rec.w_hard = std::move(r.w_hard);
          rec.alpha = std::move(r.alpha);
          rec.w_soft = r.w_soft;
          if (r.w_soft.defined()) rec.beta = mean(r.w_soft);
          gates_out->push_back(std::move(rec));
        }
        break;
      }
    }
  }
  return h;
}

TaskForwardResult Backbone::forward_task(const Tensor& x, std::size_t task,
                                         const ForwardOptions& opts) {
  if (task >= spec_.num_tasks)
    throw ConfigError("forward_task: task index out of range");
  TaskForwardResult res;
  const Tensor h = trunk(x, opts, &res.gates);
  res.output = linear(h, head_w_[task], head_b_[task]);
  return res;
}

std::vector<TaskForwardResult> Backbone::forward_all_shared(const Tensor& x) {
  ForwardOptions opts;
  opts.mode = ForwardMode::HardShared;
  const Tensor h = trunk(x, opts, nullptr);
  std::vector<TaskForwardResult> out(spec_.num_tasks);
  for (std::size_t k = 0; k < spec_.num_tasks; ++k)
    out[k].output = linear(h, head_w_[k], head_b_[k]);
  return out;
}

nlohmann::json Backbone::to_json() const {
  nlohmann::json j;
  j["spec"] = spec_.to_json();
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, t] : const_cast<Backbone*>(this)->named_params())
    params[name] = tensor_record(t.shape(), t.data());
  j["params"] = std::move(params);
  return j;
}

Backbone Backbone::from_json(const nlohmann::json& j) {
  Backbone b(BackboneSpec::from_json(j.at("spec")));
  // Materialize parameter tensors, then fill from the record.
  SeededRng dummy(0);
  b.init_network(dummy);
  b.init_gates(dummy);
  const auto& params = j.at("params");
  for (auto& [name, t] : b.named_params()) {
    if (!params.contains(name))
      throw ConfigError("backbone record: missing parameter '" + name + "'");
    Shape shape;
    std::vector<double> data;
    read_tensor_record(params.at(name), shape, data);
    if (shape != t.shape())
      throw ConfigError("backbone record: shape mismatch for '" + name + "'");
    t.mutable_data() = std::move(data);
  }
  return b;
}

double block_flops(const BackboneSpec& spec, std::size_t l) {
  const double f = static_cast<double>(spec.feature_dim);
  const double h = static_cast<double>(spec.hidden_width(l));
  const double lin1 = 2.0 * f * h + h;
  const double lin2 = 2.0 * h * f + f;
  return lin1 + h /*relu*/ + lin2 + f /*residual add*/ + f /*fusion relu*/;
}

double gate_flops(const BackboneSpec& spec) {
  const double f = static_cast<double>(spec.feature_dim);
  const double gh = static_cast<double>(spec.gate_hidden_width());
  return (2.0 * f * gh + gh) + gh + (2.0 * gh * 2.0 + 2.0) + 2.0 /*softmax pair*/;
}

CostSummary count_cost(const BackboneSpec& spec,
                       const std::vector<ExecutionPlan>& plans,
                       const std::vector<double>& gate_rates) {
  spec.validate();
  if (!gate_rates.empty() && gate_rates.size() != spec.num_blocks)
    throw ConfigError("count_cost: gate_rates must have one entry per block");
  for (double r : gate_rates)
    if (r < 0.0 || r > 1.0)
      throw ConfigError("count_cost: gate rate outside [0,1]");

  CostSummary cs;
  const double f = static_cast<double>(spec.feature_dim);
  const double d = static_cast<double>(spec.input_dim);
  const double gh = static_cast<double>(spec.gate_hidden_width());

  cs.params += d * f + f;  // stem
  for (std::size_t l = 0; l < spec.num_blocks; ++l) {
    const double h = static_cast<double>(spec.hidden_width(l));
    cs.params += f * h + h + h * f + f;
    if (spec.gate_enable[l]) cs.params += f * gh + gh + gh * 2.0 + 2.0;
  }
  for (const auto& head : spec.heads)
    cs.params += f * static_cast<double>(head.output_dim) +
                 static_cast<double>(head.output_dim);

  const double k = static_cast<double>(spec.num_tasks);
  cs.expected_flops = 2.0 * d * f + f;  // stem
  for (std::size_t l = 0; l < spec.num_blocks; ++l) {
    double share = 1.0;
    if (!plans.empty()) {
      double executing = 0.0;
      for (const auto& p : plans) executing += p.execute.at(l) ? 1.0 : 0.0;
      share = executing / static_cast<double>(plans.size());
    }
    const double rate =
        spec.gate_enable[l] && !gate_rates.empty() ? gate_rates[l] : 1.0;
    double cost = block_flops(spec, l) * (spec.gate_enable[l] ? rate : 1.0);
    if (spec.gate_enable[l]) cost += gate_flops(spec);
    cs.expected_flops += share * cost;
  }
  double head_cost = 0.0;
  for (const auto& head : spec.heads)
    head_cost += 2.0 * f * static_cast<double>(head.output_dim) +
                 static_cast<double>(head.output_dim);
  cs.expected_flops += head_cost / k;
  return cs;
}

}  // namespace gateshare
