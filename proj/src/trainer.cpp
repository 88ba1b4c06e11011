#include "gateshare/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>

#include "gateshare/error.hpp"
#include "gateshare/serialize.hpp"

namespace gateshare {

void TrainConfig::validate() const {
  if (max_epochs < warm_up_epochs)
    throw ConfigError("train config: max_epochs must cover warm_up_epochs");
  if (e1 < 1 || e2 < 1) throw ConfigError("train config: e1 and e2 must be >= 1");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (retrain_epochs < 1)
    throw ConfigError("train config: retrain_epochs must be >= 1");
  if (!(lr_network > 0.0) || !(lr_policy > 0.0) || !(lr_gates > 0.0))
    throw ConfigError("train config: learning rates must be > 0");
  if (lr_halve_period < 1)
    throw ConfigError("train config: lr_halve_period must be >= 1");
  if (!(tau_initial > 0.0) || !(tau_floor > 0.0))
    throw ConfigError("train config: temperatures must be > 0");
  if (!(tau_decay > 0.0) || tau_decay > 1.0)
    throw ConfigError("train config: tau_decay must lie in (0,1]");
  if (!(target_rate > 0.0) || target_rate > 1.0)
    throw ConfigError("train config: target_rate must lie in (0,1]");
  if (num_sampled_plans < 1)
    throw ConfigError("train config: num_sampled_plans must be >= 1");
}

double step_lr(std::size_t epoch, double base_lr, std::size_t halve_period) {
  if (halve_period == 0) throw ConfigError("step_lr: period must be >= 1");
  const auto halvings = static_cast<double>(epoch / halve_period);
  return base_lr * std::pow(0.5, halvings);
}

namespace {

Tensor batch_features(const Dataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<double> x(idx.size() * ds.d);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(ds.x.begin() + static_cast<long>(idx[i] * ds.d), ds.d,
                x.begin() + static_cast<long>(i * ds.d));
  return Tensor::from_data({idx.size(), ds.d}, std::move(x));
}

std::vector<double> batch_labels(const TaskColumn& task,
                                 const std::vector<std::size_t>& idx) {
  std::vector<double> y(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) y[i] = task.y[idx[i]];
  return y;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, SeededRng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

void guard_finite(double value, const std::string& where) {
  if (!std::isfinite(value))
    throw NumericsError("total loss diverged (" + where + "): " +
                        std::to_string(value));
}

nlohmann::json params_record(Backbone& b) {
  nlohmann::json rec = nlohmann::json::object();
  for (const auto& [name, t] : b.named_params())
    rec[name] = tensor_record(t.shape(), t.data());
  return rec;
}

void params_restore(Backbone& b, const nlohmann::json& rec) {
  for (auto& [name, t] : b.named_params()) {
    if (!rec.contains(name))
      throw ConfigError("checkpoint: missing parameter '" + name + "'");
    Shape shape;
    std::vector<double> data;
    read_tensor_record(rec.at(name), shape, data);
    if (shape != t.shape())
      throw ConfigError("checkpoint: shape mismatch for '" + name + "'");
    t.mutable_data() = std::move(data);
  }
}

nlohmann::json metrics_record(const std::vector<std::vector<MetricValue>>& m) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& task : m) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& mv : task)
      row.push_back({{"name", mv.spec.name},
                     {"lower", mv.spec.lower_better},
                     {"value", mv.value},
                     {"defined", mv.defined}});
    out.push_back(std::move(row));
  }
  return out;
}

std::vector<std::vector<MetricValue>> metrics_restore(const nlohmann::json& j) {
  std::vector<std::vector<MetricValue>> out;
  for (const auto& row : j) {
    std::vector<MetricValue> task;
    for (const auto& mv : row)
      task.push_back({{mv.at("name").get<std::string>(), mv.at("lower").get<bool>()},
                      mv.at("value").get<double>(),
                      mv.at("defined").get<bool>()});
    out.push_back(std::move(task));
  }
  return out;
}

nlohmann::json log_record(const std::vector<EpochLogRow>& log) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : log) {
    nlohmann::json vm = nlohmann::json::array();
    for (const auto& [name, v] : r.val_metrics) vm.push_back({{"n", name}, {"v", v}});
    out.push_back({{"epoch", r.epoch},
                   {"phase", r.phase},
                   {"tau", r.tau},
                   {"lr", r.lr},
                   {"loss_total", r.loss_total},
                   {"loss_task", r.loss_task},
                   {"loss_sparsity", r.loss_sparsity},
                   {"loss_sharing", r.loss_sharing},
                   {"loss_instance", r.loss_instance},
                   {"val_metrics", vm},
                   {"beta_hat", r.beta_hat}});
  }
  return out;
}

std::vector<EpochLogRow> log_restore(const nlohmann::json& j) {
  std::vector<EpochLogRow> out;
  for (const auto& e : j) {
    EpochLogRow r;
    r.epoch = e.at("epoch").get<std::size_t>();
    r.phase = e.at("phase").get<std::string>();
    r.tau = e.at("tau").get<double>();
    r.lr = e.at("lr").get<double>();
    r.loss_total = e.at("loss_total").get<double>();
    r.loss_task = e.at("loss_task").get<std::vector<double>>();
    r.loss_sparsity = e.at("loss_sparsity").get<double>();
    r.loss_sharing = e.at("loss_sharing").get<double>();
    r.loss_instance = e.at("loss_instance").get<double>();
    for (const auto& vm : e.at("val_metrics"))
      r.val_metrics.emplace_back(vm.at("n").get<std::string>(),
                                 vm.at("v").get<double>());
    r.beta_hat = e.at("beta_hat").get<std::vector<double>>();
    out.push_back(std::move(r));
  }
  return out;
}

void append_val_metrics(EpochLogRow& row,
                        const std::vector<std::vector<MetricValue>>& per_task) {
  for (std::size_t k = 0; k < per_task.size(); ++k)
    for (const auto& mv : per_task[k])
      if (mv.defined)
        row.val_metrics.emplace_back(
            "task" + std::to_string(k) + "_" + mv.spec.name, mv.value);
}

}  // namespace

void write_metrics_csv(const std::vector<EpochLogRow>& rows,
                       std::size_t num_blocks, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write metrics csv: " + path);
  out.precision(17);
  out << "epoch,phase,tau,lr,loss_total,loss_sparsity,loss_sharing,loss_instance";
  const std::size_t num_tasks = rows.empty() ? 0 : rows.front().loss_task.size();
  for (std::size_t k = 0; k < num_tasks; ++k) out << ",loss_task" << k;
  if (!rows.empty())
    for (const auto& [name, _] : rows.front().val_metrics) out << "," << name;
  for (std::size_t l = 0; l < num_blocks; ++l) out << ",beta" << l;
  out << "\n";
  for (const auto& r : rows) {
    out << r.epoch << "," << r.phase << "," << r.tau << "," << r.lr << ","
        << r.loss_total << "," << r.loss_sparsity << "," << r.loss_sharing << ","
        << r.loss_instance;
    for (std::size_t k = 0; k < num_tasks; ++k)
      out << "," << (k < r.loss_task.size() ? r.loss_task[k] : 0.0);
    if (!rows.empty()) {
      for (const auto& [name, _] : rows.front().val_metrics) {
        double v = 0.0;
        for (const auto& [n2, v2] : r.val_metrics)
          if (n2 == name) {
            v = v2;
            break;
          }
        out << "," << v;
      }
    }
    for (std::size_t l = 0; l < num_blocks; ++l)
      out << "," << (l < r.beta_hat.size() ? r.beta_hat[l] : -1.0);
    out << "\n";
  }
}

EvalOutcome evaluate_plans(Backbone& backbone,
                           const std::vector<ExecutionPlan>& plans,
                           const Dataset& split, const EvalOptions& opts) {
  const BackboneSpec& spec = backbone.spec();
  if (plans.size() != spec.num_tasks)
    throw ConfigError("evaluate_plans: need one plan per task");
  EvalOutcome out;
  out.per_task.resize(spec.num_tasks);
  std::vector<double> alpha_sum(spec.num_blocks, 0.0);
  std::vector<double> thresh_sum(spec.num_blocks, 0.0);
  std::vector<std::size_t> evaluated(spec.num_blocks, 0);

  std::vector<std::vector<double>> predictions(spec.num_tasks);
  std::vector<std::size_t> widths(spec.num_tasks, 1);

  const std::size_t chunk = 512;
  for (std::size_t start = 0; start < split.n; start += chunk) {
    const std::size_t stop = std::min(split.n, start + chunk);
    std::vector<std::size_t> idx(stop - start);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    const Tensor x = batch_features(split, idx);
    for (std::size_t k = 0; k < spec.num_tasks; ++k) {
      ForwardOptions fo;
      fo.mode = ForwardMode::EvalHard;
      fo.plan = &plans[k];
      fo.gates_active = opts.gates_active;
      fo.stochastic_eval_gates = opts.stochastic_gates;
      fo.rng = opts.rng;
      TaskForwardResult res = backbone.forward_task(x, k, fo);
      widths[k] = res.output.shape().size() == 2 ? res.output.shape()[1] : 1;
      const auto& d = res.output.data();
      predictions[k].insert(predictions[k].end(), d.begin(), d.end());
      for (const auto& rec : res.gates) {
        if (!rec.evaluated) continue;
        evaluated[rec.block] += rec.alpha.size();
        for (double a : rec.alpha) {
          alpha_sum[rec.block] += a;
          if (a > 0.5) thresh_sum[rec.block] += 1.0;
        }
      }
    }
  }

  for (std::size_t k = 0; k < spec.num_tasks; ++k)
    out.per_task[k] = task_metrics(predictions[k], widths[k], split.tasks[k].y,
                                   split.tasks[k].kind);
  out.threshold_rate.assign(spec.num_blocks, -1.0);
  out.mean_alpha.assign(spec.num_blocks, -1.0);
  for (std::size_t l = 0; l < spec.num_blocks; ++l) {
    if (evaluated[l] == 0) continue;
    out.threshold_rate[l] = thresh_sum[l] / static_cast<double>(evaluated[l]);
    out.mean_alpha[l] = alpha_sum[l] / static_cast<double>(evaluated[l]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Algorithm: warm-up + alternating optimization
// ---------------------------------------------------------------------------

AlternatingTrainer::AlternatingTrainer(const TrainConfig& cfg,
                                       const LossWeights& weights,
                                       const MultiTaskData& data,
                                       Backbone& backbone,
                                       PolicyDistribution& policy)
    : cfg_(cfg),
      weights_(weights),
      data_(data),
      backbone_(backbone),
      policy_(policy),
      net_opt_(backbone.network_params(), cfg.lr_network, cfg.sgd_momentum),
      policy_opt_(policy.logit_params(), cfg.lr_policy, cfg.adam_beta1,
                  cfg.adam_beta2, cfg.adam_eps),
      data_rng_(SeededRng(cfg.seed).derive(11)),
      noise_rng_(SeededRng(cfg.seed).derive(12)),
      schedule_(TemperatureSchedule::make(cfg.tau_initial, cfg.tau_decay,
                                          cfg.tau_floor, cfg.tau_trigger)) {
  cfg_.validate();
  weights_.validate(data.train.num_tasks());
  if (backbone.spec().num_tasks != data.train.num_tasks())
    throw ConfigError("trainer: backbone task count does not match dataset");
  const std::size_t policy_epochs = cfg_.max_epochs - cfg_.warm_up_epochs;
  cadence_ = cfg_.curriculum_cadence
                 ? cfg_.curriculum_cadence
                 : std::max<std::size_t>(
                       1, policy_epochs / (policy_.max_frontier() + 1));
}

Phase AlternatingTrainer::current_phase() const {
  if (epoch_ < cfg_.warm_up_epochs) return Phase::WarmUp;
  const std::size_t pos = (epoch_ - cfg_.warm_up_epochs) % (cfg_.e1 + cfg_.e2);
  return pos < cfg_.e1 ? Phase::NetworkStep : Phase::PolicyStep;
}

std::vector<ExecutionPlan> AlternatingTrainer::threshold_plans() const {
  std::vector<ExecutionPlan> plans;
  for (std::size_t k = 0; k < policy_.num_tasks(); ++k) {
    ExecutionPlan p;
    p.task = k;
    p.execute.resize(policy_.num_blocks());
    for (std::size_t l = 0; l < policy_.num_blocks(); ++l)
      p.execute[l] = policy_.alpha(l, k) > 0.5 ? 1 : 0;
    plans.push_back(std::move(p));
  }
  return plans;
}

void AlternatingTrainer::train_batch(Phase phase,
                                     const std::vector<std::size_t>& batch,
                                     EpochLogRow& row, std::size_t batches) {
  const Dataset& train = data_.train;
  const Tensor x = batch_features(train, batch);
  const std::size_t K = train.num_tasks();
  std::vector<Tensor> task_losses(K);

  if (phase == Phase::WarmUp) {
    auto results = backbone_.forward_all_shared(x);
    for (std::size_t k = 0; k < K; ++k)
      task_losses[k] = task_loss(results[k].output, batch_labels(train.tasks[k], batch),
                                 train.tasks[k].kind, train.tasks[k].classes);
  } else if (phase == Phase::NetworkStep &&
             !cfg_.relaxed_weights_in_network_epochs) {
    // Optional hard-path variant: discrete per-batch plans, no gates.
    const auto plans = sample_plan(policy_, noise_rng_);
    for (std::size_t k = 0; k < K; ++k) {
      ForwardOptions fo;
      fo.mode = ForwardMode::EvalHard;
      fo.plan = &plans[k];
      fo.gates_active = false;
      TaskForwardResult res = backbone_.forward_task(x, k, fo);
      task_losses[k] = task_loss(res.output, batch_labels(train.tasks[k], batch),
                                 train.tasks[k].kind, train.tasks[k].classes);
    }
  } else {
    // Fresh relaxed policy sample per mini-batch; gates stay open.
    const PolicyWeightSet pw =
        relaxed_policy_weights(policy_, schedule_.tau, noise_rng_);
    for (std::size_t k = 0; k < K; ++k) {
      const std::vector<Tensor> wk = pw.weights_for_task(k);
      ForwardOptions fo;
      fo.mode = ForwardMode::PolicyRelaxed;
      fo.policy_weights = &wk;
      TaskForwardResult res = backbone_.forward_task(x, k, fo);
      task_losses[k] = task_loss(res.output, batch_labels(train.tasks[k], batch),
                                 train.tasks[k].kind, train.tasks[k].classes);
    }
  }

  std::optional<Tensor> sparsity, sharing;
  if (phase == Phase::PolicyStep) {
    const AlphaView view = policy_.alpha_view();
    sparsity = sparsity_loss(view);
    sharing = sharing_loss(view, weights_.ordered_pairs);
  }
  const Tensor total =
      total_loss(task_losses, sparsity, sharing, std::nullopt, weights_, phase);
  guard_finite(total.value(), "epoch " + std::to_string(epoch_));

  total.backward();
  if (phase == Phase::PolicyStep) {
    policy_opt_.step();
    policy_.clamp_logits(cfg_.policy_logit_clamp);
  } else {
    net_opt_.step();
  }
  net_opt_.zero_grad();
  policy_opt_.zero_grad();

  const double inv = 1.0 / static_cast<double>(batches);
  row.loss_total += total.value() * inv;
  for (std::size_t k = 0; k < K; ++k)
    row.loss_task[k] += task_losses[k].value() * inv;
  if (sparsity.has_value()) row.loss_sparsity += sparsity->value() * inv;
  if (sharing.has_value()) row.loss_sharing += sharing->value() * inv;
}

void AlternatingTrainer::run_epoch() {
  if (done()) return;
  const Phase phase = current_phase();
  if (epoch_ >= cfg_.warm_up_epochs)
    advance_curriculum(policy_, epoch_ - cfg_.warm_up_epochs, cadence_);
  net_opt_.set_lr(step_lr(epoch_, cfg_.lr_network, cfg_.lr_halve_period));

  EpochLogRow row;
  row.epoch = epoch_;
  row.phase = phase == Phase::WarmUp     ? "warmup"
              : phase == Phase::NetworkStep ? "network"
                                            : "policy";
  row.tau = schedule_.tau;
  row.lr = net_opt_.lr();
  row.loss_task.assign(data_.train.num_tasks(), 0.0);
  row.beta_hat.assign(backbone_.spec().num_blocks, -1.0);

  const auto idx = shuffled_indices(data_.train.n, data_rng_);
  const std::size_t batches =
      (data_.train.n + cfg_.batch_size - 1) / cfg_.batch_size;
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t lo = b * cfg_.batch_size;
    const std::size_t hi = std::min(data_.train.n, lo + cfg_.batch_size);
    std::vector<std::size_t> batch(idx.begin() + static_cast<long>(lo),
                                   idx.begin() + static_cast<long>(hi));
    train_batch(phase, batch, row, batches);
  }

  // Deterministic validation snapshot: thresholded policy, gates inactive.
  const auto plans = threshold_plans();
  EvalOptions eo;
  eo.gates_active = false;
  const EvalOutcome eval = evaluate_plans(backbone_, plans, data_.val, eo);
  append_val_metrics(row, eval.per_task);

  if (epoch_ + 1 == cfg_.warm_up_epochs) warmup_baseline_ = eval.per_task;

  if (epoch_ >= cfg_.warm_up_epochs) {
    bool fired = false;
    if (schedule_.trigger == DecayTrigger::EveryEpoch) {
      fired = true;
    } else if (!warmup_baseline_.empty()) {
      // Baseline performance is met when the delta against the recorded
      // hard-sharing snapshot is non-negative.
      std::vector<double> deltas;
      for (std::size_t k = 0; k < eval.per_task.size(); ++k)
        deltas.push_back(delta_task(eval.per_task[k], warmup_baseline_[k]));
      fired = delta_overall(deltas) >= 0.0;
    }
    schedule_.step(fired);
  }

  log_.push_back(std::move(row));
  ++epoch_;
}

void AlternatingTrainer::run_all() {
  while (!done()) run_epoch();
}

nlohmann::json AlternatingTrainer::checkpoint() const {
  nlohmann::json j;
  j["epoch"] = epoch_;
  j["tau"] = schedule_.tau;
  j["cadence"] = cadence_;
  j["backbone"] = params_record(backbone_);
  j["policy"] = policy_.to_json();
  j["net_opt"] = net_opt_.state_to_json();
  j["policy_opt"] = policy_opt_.state_to_json();
  j["data_rng"] = data_rng_.save_state();
  j["noise_rng"] = noise_rng_.save_state();
  j["warmup_baseline"] = metrics_record(warmup_baseline_);
  j["log"] = log_record(log_);
  return j;
}

void AlternatingTrainer::restore(const nlohmann::json& j) {
  epoch_ = j.at("epoch").get<std::size_t>();
  schedule_.tau = j.at("tau").get<double>();
  cadence_ = j.at("cadence").get<std::size_t>();
  params_restore(backbone_, j.at("backbone"));
  const auto& pol = j.at("policy");
  policy_.set_frontier(pol.at("frontier").get<std::size_t>());
  const auto& rows = pol.at("logits");
  for (std::size_t l = 0; l < policy_.num_blocks(); ++l)
    for (std::size_t k = 0; k < policy_.num_tasks(); ++k) {
      Shape shape;
      std::vector<double> data;
      read_tensor_record(rows.at(l).at(k), shape, data);
      policy_.logits(l, k).mutable_data() = std::move(data);
    }
  net_opt_.state_from_json(j.at("net_opt"));
  policy_opt_.state_from_json(j.at("policy_opt"));
  data_rng_.load_state(j.at("data_rng").get<std::string>());
  noise_rng_.load_state(j.at("noise_rng").get<std::string>());
  warmup_baseline_ = metrics_restore(j.at("warmup_baseline"));
  log_ = log_restore(j.at("log"));
}

// ---------------------------------------------------------------------------
// Retraining with instance gates at a target rate
// ---------------------------------------------------------------------------

RetrainTrainer::RetrainTrainer(const TrainConfig& cfg, const LossWeights& weights,
                               const MultiTaskData& data, Backbone& backbone,
                               std::vector<ExecutionPlan> plans,
                               std::uint64_t stream_salt)
    : cfg_(cfg),
      weights_(weights),
      data_(data),
      backbone_(backbone),
      plans_(std::move(plans)),
      net_opt_(backbone.network_params(), cfg.lr_network, cfg.sgd_momentum),
      gate_opt_(backbone.gate_params(), cfg.lr_gates, cfg.sgd_momentum),
      data_rng_(SeededRng(cfg.seed).derive(9000 + stream_salt * 2)),
      noise_rng_(SeededRng(cfg.seed).derive(9001 + stream_salt * 2)) {
  cfg_.validate();
  weights_.validate(data.train.num_tasks());
  if (plans_.size() != backbone.spec().num_tasks)
    throw ConfigError("retrain: need one plan per task");
  hard_rates_.assign(backbone.spec().num_blocks, -1.0);
}

void RetrainTrainer::run_epoch() {
  if (done()) return;
  const Dataset& train = data_.train;
  const std::size_t K = train.num_tasks();
  const std::size_t L = backbone_.spec().num_blocks;

  net_opt_.set_lr(step_lr(epoch_, cfg_.lr_network, cfg_.lr_halve_period));
  gate_opt_.set_lr(step_lr(epoch_, cfg_.lr_gates, cfg_.lr_halve_period));

  EpochLogRow row;
  row.epoch = epoch_;
  row.phase = "retrain";
  row.tau = cfg_.tau_retrain;
  row.lr = net_opt_.lr();
  row.loss_task.assign(K, 0.0);

  std::vector<double> exec_count(L, 0.0);
  std::vector<std::size_t> seen_count(L, 0);

  const auto idx = shuffled_indices(train.n, data_rng_);
  const std::size_t batches = (train.n + cfg_.batch_size - 1) / cfg_.batch_size;
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t lo = b * cfg_.batch_size;
    const std::size_t hi = std::min(train.n, lo + cfg_.batch_size);
    std::vector<std::size_t> batch(idx.begin() + static_cast<long>(lo),
                                   idx.begin() + static_cast<long>(hi));
    const Tensor x = batch_features(train, batch);

    std::vector<Tensor> task_losses(K);
    std::vector<std::vector<Tensor>> block_betas(L);
    for (std::size_t k = 0; k < K; ++k) {
      ForwardOptions fo;
      fo.mode = ForwardMode::RetrainST;
      fo.plan = &plans_[k];
      fo.tau = cfg_.tau_retrain;
      fo.rng = &noise_rng_;
      TaskForwardResult res = backbone_.forward_task(x, k, fo);
      task_losses[k] = task_loss(res.output, batch_labels(train.tasks[k], batch),
                                 train.tasks[k].kind, train.tasks[k].classes);
      for (const auto& rec : res.gates) {
        if (!rec.evaluated) continue;
        block_betas[rec.block].push_back(rec.beta);
        seen_count[rec.block] += rec.w_hard.size();
        for (int w : rec.w_hard) exec_count[rec.block] += w;
      }
    }

    // beta_l: relaxed execute probability averaged over the mini-batch and
    // over the tasks that executed the block.
    std::vector<Tensor> betas;
    for (std::size_t l = 0; l < L; ++l) {
      if (block_betas[l].empty()) continue;
      Tensor acc = block_betas[l][0];
      for (std::size_t i = 1; i < block_betas[l].size(); ++i)
        acc = add(acc, block_betas[l][i]);
      betas.push_back(scale(acc, 1.0 / static_cast<double>(block_betas[l].size())));
    }
    std::optional<Tensor> inst;
    if (!betas.empty()) inst = instance_loss(betas, weights_.target_rate);

    const Tensor total = total_loss(task_losses, std::nullopt, std::nullopt, inst,
                                    weights_, Phase::Retrain);
    guard_finite(total.value(), "retrain epoch " + std::to_string(epoch_));
    total.backward();
    net_opt_.step();
    gate_opt_.step();
    net_opt_.zero_grad();
    gate_opt_.zero_grad();

    const double inv = 1.0 / static_cast<double>(batches);
    row.loss_total += total.value() * inv;
    for (std::size_t k = 0; k < K; ++k)
      row.loss_task[k] += task_losses[k].value() * inv;
    if (inst.has_value()) row.loss_instance += inst->value() * inv;
  }

  hard_rates_.assign(L, -1.0);
  for (std::size_t l = 0; l < L; ++l)
    if (seen_count[l] > 0)
      hard_rates_[l] = exec_count[l] / static_cast<double>(seen_count[l]);
  row.beta_hat = hard_rates_;

  const EvalOutcome eval = evaluate_plans(backbone_, plans_, data_.val, {});
  append_val_metrics(row, eval.per_task);

  log_.push_back(std::move(row));
  ++epoch_;
}

void RetrainTrainer::run_all() {
  while (!done()) run_epoch();
}

nlohmann::json RetrainTrainer::checkpoint() const {
  nlohmann::json j;
  j["epoch"] = epoch_;
  j["backbone"] = params_record(backbone_);
  j["plans"] = plans_to_json(plans_);
  j["net_opt"] = net_opt_.state_to_json();
  j["gate_opt"] = gate_opt_.state_to_json();
  j["data_rng"] = data_rng_.save_state();
  j["noise_rng"] = noise_rng_.save_state();
  j["hard_rates"] = hard_rates_;
  j["log"] = log_record(log_);
  return j;
}

void RetrainTrainer::restore(const nlohmann::json& j) {
  epoch_ = j.at("epoch").get<std::size_t>();
  params_restore(backbone_, j.at("backbone"));
  plans_ = plans_from_json(j.at("plans"));
  net_opt_.state_from_json(j.at("net_opt"));
  gate_opt_.state_from_json(j.at("gate_opt"));
  data_rng_.load_state(j.at("data_rng").get<std::string>());
  noise_rng_.load_state(j.at("noise_rng").get<std::string>());
  hard_rates_ = j.at("hard_rates").get<std::vector<double>>();
  log_ = log_restore(j.at("log"));
}

// ---------------------------------------------------------------------------
// High-level entry points
// ---------------------------------------------------------------------------

TrainOutcome train(const TrainConfig& cfg, const LossWeights& weights,
                   const MultiTaskData& data, Backbone& backbone,
                   PolicyDistribution& policy) {
  AlternatingTrainer t(cfg, weights, data, backbone, policy);
  t.run_all();
  return {t.log(), t.tau()};
}

RetrainOutcome retrain(const TrainConfig& cfg, const LossWeights& weights,
                       const MultiTaskData& data, const Backbone& trained,
                       const std::vector<ExecutionPlan>& plans,
                       const SingleTaskReference* refs, std::uint64_t stream_salt) {
  RetrainOutcome out;
  out.model = trained.clone();
  if (cfg.retrain_from_scratch) {
    SeededRng net_rng = SeededRng(cfg.seed).derive(8000 + stream_salt);
    out.model.init_network(net_rng);
  }
  SeededRng gate_rng = SeededRng(cfg.seed).derive(7000 + stream_salt);
  out.model.init_gates(gate_rng);
  out.plans = plans;

  RetrainTrainer rt(cfg, weights, data, out.model, plans, stream_salt);
  rt.run_all();
  out.log = rt.log();
  out.train_hard_rates = rt.last_epoch_hard_rates();

  EvalOptions eo;
  eo.gates_active = true;
  out.val_eval = evaluate_plans(out.model, out.plans, data.val, eo);
  if (refs != nullptr) {
    std::vector<double> deltas;
    for (std::size_t k = 0; k < out.val_eval.per_task.size(); ++k)
      deltas.push_back(delta_task(out.val_eval.per_task[k], refs->per_task.at(k)));
    out.val_delta = delta_overall(deltas);
  }
  std::vector<double> rates(out.model.spec().num_blocks, 1.0);
  for (std::size_t l = 0; l < rates.size(); ++l)
    if (out.val_eval.mean_alpha[l] >= 0.0) rates[l] = out.val_eval.mean_alpha[l];
  out.cost = count_cost(out.model.spec(), out.plans, rates);
  return out;
}

SelectionResult select_best(const TrainConfig& cfg, const LossWeights& weights,
                            const MultiTaskData& data, const Backbone& trained,
                            const PolicyDistribution& policy,
                            const SingleTaskReference& refs, std::size_t workers,
                            std::function<double(const RetrainOutcome&)> scorer) {
  SeededRng plan_rng = SeededRng(cfg.seed).derive(3000);
  std::vector<std::vector<ExecutionPlan>> sampled;
  for (std::size_t i = 0; i < cfg.num_sampled_plans; ++i)
    sampled.push_back(sample_plan(policy, plan_rng));

  std::vector<RetrainOutcome> outcomes(sampled.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < sampled.size(); ++i)
      outcomes[i] = retrain(cfg, weights, data, trained, sampled[i], &refs, i);
  } else {
    // Each retrain owns a cloned model and derived rng streams, so they can
    // run as independent workers; results land by index.
    std::vector<std::future<RetrainOutcome>> futs(sampled.size());
    std::size_t next = 0;
    std::size_t active_lo = 0;
    while (next < sampled.size()) {
      const std::size_t launch =
          std::min(workers, sampled.size() - next);
      for (std::size_t i = 0; i < launch; ++i, ++next) {
        const std::size_t job = next;
        futs[job] = std::async(std::launch::async, [&, job] {
          return retrain(cfg, weights, data, trained, sampled[job], &refs, job);
        });
      }
      for (; active_lo < next; ++active_lo)
        outcomes[active_lo] = futs[active_lo].get();
    }
  }

  if (!scorer) scorer = [](const RetrainOutcome& o) { return o.val_delta; };
  SelectionResult sel;
  sel.scores.resize(outcomes.size());
  for (std::size_t i = 0; i < outcomes.size(); ++i)
    sel.scores[i] = scorer(outcomes[i]);
  std::size_t best = 0;
  for (std::size_t i = 1; i < outcomes.size(); ++i) {
    const double s = sel.scores[i], sb = sel.scores[best];
    if (s > sb + 1e-12) {
      best = i;
    } else if (std::fabs(s - sb) <= 1e-12 &&
               outcomes[i].cost.expected_flops <
                   outcomes[best].cost.expected_flops) {
      best = i;  // delta tie: prefer the cheaper architecture
    }
  }
  sel.best_index = best;
  sel.best = std::move(outcomes[best]);
  return sel;
}

SingleTaskOutcome train_single_task(const TrainConfig& cfg,
                                    const LossWeights& weights,
                                    const MultiTaskData& data,
                                    const BackboneSpec& base_spec,
                                    std::size_t task) {
  BackboneSpec spec = base_spec;
  spec.gate_enable.assign(spec.num_blocks, false);  // ungated reference model
  Backbone model(spec);
  SeededRng init_rng = SeededRng(cfg.seed).derive(500 + task);
  model.init_network(init_rng);

  SgdMomentum opt(model.network_params(), cfg.lr_network, cfg.sgd_momentum);
  SeededRng data_rng = SeededRng(cfg.seed).derive(600 + task);
  const Dataset& train = data.train;
  const std::size_t epochs = cfg.effective_single_task_epochs();
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    opt.set_lr(step_lr(epoch, cfg.lr_network, cfg.lr_halve_period));
    const auto idx = shuffled_indices(train.n, data_rng);
    const std::size_t batches = (train.n + cfg.batch_size - 1) / cfg.batch_size;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(train.n, lo + cfg.batch_size);
      std::vector<std::size_t> batch(idx.begin() + static_cast<long>(lo),
                                     idx.begin() + static_cast<long>(hi));
      const Tensor x = batch_features(train, batch);
      auto results = model.forward_all_shared(x);
      const Tensor loss =
          task_loss(results[task].output, batch_labels(train.tasks[task], batch),
                    train.tasks[task].kind, train.tasks[task].classes);
      guard_finite(loss.value(), "single-task epoch " + std::to_string(epoch));
      loss.backward();
      opt.step();
      opt.zero_grad();
    }
  }
  (void)weights;

  SingleTaskOutcome out;
  auto eval_split = [&](const Dataset& split) {
    std::vector<double> preds;
    std::size_t width = 1;
    const std::size_t chunk = 512;
    for (std::size_t start = 0; start < split.n; start += chunk) {
      const std::size_t stop = std::min(split.n, start + chunk);
      std::vector<std::size_t> idx2(stop - start);
      for (std::size_t i = 0; i < idx2.size(); ++i) idx2[i] = start + i;
      const Tensor x = batch_features(split, idx2);
      auto results = model.forward_all_shared(x);
      width = results[task].output.shape().size() == 2
                  ? results[task].output.shape()[1]
                  : 1;
      const auto& d = results[task].output.data();
      preds.insert(preds.end(), d.begin(), d.end());
    }
    return task_metrics(preds, width, split.tasks[task].y, split.tasks[task].kind);
  };
  out.val_metrics = eval_split(data.val);
  out.test_metrics = eval_split(data.test);
  return out;
}

}  // namespace gateshare
