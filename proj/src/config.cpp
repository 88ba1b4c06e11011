#include "gateshare/config.hpp"

#include <fstream>
#include <set>

#include "gateshare/error.hpp"
#include "gateshare/serialize.hpp"

namespace gateshare {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& section) {
  if (!j.is_object())
    throw ConfigError("config: section '" + section + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (allowed.find(it.key()) == allowed.end())
      throw ConfigError("config: unknown key '" + it.key() + "' in section '" +
                        section + "'");
}

DecayTrigger trigger_from_string(const std::string& s) {
  if (s == "every_epoch") return DecayTrigger::EveryEpoch;
  if (s == "on_metric_met") return DecayTrigger::OnMetricMet;
  throw ConfigError("config: unknown tau_trigger '" + s + "'");
}

std::string trigger_to_string(DecayTrigger t) {
  return t == DecayTrigger::EveryEpoch ? "every_epoch" : "on_metric_met";
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  check_keys(j, {"seed", "output_dir", "dataset", "backbone", "train", "losses"},
             "<root>");
  ExperimentConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.output_dir = j.value("output_dir", cfg.output_dir);

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    check_keys(d, {"synthetic", "csv"}, "dataset");
    if (d.contains("synthetic") && d.contains("csv"))
      throw ConfigError("config: dataset must be either synthetic or csv");
    if (d.contains("csv")) {
      cfg.use_synthetic = false;
      cfg.csv_path = d.at("csv").get<std::string>();
    } else if (d.contains("synthetic")) {
      cfg.use_synthetic = true;
      cfg.synth = SynthTaskSpec::from_json(d.at("synthetic"));
    }
  }

  if (j.contains("backbone")) {
    const auto& b = j.at("backbone");
    check_keys(b,
               {"feature_dim", "num_blocks", "hidden_widths", "gate_enable",
                "always_on", "gate_last", "always_on_first", "gate_hidden"},
               "backbone");
    cfg.feature_dim = b.value("feature_dim", cfg.feature_dim);
    cfg.num_blocks = b.value("num_blocks", cfg.num_blocks);
    cfg.hidden_widths = b.value("hidden_widths", cfg.hidden_widths);
    cfg.gate_hidden = b.value("gate_hidden", cfg.gate_hidden);
    if (b.contains("gate_enable"))
      cfg.gate_enable = b.at("gate_enable").get<std::vector<bool>>();
    if (b.contains("always_on"))
      cfg.always_on = b.at("always_on").get<std::vector<bool>>();
    if (b.contains("gate_last")) {
      const auto n = b.at("gate_last").get<std::size_t>();
      if (n > cfg.num_blocks)
        throw ConfigError("config: gate_last exceeds num_blocks");
      cfg.gate_enable.assign(cfg.num_blocks, false);
      for (std::size_t l = cfg.num_blocks - n; l < cfg.num_blocks; ++l)
        cfg.gate_enable[l] = true;
    }
    if (b.contains("always_on_first")) {
      const auto n = b.at("always_on_first").get<std::size_t>();
      if (n > cfg.num_blocks)
        throw ConfigError("config: always_on_first exceeds num_blocks");
      cfg.always_on.assign(cfg.num_blocks, false);
      for (std::size_t l = 0; l < n; ++l) cfg.always_on[l] = true;
    }
  }
  if (cfg.gate_enable.empty()) {
    cfg.gate_enable.assign(cfg.num_blocks, false);
    for (std::size_t l = cfg.num_blocks / 2; l < cfg.num_blocks; ++l)
      cfg.gate_enable[l] = true;
  }
  if (cfg.always_on.empty()) {
    cfg.always_on.assign(cfg.num_blocks, false);
    for (std::size_t l = 0; l < cfg.num_blocks / 2; ++l) cfg.always_on[l] = true;
  }
  if (cfg.gate_enable.size() != cfg.num_blocks ||
      cfg.always_on.size() != cfg.num_blocks)
    throw ConfigError("config: gate_enable/always_on must match num_blocks");

  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t,
               {"warm_up_epochs", "e1", "e2", "max_epochs", "retrain_epochs",
                "single_task_epochs", "batch_size", "lr_network", "lr_policy",
                "lr_gates", "lr_halve_period", "tau_initial", "tau_decay",
                "tau_floor", "tau_trigger", "tau_retrain", "target_rate",
                "num_sampled_plans", "curriculum_cadence",
                "relaxed_weights_in_network_epochs", "retrain_from_scratch",
                "stochastic_eval_gates", "sgd_momentum", "adam_beta1",
                "adam_beta2", "adam_eps", "policy_logit_clamp"},
               "train");
    TrainConfig& c = cfg.train;
    c.warm_up_epochs = t.value("warm_up_epochs", c.warm_up_epochs);
    c.e1 = t.value("e1", c.e1);
    c.e2 = t.value("e2", c.e2);
    c.max_epochs = t.value("max_epochs", c.max_epochs);
    c.retrain_epochs = t.value("retrain_epochs", c.retrain_epochs);
    c.single_task_epochs = t.value("single_task_epochs", c.single_task_epochs);
    c.batch_size = t.value("batch_size", c.batch_size);
    c.lr_network = t.value("lr_network", c.lr_network);
    c.lr_policy = t.value("lr_policy", c.lr_policy);
    c.lr_gates = t.value("lr_gates", c.lr_gates);
    c.lr_halve_period = t.value("lr_halve_period", c.lr_halve_period);
    c.tau_initial = t.value("tau_initial", c.tau_initial);
    c.tau_decay = t.value("tau_decay", c.tau_decay);
    c.tau_floor = t.value("tau_floor", c.tau_floor);
    if (t.contains("tau_trigger"))
      c.tau_trigger = trigger_from_string(t.at("tau_trigger").get<std::string>());
    c.tau_retrain = t.value("tau_retrain", c.tau_retrain);
    c.target_rate = t.value("target_rate", c.target_rate);
    c.num_sampled_plans = t.value("num_sampled_plans", c.num_sampled_plans);
    c.curriculum_cadence = t.value("curriculum_cadence", c.curriculum_cadence);
    c.relaxed_weights_in_network_epochs =
        t.value("relaxed_weights_in_network_epochs",
                c.relaxed_weights_in_network_epochs);
    c.retrain_from_scratch = t.value("retrain_from_scratch", c.retrain_from_scratch);
    c.stochastic_eval_gates =
        t.value("stochastic_eval_gates", c.stochastic_eval_gates);
    c.sgd_momentum = t.value("sgd_momentum", c.sgd_momentum);
    c.adam_beta1 = t.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = t.value("adam_beta2", c.adam_beta2);
    c.adam_eps = t.value("adam_eps", c.adam_eps);
    c.policy_logit_clamp = t.value("policy_logit_clamp", c.policy_logit_clamp);
  }
  cfg.train.seed = cfg.seed;

  if (j.contains("losses")) {
    const auto& w = j.at("losses");
    check_keys(w,
               {"lambda_task", "lambda_sparsity", "lambda_sharing",
                "lambda_instance", "ordered_pairs"},
               "losses");
    cfg.losses.lambda_task =
        w.value("lambda_task", cfg.losses.lambda_task);
    cfg.losses.lambda_sparsity = w.value("lambda_sparsity", cfg.losses.lambda_sparsity);
    cfg.losses.lambda_sharing = w.value("lambda_sharing", cfg.losses.lambda_sharing);
    cfg.losses.lambda_instance = w.value("lambda_instance", cfg.losses.lambda_instance);
    cfg.losses.ordered_pairs = w.value("ordered_pairs", cfg.losses.ordered_pairs);
  }
  cfg.losses.target_rate = cfg.train.target_rate;

  cfg.train.validate();
  if (cfg.use_synthetic) cfg.synth.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  if (use_synthetic)
    j["dataset"] = {{"synthetic", synth.to_json()}};
  else
    j["dataset"] = {{"csv", csv_path}};
  j["backbone"] = {{"feature_dim", feature_dim},
                   {"num_blocks", num_blocks},
                   {"hidden_widths", hidden_widths},
                   {"gate_enable", gate_enable},
                   {"always_on", always_on},
                   {"gate_hidden", gate_hidden}};
  j["train"] = {
      {"warm_up_epochs", train.warm_up_epochs},
      {"e1", train.e1},
      {"e2", train.e2},
      {"max_epochs", train.max_epochs},
      {"retrain_epochs", train.retrain_epochs},
      {"single_task_epochs", train.single_task_epochs},
      {"batch_size", train.batch_size},
      {"lr_network", train.lr_network},
      {"lr_policy", train.lr_policy},
      {"lr_gates", train.lr_gates},
      {"lr_halve_period", train.lr_halve_period},
      {"tau_initial", train.tau_initial},
      {"tau_decay", train.tau_decay},
      {"tau_floor", train.tau_floor},
      {"tau_trigger", trigger_to_string(train.tau_trigger)},
      {"tau_retrain", train.tau_retrain},
      {"target_rate", train.target_rate},
      {"num_sampled_plans", train.num_sampled_plans},
      {"curriculum_cadence", train.curriculum_cadence},
      {"relaxed_weights_in_network_epochs", train.relaxed_weights_in_network_epochs},
      {"retrain_from_scratch", train.retrain_from_scratch},
      {"stochastic_eval_gates", train.stochastic_eval_gates},
      {"sgd_momentum", train.sgd_momentum},
      {"adam_beta1", train.adam_beta1},
      {"adam_beta2", train.adam_beta2},
      {"adam_eps", train.adam_eps},
      {"policy_logit_clamp", train.policy_logit_clamp}};
  j["losses"] = {{"lambda_task", losses.lambda_task},
                 {"lambda_sparsity", losses.lambda_sparsity},
                 {"lambda_sharing", losses.lambda_sharing},
                 {"lambda_instance", losses.lambda_instance},
                 {"ordered_pairs", losses.ordered_pairs}};
  return j;
}

std::string ExperimentConfig::config_hash() const {
  return hash_hex(fnv1a64(to_json().dump()));
}

MultiTaskData ExperimentConfig::load_data() const {
  if (use_synthetic) return generate(synth, seed);
  return load_csv(csv_path);
}

BackboneSpec ExperimentConfig::backbone_spec(const MultiTaskData& data) const {
  BackboneSpec spec;
  spec.input_dim = data.train.d;
  spec.feature_dim = feature_dim;
  spec.num_blocks = num_blocks;
  spec.num_tasks = data.train.num_tasks();
  spec.hidden_widths = hidden_widths;
  spec.gate_enable = gate_enable;
  spec.always_on = always_on;
  spec.gate_hidden = gate_hidden;
  for (const auto& task : data.train.tasks) {
    HeadSpec h;
    h.kind = task.kind;
    h.output_dim = task.kind == TaskKind::Classification ? task.classes : 1;
    spec.heads.push_back(h);
  }
  spec.validate();
  return spec;
}

}  // namespace gateshare
