#include "gateshare/pipeline.hpp"

#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gateshare/error.hpp"
#include "gateshare/serialize.hpp"

namespace fs = std::filesystem;

namespace gateshare {

namespace {

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("missing artifact: " + path.string());
  nlohmann::json j;
  in >> j;
  return j;
}

std::string rate_tag(double rate) {
  std::ostringstream os;
  os << "t" << rate;
  std::string s = os.str();
  for (char& c : s)
    if (c == '.') c = '_';
  return s;
}

/// Copy of `b` with all gating units removed from the spec.
Backbone strip_gates(const Backbone& b) {
  BackboneSpec spec = b.spec();
  spec.gate_enable.assign(spec.num_blocks, false);
  Backbone out(spec);
  // Network parameters carry over; there are no gates to copy.
  SeededRng dummy(0);
  out.init_network(dummy);
  auto src = const_cast<Backbone&>(b).named_params();
  for (auto& [name, t] : out.named_params()) {
    for (auto& [sname, st] : src)
      if (sname == name) {
        t.mutable_data() = st.data();
        break;
      }
  }
  return out;
}

nlohmann::json metric_values_json(const std::vector<std::vector<MetricValue>>& m) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& task : m) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& mv : task)
      row.push_back({{"name", mv.spec.name},
                     {"direction", mv.spec.lower_better ? "lower" : "higher"},
                     {"value", mv.value},
                     {"defined", mv.defined}});
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

Ablation ablation_from_string(const std::string& s) {
  if (s == "none") return Ablation::None;
  if (s == "task_only") return Ablation::TaskOnly;
  if (s == "instance_only") return Ablation::InstanceOnly;
  throw ConfigError("unknown ablation '" + s +
                    "' (expected none|task_only|instance_only)");
}

std::string ablation_to_string(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::TaskOnly: return "task_only";
    case Ablation::InstanceOnly: return "instance_only";
  }
  return "none";
}

SingleTaskReference run_single_task(const ExperimentConfig& cfg) {
  const MultiTaskData data = cfg.load_data();
  const BackboneSpec spec = cfg.backbone_spec(data);
  fs::create_directories(cfg.output_dir);

  SingleTaskReference val_refs, test_refs;
  for (std::size_t k = 0; k < spec.num_tasks; ++k) {
    SingleTaskOutcome out = train_single_task(cfg.train, cfg.losses, data, spec, k);
    val_refs.per_task.push_back(out.val_metrics);
    test_refs.per_task.push_back(out.test_metrics);
  }
  val_refs.save_csv((fs::path(cfg.output_dir) / "references_val.csv").string());
  test_refs.save_csv((fs::path(cfg.output_dir) / "references_test.csv").string());
  return val_refs;
}

TrainingArtifacts run_training(const ExperimentConfig& cfg, Ablation ablation) {
  const MultiTaskData data = cfg.load_data();
  const BackboneSpec spec = cfg.backbone_spec(data);
  fs::create_directories(cfg.output_dir);

  Backbone backbone(spec);
  SeededRng net_rng = SeededRng(cfg.seed).derive(1);
  backbone.init_network(net_rng);
  SeededRng gate_rng = SeededRng(cfg.seed).derive(2);
  backbone.init_gates(gate_rng);

  PolicyDistribution policy(spec.num_blocks, spec.num_tasks, spec.always_on);

  TrainConfig tc = cfg.train;
  if (ablation == Ablation::InstanceOnly) {
    // All-ones policy: the whole budget is hard-sharing warm-up.
    tc.warm_up_epochs = tc.max_epochs;
  }
  TrainOutcome outcome = train(tc, cfg.losses, data, backbone, policy);

  const fs::path out(cfg.output_dir);
  write_json(backbone.to_json(), out / "trained_model.json");
  write_json(policy.to_json(), out / "policy.json");
  policy.write_alpha_csv((out / "policy.csv").string());
  write_metrics_csv(outcome.log, spec.num_blocks, (out / "metrics.csv").string());
  write_json(cfg.to_json(), out / "config.json");
  return TrainingArtifacts(std::move(backbone), std::move(policy));
}

std::vector<VariantResult> run_retrain_stage(const ExperimentConfig& cfg,
                                             const std::vector<double>& rates,
                                             Ablation ablation,
                                             std::size_t workers) {
  const MultiTaskData data = cfg.load_data();
  const fs::path out(cfg.output_dir);
  if (!fs::exists(out / "trained_model.json") || !fs::exists(out / "policy.json"))
    throw ArtifactError("missing training artifacts in " + out.string() +
                        " (run the train step first)");
  Backbone trained = Backbone::from_json(read_json(out / "trained_model.json"));
  PolicyDistribution policy =
      PolicyDistribution::from_json(read_json(out / "policy.json"));
  const SingleTaskReference val_refs = SingleTaskReference::load_csv(
      (out / "references_val.csv").string());
  const SingleTaskReference test_refs = SingleTaskReference::load_csv(
      (out / "references_test.csv").string());

  if (ablation == Ablation::TaskOnly) trained = strip_gates(trained);

  std::vector<VariantResult> results;
  nlohmann::json variants = nlohmann::json::array();
  std::ofstream gate_rates_csv(out / "gate_rates.csv");
  gate_rates_csv << "variant,block,mean_alpha,threshold_rate,train_hard_rate\n";
  gate_rates_csv.precision(17);

  for (double rate : rates) {
    ExperimentConfig vcfg = cfg;
    vcfg.train.target_rate = rate;
    vcfg.losses.target_rate = rate;

    SelectionResult sel = select_best(vcfg.train, vcfg.losses, data, trained,
                                      policy, val_refs, workers);
    const RetrainOutcome& best = sel.best;

    VariantResult vr;
    vr.target_rate = rate;
    vr.plan_index = sel.best_index;
    vr.delta_val = best.val_delta;
    vr.cost = best.cost;

    EvalOptions eo;
    const EvalOutcome test_eval =
        evaluate_plans(const_cast<Backbone&>(best.model), best.plans, data.test, eo);
    std::vector<double> deltas;
    for (std::size_t k = 0; k < test_eval.per_task.size(); ++k)
      deltas.push_back(delta_task(test_eval.per_task[k], test_refs.per_task.at(k)));
    vr.delta_test = delta_overall(deltas);
    vr.test_metrics = test_eval.per_task;

    const fs::path vdir = out / ("retrain_" + rate_tag(rate) +
                                 (ablation == Ablation::None
                                      ? ""
                                      : "_" + ablation_to_string(ablation)));
    fs::create_directories(vdir);
    write_json(best.model.to_json(), vdir / "model.json");
    write_json(plans_to_json(best.plans), vdir / "plans.json");
    write_plans_csv(best.plans, (vdir / "plans.csv").string());
    write_metrics_csv(best.log, best.model.spec().num_blocks,
                      (vdir / "metrics.csv").string());
    nlohmann::json eval_j;
    eval_j["target_rate"] = rate;
    eval_j["delta_val"] = vr.delta_val;
    eval_j["delta_test"] = vr.delta_test;
    eval_j["val_metrics"] = metric_values_json(best.val_eval.per_task);
    eval_j["test_metrics"] = metric_values_json(test_eval.per_task);
    eval_j["params"] = best.cost.params;
    eval_j["expected_flops"] = best.cost.expected_flops;
    write_json(eval_j, vdir / "eval.json");

    const auto& spec = best.model.spec();
    for (std::size_t l = 0; l < spec.num_blocks; ++l) {
      if (!spec.gate_enable[l]) continue;
      gate_rates_csv << rate_tag(rate) << "," << l << ","
                     << best.val_eval.mean_alpha[l] << ","
                     << best.val_eval.threshold_rate[l] << ","
                     << (l < best.train_hard_rates.size()
                             ? best.train_hard_rates[l]
                             : -1.0)
                     << "\n";
    }

    variants.push_back({{"target_rate", rate},
                        {"plan_index", vr.plan_index},
                        {"delta_val", vr.delta_val},
                        {"delta_test", vr.delta_test},
                        {"params", vr.cost.params},
                        {"expected_flops", vr.cost.expected_flops},
                        {"dir", vdir.filename().string()}});
    results.push_back(std::move(vr));
  }

  std::vector<CostRow> cost_rows;
  for (const auto& vr : results) {
    std::ostringstream name;
    name << "t=" << vr.target_rate;
    cost_rows.push_back(
        {name.str(), vr.cost.params, vr.cost.expected_flops, vr.delta_val});
  }
  write_cost_csv(cost_rows, (out / "cost.csv").string());

  std::ofstream plot(out / "plotdata.csv");
  plot << "target_rate,delta_val,delta_test,expected_flops,params\n";
  plot.precision(17);
  for (const auto& vr : results)
    plot << vr.target_rate << "," << vr.delta_val << "," << vr.delta_test << ","
         << vr.cost.expected_flops << "," << vr.cost.params << "\n";

  write_json(variants, out / "variants.json");
  return results;
}

nlohmann::json run_report(const std::string& output_dir) {
  const fs::path out(output_dir);
  std::vector<std::string> missing;
  for (const char* name :
       {"config.json", "variants.json", "policy.csv", "references_val.csv",
        "references_test.csv", "cost.csv"})
    if (!fs::exists(out / name)) missing.push_back(name);
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ArtifactError("report: missing artifacts in " + output_dir + ": " + list);
  }

  const nlohmann::json config = read_json(out / "config.json");
  const nlohmann::json variants = read_json(out / "variants.json");

  nlohmann::json summary;
  summary["config_hash"] =
      hash_hex(fnv1a64(config.dump()));
  summary["seed"] = config.value("seed", 0);
  summary["variants"] = variants;
  double best_delta = 0.0;
  bool first = true;
  for (const auto& v : variants) {
    const double dv = v.at("delta_val").get<double>();
    if (first || dv > best_delta) best_delta = dv;
    first = false;
  }
  summary["best_delta_val"] = first ? 0.0 : best_delta;
  summary["generated_at_unix"] = static_cast<long long>(::time(nullptr));
  write_json(summary, out / "summary.json");

  std::ofstream scsv(out / "summary.csv");
  scsv << "target_rate,delta_val,delta_test,params,expected_flops\n";
  scsv.precision(17);
  for (const auto& v : variants)
    scsv << v.at("target_rate").get<double>() << ","
         << v.at("delta_val").get<double>() << ","
         << v.at("delta_test").get<double>() << ","
         << v.at("params").get<double>() << ","
         << v.at("expected_flops").get<double>() << "\n";
  return summary;
}

nlohmann::json run_full(const ExperimentConfig& cfg, std::vector<double> rates,
                        Ablation ablation, std::size_t workers,
                        bool inline_references) {
  fs::create_directories(cfg.output_dir);
  const fs::path out(cfg.output_dir);
  if (rates.empty()) rates.push_back(cfg.train.target_rate);

  if (inline_references || !fs::exists(out / "references_val.csv"))
    run_single_task(cfg);
  if (!fs::exists(out / "references_val.csv"))
    throw ArtifactError("missing references_val.csv; run single-task first or "
                        "pass --inline-references");

  run_training(cfg, ablation);
  run_retrain_stage(cfg, rates, ablation, workers);
  return run_report(cfg.output_dir);
}

}  // namespace gateshare
