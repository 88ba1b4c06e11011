#include "gateshare/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "gateshare/error.hpp"

namespace gateshare {

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void SingleTaskReference::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write reference file: " + path);
  out << "task,metric,direction,value\n";
  for (std::size_t k = 0; k < per_task.size(); ++k)
    for (const auto& mv : per_task[k]) {
      if (!mv.defined) continue;
      out << k << "," << mv.spec.name << ","
          << (mv.spec.lower_better ? "lower" : "higher") << ","
          << format_double(mv.value) << "\n";
    }
}

SingleTaskReference SingleTaskReference::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArtifactError("missing reference file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "task,metric,direction,value")
    throw ConfigError("reference file " + path + ": bad header '" + line + "'");
  SingleTaskReference ref;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string task_s, metric, direction, value_s;
    if (!std::getline(ls, task_s, ',') || !std::getline(ls, metric, ',') ||
        !std::getline(ls, direction, ',') || !std::getline(ls, value_s))
      throw ConfigError("reference file " + path + ": malformed row " +
                        std::to_string(row));
    std::size_t task = 0;
    double value = 0.0;
    try {
      task = std::stoul(task_s);
      value = std::stod(value_s);
    } catch (const std::exception&) {
      throw ConfigError("reference file " + path + ": non-numeric cell at row " +
                        std::to_string(row));
    }
    if (direction != "lower" && direction != "higher")
      throw ConfigError("reference file " + path + ": unknown direction '" +
                        direction + "' at row " + std::to_string(row));
    if (ref.per_task.size() <= task) ref.per_task.resize(task + 1);
    ref.per_task[task].push_back(
        {MetricSpec{metric, direction == "lower"}, value, true});
  }
  return ref;
}

double delta_task(const std::vector<MetricValue>& values,
                  const std::vector<MetricValue>& reference) {
  double acc = 0.0;
  std::size_t counted = 0;
  for (const auto& mv : values) {
    if (!mv.defined) continue;
    const MetricValue* ref = nullptr;
    for (const auto& rv : reference)
      if (rv.spec.name == mv.spec.name && rv.defined) {
        ref = &rv;
        break;
      }
    if (ref == nullptr) continue;
    if (ref->value == 0.0)
      throw ConfigError("delta_task: zero reference value for metric '" +
                        mv.spec.name + "'");
    const double sign = mv.spec.lower_better ? -1.0 : 1.0;
    acc += sign * (mv.value - ref->value) / ref->value;
    ++counted;
  }
  if (counted == 0)
    throw ConfigError("delta_task: no overlapping defined metrics");
  return acc / static_cast<double>(counted) * 100.0;
}

double delta_overall(const std::vector<double>& per_task) {
  if (per_task.empty()) throw ConfigError("delta_overall: empty task list");
  const double s = std::accumulate(per_task.begin(), per_task.end(), 0.0);
  return s / static_cast<double>(per_task.size());
}

double auc_roc(const std::vector<double>& scores,
               const std::vector<double>& labels) {
  if (scores.size() != labels.size())
    throw ShapeError("auc_roc", std::to_string(scores.size()) + " scores vs " +
                                    std::to_string(labels.size()) + " labels");
  const std::size_t n = scores.size();
  std::size_t pos = 0;
  for (double y : labels) {
    if (y != 0.0 && y != 1.0)
      throw ConfigError("auc_roc: labels must be 0 or 1");
    if (y == 1.0) ++pos;
  }
  const std::size_t negs = n - pos;
  if (pos == 0 || negs == 0) return std::nan("");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  // Midranks over tied score groups.
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[idx[t]] = mid;
    i = j + 1;
  }
  double rank_sum = 0.0;
  for (std::size_t t = 0; t < n; ++t)
    if (labels[t] == 1.0) rank_sum += rank[t];
  const double u = rank_sum - static_cast<double>(pos) *
                                  (static_cast<double>(pos) + 1.0) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(negs));
}

std::vector<MetricValue> task_metrics(const std::vector<double>& predictions,
                                      std::size_t prediction_width,
                                      const std::vector<double>& targets,
                                      TaskKind kind,
                                      const RegressionMetricConfig& cfg) {
  const std::size_t n = targets.size();
  if (prediction_width == 0 || predictions.size() != n * prediction_width)
    throw ShapeError("task_metrics",
                     std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(n) + " targets (width " +
                         std::to_string(prediction_width) + ")");
  std::vector<MetricValue> out;
  switch (kind) {
    case TaskKind::Classification: {
      const std::size_t c = prediction_width;
      std::size_t correct = 0;
      double ce = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* row = predictions.data() + i * c;
        std::size_t argmax = 0;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j)
          if (row[j] > mx) {
            mx = row[j];
            argmax = j;
          }
        const auto label = static_cast<std::size_t>(targets[i]);
        if (label >= c)
          throw ConfigError("task_metrics: label out of range at row " +
                            std::to_string(i));
        if (argmax == label) ++correct;
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        ce -= (row[label] - mx) - std::log(z);
      }
      out.push_back({{"accuracy", false},
                     static_cast<double>(correct) / static_cast<double>(n), true});
      out.push_back({{"cross_entropy", true}, ce / static_cast<double>(n), true});
      break;
    }
    case TaskKind::Binary: {
      const double a = auc_roc(predictions, targets);
      if (std::isnan(a)) {
        std::cerr << "[metrics] warning: AUC undefined (single-class targets); "
                     "excluded from aggregates\n";
        out.push_back({{"auc", false}, 0.0, false});
      } else {
        out.push_back({{"auc", false}, a, true});
      }
      break;
    }
    case TaskKind::Regression: {
      double mse = 0.0;
      std::size_t within = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double diff = predictions[i] - targets[i];
        mse += diff * diff;
        const double p = std::max(std::fabs(predictions[i]), 1e-9);
        const double t = std::max(std::fabs(targets[i]), 1e-9);
        const double ratio = std::max(p / t, t / p);
        if (ratio < cfg.ratio_threshold) ++within;
      }
      out.push_back({{"mse", true}, mse / static_cast<double>(n), true});
      out.push_back({{"within_ratio", false},
                     static_cast<double>(within) / static_cast<double>(n), true});
      break;
    }
  }
  return out;
}

void write_cost_csv(const std::vector<CostRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write cost report: " + path);
  out << "variant,params,expected_flops,delta\n";
  for (const auto& r : rows)
    out << r.variant << "," << format_double(r.params) << ","
        << format_double(r.expected_flops) << "," << format_double(r.delta)
        << "\n";
}

}  // namespace gateshare
