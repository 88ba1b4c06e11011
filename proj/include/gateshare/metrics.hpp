#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gateshare/data.hpp"

namespace gateshare {

struct MetricSpec {
  std::string name;
  bool lower_better = false;

  bool operator==(const MetricSpec& o) const {
    return name == o.name && lower_better == o.lower_better;
  }
};

struct MetricValue {
  MetricSpec spec;
  double value = 0.0;
  bool defined = true;  // false: degenerate metric, excluded from aggregates
};

/// Per-task reference values a multi-task model is compared against
/// (typically produced by single-task training runs).
struct SingleTaskReference {
  std::vector<std::vector<MetricValue>> per_task;

  void save_csv(const std::string& path) const;
  static SingleTaskReference load_csv(const std::string& path);
};

/// Mean signed relative improvement over the reference, in percent:
/// (1/|M|) * sum_j (-1)^{l_j} (M_j - ref_j)/ref_j * 100, where l_j = 1 for
/// lower-better metrics. Metrics are matched by name; undefined entries on
/// either side are skipped (the normalizer shrinks accordingly).
double delta_task(const std::vector<MetricValue>& values,
                  const std::vector<MetricValue>& reference);

/// Arithmetic mean of per-task deltas.
double delta_overall(const std::vector<double>& per_task);

/// Rank-statistic AUC-ROC with midrank tie handling. Exact for n <= a few
/// thousand; labels must be in {0,1}. Returns an undefined MetricValue when
/// only one class is present.
double auc_roc(const std::vector<double>& scores, const std::vector<double>& labels);

struct RegressionMetricConfig {
  double ratio_threshold = 1.25;  // "within delta < threshold" ratio metric
};

/// Metric set per task kind:
///   classification: accuracy (higher), cross_entropy (lower)
///   binary:         auc (higher)
///   regression:     mse (lower), within_ratio (higher)
/// `predictions` are head outputs: logits [n,C] flattened row-major for
/// classification, one score/value per row otherwise.
std::vector<MetricValue> task_metrics(const std::vector<double>& predictions,
                                      std::size_t prediction_width,
                                      const std::vector<double>& targets,
                                      TaskKind kind,
                                      const RegressionMetricConfig& cfg = {});

struct CostRow {
  std::string variant;
  double params = 0.0;
  double expected_flops = 0.0;
  double delta = 0.0;
};

void write_cost_csv(const std::vector<CostRow>& rows, const std::string& path);

}  // namespace gateshare
