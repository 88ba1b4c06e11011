#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace gateshare {

enum class TaskKind { Classification, Binary, Regression };

std::string task_kind_name(TaskKind kind);
TaskKind task_kind_from_name(const std::string& name);

/// Labels of one task over a dataset split. Classification labels are stored
/// as non-negative integers in doubles; binary labels in {0,1}; regression
/// targets arbitrary reals.
struct TaskColumn {
  std::string name;
  TaskKind kind = TaskKind::Classification;
  std::size_t classes = 0;  // classification only
  std::vector<double> y;
};

/// One split: features x (row-major n x d) with every task labelled for every
/// instance.
struct Dataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> x;
  std::vector<TaskColumn> tasks;

  std::size_t num_tasks() const { return tasks.size(); }
  std::vector<double> row(std::size_t i) const;
};

struct MultiTaskData {
  Dataset train;
  Dataset val;
  Dataset test;
};

}  // namespace gateshare
