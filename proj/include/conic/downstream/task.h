#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "conic/core.h"
#include "conic/downstream/gbt.h"
#include "conic/downstream/matrix.h"

namespace conic {

enum class Task { kGrading, kSurvival };

std::string_view to_string(Task t);
Task task_from_name(std::string_view name);

// Targets for one task: ordinal grade labels (0 = non-neoplastic, 1 = low
// grade, 2 = high grade) or survival records, row-aligned with a matrix.
struct TaskTargets {
  Task task = Task::kGrading;
  int num_classes = 3;
  std::vector<int> labels;
  std::vector<SurvivalRecord> survival;

  std::size_t size() const;
  TaskTargets subset(std::span<const std::size_t> rows) const;
};

GbtModel fit_task(const DenseMatrix& x, const TaskTargets& targets,
                  const GbtHyperparams& params, std::uint64_t seed);

// Higher is better: QWK of argmax predictions for grading, C-index of
// risk scores for survival. NaN when undefined on these rows.
double task_metric(const GbtModel& model, const DenseMatrix& x, const TaskTargets& targets);

using TaskMetric =
    std::function<double(const GbtModel&, const DenseMatrix&, const TaskTargets&)>;

}  // namespace conic
