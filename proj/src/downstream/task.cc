#include "conic/downstream/task.h"

#include <cmath>
#include <limits>
#include <string>

#include "conic/downstream/metrics.h"

namespace conic {

std::string_view to_string(Task t) { return t == Task::kSurvival ? "survival" : "grading"; }

Task task_from_name(std::string_view name) {
  if (name == "grading") return Task::kGrading;
  if (name == "survival") return Task::kSurvival;
  throw Error(ErrorCode::kConfigError, "unknown task '" + std::string(name) + "'");
}

std::size_t TaskTargets::size() const {
  return task == Task::kGrading ? labels.size() : survival.size();
}

TaskTargets TaskTargets::subset(std::span<const std::size_t> rows) const {
  TaskTargets out;
  out.task = task;
  out.num_classes = num_classes;
  for (auto r : rows) {
    if (task == Task::kGrading) {
      out.labels.push_back(labels[r]);
    } else {
      out.survival.push_back(survival[r]);
    }
  }
  return out;
}

GbtModel fit_task(const DenseMatrix& x, const TaskTargets& t, const GbtHyperparams& params,
                  std::uint64_t seed) {
  if (t.task == Task::kGrading) return fit_softmax(x, t.labels, t.num_classes, params, seed);
  return fit_cox(x, t.survival, params, seed);
}

double task_metric(const GbtModel& model, const DenseMatrix& x, const TaskTargets& t) {
  const double undefined = std::numeric_limits<double>::quiet_NaN();
  if (t.task == Task::kGrading) {
    const DenseMatrix probs = predict_proba(model, x);
    std::vector<int> pred(x.rows());
    for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = argmax(probs.row(i));
    return qwk(t.labels, pred, t.num_classes).value_or(undefined);
  }
  const auto risk = predict_risk(model, x);
  try {
    return c_index(risk, t.survival);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kNoComparablePairs) return undefined;
    throw;
  }
}

}  // namespace conic
