#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "conic/downstream/task.h"
#include "json.hpp"

namespace conic {

// Per column: baseline metric minus the mean metric over n_perm shuffles of
// that column. Columns the model never splits on score exactly 0. Shuffles
// whose metric is undefined are left out of the mean; a column with an
// undefined baseline or no defined shuffle scores 0.
std::vector<double> permutation_importance(const GbtModel& model, const DenseMatrix& x,
                                           const TaskTargets& targets, const TaskMetric& metric,
                                           int n_perm, std::uint64_t seed, int threads = 1);

struct ImportanceReport {
  std::vector<std::vector<double>> per_split;
  std::vector<double> aggregated_mean;
  double median = 0.0;
  std::vector<bool> selected;  // aggregated_mean > median
  std::vector<int> selected_ids;
  bool degenerate = false;     // nothing selected
};

// Mean over splits (summed in sorted order, so the split order does not
// matter), then the strictly-above-median rule.
ImportanceReport select_features(std::vector<std::vector<double>> per_split);

nlohmann::ordered_json to_json(const ImportanceReport& r,
                               std::span<const std::string> feature_names = {});

}  // namespace conic
