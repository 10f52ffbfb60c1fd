#pragma once

// Cross-validated random search, permutation-importance feature selection
// and per-split reporting for the grading and survival tasks.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "conic/downstream/hyperparams.h"
#include "conic/downstream/importance.h"
#include "conic/downstream/metrics.h"
#include "conic/downstream/splits.h"
#include "conic/downstream/task.h"
#include "conic/feature_catalog.h"
#include "json.hpp"

namespace conic {

struct DownstreamOptions {
  int search_n = 2048;
  int folds = 5;
  int repeats = 5;
  int n_perm = 5;
  std::uint64_t seed = 0;
  int threads = 1;
  // Unset runs the full pipeline (D, then the selected subset D-bar).
  std::optional<FeatureSet> feature_set;
};

struct DownstreamInput {
  std::vector<std::string> patient_ids;
  std::vector<std::string> feature_names;  // kNumFeatures columns
  DenseMatrix x;
  TaskTargets targets;
};

struct SplitScores {
  double primary = 0.0;  // QWK or C-index; NaN when undefined
  std::optional<ClassificationReport> classification;
};

struct SplitOutcome {
  SplitScores valid;
  SplitScores test;
};

struct FeatureSetResult {
  FeatureSet set = FeatureSet::kAll;
  std::vector<int> columns;
  std::size_t winner = 0;  // index into the sampled parameters
  GbtHyperparams winner_params;
  double winner_mean_valid = 0.0;
  std::vector<double> mean_valid;         // per sampled parameter set
  std::vector<std::size_t> best_per_split;  // parameter index by validation score
  std::vector<SplitOutcome> per_split;     // winner refit on each split
};

struct DownstreamReport {
  std::vector<CvSplit> splits;
  std::vector<GbtHyperparams> sampled;
  std::vector<FeatureSetResult> results;
  std::optional<ImportanceReport> importance;
  std::optional<PairedTTest> selected_vs_all;  // test metric, D-bar minus D
};

DownstreamReport run_downstream(const DownstreamInput& input, const DownstreamOptions& options);

// Keys in a fixed order; NaN as null.
nlohmann::ordered_json to_json(const DownstreamReport& report, const DownstreamInput& input);

}  // namespace conic
