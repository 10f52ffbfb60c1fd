#pragma once

// Instance matching and the panoptic-quality family (PQ = DQ x SQ) with
// dataset-level pooling (mPQ+), plus a generic bootstrap for confidence
// bounds of any dataset-level metric.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "conic/core.h"
#include "json.hpp"

namespace conic {

struct ClassMatchStats {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  double iou_sum = 0.0;

  ClassMatchStats& operator+=(const ClassMatchStats& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    iou_sum += o.iou_sum;
    return *this;
  }
  bool operator==(const ClassMatchStats&) const = default;
};

// Per-class counts, indexed in id order. Merging is associative and
// commutative (up to floating rounding of iou_sum).
struct MatchStats {
  std::array<ClassMatchStats, kNumClasses> per_class{};

  ClassMatchStats& operator[](NucleusClass c) { return per_class[class_index(c)]; }
  const ClassMatchStats& operator[](NucleusClass c) const {
    return per_class[class_index(c)];
  }
  MatchStats& operator+=(const MatchStats& o) {
    for (int i = 0; i < kNumClasses; ++i) per_class[i] += o.per_class[i];
    return *this;
  }
  bool operator==(const MatchStats&) const = default;
};

// Within each class, a GT and a predicted instance match iff their pixel IoU
// exceeds 0.5; such a match is necessarily unique. Cross-class overlaps never
// match, so a misclassified nucleus is one FN plus one FP.
MatchStats match_instances(const LabeledInstanceGrid& gt,
                           const LabeledInstanceGrid& pred);

struct ClassQuality {
  bool defined = false;  // false iff tp = fp = fn = 0
  double pq = 0.0;
  double dq = 0.0;
  double sq = 0.0;
  ClassMatchStats stats;
};

struct PqBreakdown {
  std::array<ClassQuality, kNumClasses> per_class{};
  // Means over defined classes; NaN when no class is defined.
  double mpq_plus = 0.0;
  double mdq_plus = 0.0;
  double msq_plus = 0.0;
  std::vector<NucleusClass> undefined_classes;

  const ClassQuality& operator[](NucleusClass c) const {
    return per_class[class_index(c)];
  }
};

// DQ = tp / (tp + fp/2 + fn/2); SQ = iou_sum / tp (0 when tp = 0).
PqBreakdown panoptic_quality(const MatchStats& stats);

// Pools the statistics of every image per class, then scores once. With
// `strict`, a class absent from the whole dataset is an EmptyDataset error
// instead of being excluded from the means.
PqBreakdown aggregate_mpq(std::span<const MatchStats> per_image, bool strict = false);

nlohmann::ordered_json to_json(const PqBreakdown& breakdown);

struct BootstrapResult {
  std::vector<double> samples;
  double mean = 0.0;
  double lo = 0.0;  // 2.5th percentile
  double hi = 0.0;  // 97.5th percentile
};

// Linear-interpolation percentile, q in [0, 100].
double percentile(std::vector<double> values, double q);

BootstrapResult summarize_bootstrap(std::vector<double> samples);

// Resamples `items` with replacement n times (same size as the input) and
// evaluates `metric` on each resample. Deterministic under `seed`.
template <typename T, typename Metric>
BootstrapResult bootstrap_metric(std::span<const T> items, Metric&& metric, int n,
                                 std::uint64_t seed) {
  if (items.empty()) throw Error(ErrorCode::kEmptyDataset, "bootstrap over no items");
  if (n < 1) throw Error(ErrorCode::kConfigError, "bootstrap needs n >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, items.size() - 1);
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(n));
  std::vector<T> resample;
  resample.reserve(items.size());
  for (int b = 0; b < n; ++b) {
    resample.clear();
    for (std::size_t i = 0; i < items.size(); ++i) resample.push_back(items[pick(rng)]);
    samples.push_back(static_cast<double>(metric(std::span<const T>(resample))));
  }
  return summarize_bootstrap(std::move(samples));
}

nlohmann::ordered_json to_json(const BootstrapResult& result);

}  // namespace conic
