#pragma once

#include <optional>
#include <span>
#include <vector>

#include "conic/core.h"
#include "conic/downstream/matrix.h"
#include "json.hpp"

namespace conic {

// Quadratic weighted kappa over labels 0..K-1, with K = max label + 1
// unless num_classes is given. Empty when the expected disagreement is 0.
std::optional<double> qwk(std::span<const int> y_true, std::span<const int> y_pred,
                          int num_classes = 0);

// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> row);

struct ClassScore {
  double f1 = 0.0;
  bool f1_flagged = false;  // no true and no predicted members
  double ap = 0.0;
  bool ap_defined = true;   // false when the class has no positives
};

struct ClassificationReport {
  std::vector<ClassScore> per_class;
  double mf1 = 0.0;
  double map = 0.0;  // over classes with a defined AP; NaN if none
};

// One-vs-rest F1 of the argmax labels, and step-interpolated average
// precision of each probability column.
ClassificationReport classification_metrics(std::span<const int> y_true,
                                            const DenseMatrix& probs);

// Area under the precision-recall step curve: sum over distinct score
// thresholds (descending) of (recall gain) * precision.
double average_precision(std::span<const int> positive, std::span<const double> score);

// Harrell's concordance index.
double c_index(std::span<const double> risk, std::span<const SurvivalRecord> records);

struct PairedTTest {
  double mean_difference = 0.0;
  double t = 0.0;
  int df = 0;
  double p_value = 1.0;  // two-sided
};

// Paired Student t-test of a - b.
PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b);

nlohmann::ordered_json to_json(const ClassificationReport& r);
nlohmann::ordered_json to_json(const PairedTTest& t);

}  // namespace conic
