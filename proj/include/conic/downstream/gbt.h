#pragma once

// Second-order (Newton) gradient boosted trees with softmax and Cox
// objectives.

#include <cstdint>
#include <span>
#include <vector>

#include "conic/core.h"
#include "conic/downstream/hyperparams.h"
#include "conic/downstream/matrix.h"
#include "json.hpp"

namespace conic {

enum class Objective { kSoftmax, kCox };

struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;
  bool default_left = true;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output, learning rate included

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  int group = 0;                // output column (class for softmax)
  double weight = 1.0;          // dart scaling

  double predict(std::span<const double> row) const;
  int depth() const;
  bool uses_feature(int feature) const;
};

struct GbtModel {
  Objective objective = Objective::kSoftmax;
  int num_groups = 1;  // K for softmax, 1 for cox
  int num_features = 0;
  double base_score = 0.0;
  GbtHyperparams params;
  std::vector<RegressionTree> trees;
  // Training loss after each round (full training set).
  std::vector<double> training_loss;

  bool uses_feature(int feature) const;
};

// Labels in [0, num_classes).
GbtModel fit_softmax(const DenseMatrix& x, std::span<const int> labels, int num_classes,
                     const GbtHyperparams& params, std::uint64_t seed);
GbtModel fit_cox(const DenseMatrix& x, std::span<const SurvivalRecord> survival,
                 const GbtHyperparams& params, std::uint64_t seed);

// rows x num_groups raw scores.
DenseMatrix predict_margin(const GbtModel& model, const DenseMatrix& x);
// Softmax: rows x K probabilities.
DenseMatrix predict_proba(const GbtModel& model, const DenseMatrix& x);
// Cox: one risk score per row; higher is worse.
std::vector<double> predict_risk(const GbtModel& model, const DenseMatrix& x);

// Objectives, exposed for checking. Margins are rows x K row-major.
double softmax_loss(std::span<const int> labels, std::span<const double> margins, int k);
void softmax_gradients(std::span<const int> labels, std::span<const double> margins, int k,
                       std::vector<double>& grad, std::vector<double>& hess);
// Negative Breslow partial log-likelihood.
double cox_loss(std::span<const SurvivalRecord> survival, std::span<const double> scores);
void cox_gradients(std::span<const SurvivalRecord> survival, std::span<const double> scores,
                   std::vector<double>& grad, std::vector<double>& hess);

nlohmann::ordered_json to_json(const GbtModel& model);

}  // namespace conic
