#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace conic {

enum class Booster { kGbtree, kDart };

std::string_view to_string(Booster b);

// Parameters of the gradient boosted tree learner. Defaults are a plain
// gbtree configuration; the random search draws from search_space().
struct GbtHyperparams {
  int num_boost_round = 100;
  double learning_rate = 0.1;
  int max_depth = 6;
  double subsample = 1.0;
  double colsample_bytree = 1.0;
  double colsample_bylevel = 1.0;
  double colsample_bynode = 1.0;
  double min_child_weight = 1.0;
  double reg_lambda = 1.0;
  double reg_alpha = 0.0;
  Booster booster = Booster::kGbtree;
  double rate_drop = 0.1;  // dart only

  bool operator==(const GbtHyperparams&) const = default;
};

// Throws ConfigError on values the learner cannot use (non-positive
// rounds or depth, fractions outside (0, 1], negative penalties, ...).
void validate(const GbtHyperparams& p);

// True when every field lies in the random-search ranges.
bool in_search_space(const GbtHyperparams& p);

// Discrete choices for the four sampling fractions.
inline constexpr double kFractionChoices[] = {0.3, 0.4, 0.5, 0.6, 0.7, 0.8};

// n independent draws, reproducible from the seed.
std::vector<GbtHyperparams> sample_hyperparameters(int n, std::uint64_t seed);

nlohmann::ordered_json to_json(const GbtHyperparams& p);
GbtHyperparams hyperparams_from_json(const nlohmann::json& j);

}  // namespace conic
