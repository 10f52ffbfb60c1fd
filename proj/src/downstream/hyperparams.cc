#include "conic/downstream/hyperparams.h"

#include <cmath>
#include <random>
#include <string>

#include "conic/core.h"

namespace conic {

std::string_view to_string(Booster b) { return b == Booster::kDart ? "dart" : "gbtree"; }

namespace {

bool fraction_ok(double f) { return std::isfinite(f) && f > 0.0 && f <= 1.0; }

bool is_choice(double f) {
  for (double c : kFractionChoices) {
    if (f == c) return true;
  }
  return false;
}

}  // namespace

void validate(const GbtHyperparams& p) {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kConfigError, "invalid hyperparameter: " + what);
  };
  if (p.num_boost_round < 0) fail("num_boost_round must be >= 0");
  if (!(p.learning_rate > 0.0) || !std::isfinite(p.learning_rate)) fail("learning_rate must be > 0");
  if (p.max_depth < 1) fail("max_depth must be >= 1");
  if (!fraction_ok(p.subsample)) fail("subsample must be in (0, 1]");
  if (!fraction_ok(p.colsample_bytree)) fail("colsample_bytree must be in (0, 1]");
  if (!fraction_ok(p.colsample_bylevel)) fail("colsample_bylevel must be in (0, 1]");
  if (!fraction_ok(p.colsample_bynode)) fail("colsample_bynode must be in (0, 1]");
  if (!(p.min_child_weight >= 0.0)) fail("min_child_weight must be >= 0");
  if (!(p.reg_lambda >= 0.0)) fail("reg_lambda must be >= 0");
  if (!(p.reg_alpha >= 0.0)) fail("reg_alpha must be >= 0");
  if (!(p.rate_drop >= 0.0 && p.rate_drop <= 1.0)) fail("rate_drop must be in [0, 1]");
}

bool in_search_space(const GbtHyperparams& p) {
  return p.num_boost_round >= 8 && p.num_boost_round <= 256 && p.learning_rate >= 0.001 &&
         p.learning_rate <= 0.1 && p.max_depth >= 1 && p.max_depth <= 16 &&
         is_choice(p.subsample) && is_choice(p.colsample_bytree) &&
         is_choice(p.colsample_bylevel) && is_choice(p.colsample_bynode) &&
         p.min_child_weight >= 0.01 && p.min_child_weight <= 3.0 && p.reg_lambda >= 0.1 &&
         p.reg_lambda <= 2.0 && p.reg_alpha >= 0.1 && p.reg_alpha <= 2.0 &&
         p.rate_drop >= 0.1 && p.rate_drop <= 0.7;
}

std::vector<GbtHyperparams> sample_hyperparameters(int n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorCode::kConfigError, "search size must be >= 1");
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto integer = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto choice = [&] {
    return kFractionChoices[std::uniform_int_distribution<int>(0, 5)(rng)];
  };
  std::vector<GbtHyperparams> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    GbtHyperparams p;
    p.num_boost_round = integer(8, 256);
    p.learning_rate = uniform(0.001, 0.1);
    p.max_depth = integer(1, 16);
    p.subsample = choice();
    p.colsample_bytree = choice();
    p.colsample_bylevel = choice();
    p.colsample_bynode = choice();
    p.min_child_weight = uniform(0.01, 3.0);
    p.reg_lambda = uniform(0.1, 2.0);
    p.reg_alpha = uniform(0.1, 2.0);
    p.booster = integer(0, 1) == 0 ? Booster::kGbtree : Booster::kDart;
    p.rate_drop = uniform(0.1, 0.7);
    out.push_back(p);
  }
  return out;
}

nlohmann::ordered_json to_json(const GbtHyperparams& p) {
  nlohmann::ordered_json j;
  j["num_boost_round"] = p.num_boost_round;
  j["learning_rate"] = p.learning_rate;
  j["max_depth"] = p.max_depth;
  j["subsample"] = p.subsample;
  j["colsample_bytree"] = p.colsample_bytree;
  j["colsample_bylevel"] = p.colsample_bylevel;
  j["colsample_bynode"] = p.colsample_bynode;
  j["min_child_weight"] = p.min_child_weight;
  j["reg_lambda"] = p.reg_lambda;
  j["reg_alpha"] = p.reg_alpha;
  j["booster"] = std::string(to_string(p.booster));
  j["rate_drop"] = p.rate_drop;
  return j;
}

GbtHyperparams hyperparams_from_json(const nlohmann::json& j) {
  GbtHyperparams p;
  try {
    p.num_boost_round = j.value("num_boost_round", p.num_boost_round);
    p.learning_rate = j.value("learning_rate", p.learning_rate);
    p.max_depth = j.value("max_depth", p.max_depth);
    p.subsample = j.value("subsample", p.subsample);
    p.colsample_bytree = j.value("colsample_bytree", p.colsample_bytree);
    p.colsample_bylevel = j.value("colsample_bylevel", p.colsample_bylevel);
    p.colsample_bynode = j.value("colsample_bynode", p.colsample_bynode);
    p.min_child_weight = j.value("min_child_weight", p.min_child_weight);
    p.reg_lambda = j.value("reg_lambda", p.reg_lambda);
    p.reg_alpha = j.value("reg_alpha", p.reg_alpha);
    p.rate_drop = j.value("rate_drop", p.rate_drop);
    const std::string booster = j.value("booster", std::string("gbtree"));
    if (booster == "gbtree") {
      p.booster = Booster::kGbtree;
    } else if (booster == "dart") {
      p.booster = Booster::kDart;
    } else {
      throw Error(ErrorCode::kConfigError, "unknown booster '" + booster + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigError, e.what());
  }
  validate(p);
  return p;
}

}  // namespace conic
