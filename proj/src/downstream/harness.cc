#include "conic/downstream/harness.h"

#include <cmath>
#include <limits>
#include <numeric>

#include "conic/parallel.h"

namespace conic {

namespace {

constexpr std::uint64_t kStreamSplits = 1;
constexpr std::uint64_t kStreamParams = 2;
constexpr std::uint64_t kStreamFit = 3;
constexpr std::uint64_t kStreamImportance = 4;

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

struct SplitData {
  DenseMatrix train_x, valid_x, test_x;
  TaskTargets train_y, valid_y, test_y;
};

std::vector<SplitData> slice_splits(const DownstreamInput& in, const std::vector<CvSplit>& splits,
                                    const std::vector<int>& columns) {
  std::vector<SplitData> out;
  out.reserve(splits.size());
  for (const auto& s : splits) {
    SplitData d;
    d.train_x = in.x.select(s.train, columns);
    d.valid_x = in.x.select(s.valid, columns);
    d.test_x = in.x.select(s.test, columns);
    d.train_y = in.targets.subset(s.train);
    d.valid_y = in.targets.subset(s.valid);
    d.test_y = in.targets.subset(s.test);
    out.push_back(std::move(d));
  }
  return out;
}

// Same seed for a (parameter, split) pair whichever feature set it fits.
std::uint64_t fit_seed(std::uint64_t seed, std::size_t param, std::size_t split) {
  return derive_seed(derive_seed(seed, kStreamFit, param), split, 0);
}

SplitScores score(const GbtModel& model, const DenseMatrix& x, const TaskTargets& y) {
  SplitScores s;
  s.primary = task_metric(model, x, y);
  if (y.task == Task::kGrading) s.classification = classification_metrics(y.labels, predict_proba(model, x));
  return s;
}

// Mean over defined values; NaN when none is defined.
double defined_mean(const std::vector<double>& v) {
  double sum = 0.0;
  int n = 0;
  for (double x : v) {
    if (std::isnan(x)) continue;
    sum += x;
    ++n;
  }
  return n ? sum / n : nan();
}

bool better(double candidate, double incumbent) {
  if (std::isnan(candidate)) return false;
  return std::isnan(incumbent) || candidate > incumbent;
}

FeatureSetResult evaluate_set(const DownstreamInput& in, const DownstreamOptions& opt,
                              const DownstreamReport& rep, FeatureSet set,
                              std::vector<int> columns) {
  const auto data = slice_splits(in, rep.splits, columns);
  const std::size_t np = rep.sampled.size();
  const std::size_t ns = rep.splits.size();

  std::vector<double> valid(np * ns, nan());
  parallel_for(np * ns, opt.threads, [&](std::size_t unit) {
    const std::size_t p = unit / ns, s = unit % ns;
    const auto model =
        fit_task(data[s].train_x, data[s].train_y, rep.sampled[p], fit_seed(opt.seed, p, s));
    valid[unit] = task_metric(model, data[s].valid_x, data[s].valid_y);
  });

  FeatureSetResult r;
  r.set = set;
  r.columns = std::move(columns);
  r.mean_valid.resize(np);
  double best = nan();
  for (std::size_t p = 0; p < np; ++p) {
    r.mean_valid[p] = defined_mean({valid.begin() + p * ns, valid.begin() + (p + 1) * ns});
    if (better(r.mean_valid[p], best)) {
      best = r.mean_valid[p];
      r.winner = p;
    }
  }
  r.winner_params = rep.sampled[r.winner];
  r.winner_mean_valid = best;

  r.best_per_split.assign(ns, 0);
  for (std::size_t s = 0; s < ns; ++s) {
    double b = nan();
    for (std::size_t p = 0; p < np; ++p) {
      if (better(valid[p * ns + s], b)) {
        b = valid[p * ns + s];
        r.best_per_split[s] = p;
      }
    }
  }

  r.per_split.resize(ns);
  parallel_for(ns, opt.threads, [&](std::size_t s) {
    const auto model = fit_task(data[s].train_x, data[s].train_y, r.winner_params,
                                fit_seed(opt.seed, r.winner, s));
    r.per_split[s].valid = score(model, data[s].valid_x, data[s].valid_y);
    r.per_split[s].test = score(model, data[s].test_x, data[s].test_y);
  });
  return r;
}

// Per split: the parameter set with the best validation score on that
// split, refit, then permuted on the validation rows.
ImportanceReport importance_over_splits(const DownstreamInput& in, const DownstreamOptions& opt,
                                        const DownstreamReport& rep,
                                        const FeatureSetResult& all) {
  const auto data = slice_splits(in, rep.splits, all.columns);
  const std::size_t ns = rep.splits.size();
  std::vector<std::vector<double>> per_split(ns);
  parallel_for(ns, opt.threads, [&](std::size_t s) {
    const std::size_t p = all.best_per_split[s];
    const auto model =
        fit_task(data[s].train_x, data[s].train_y, rep.sampled[p], fit_seed(opt.seed, p, s));
    auto local = permutation_importance(model, data[s].valid_x, data[s].valid_y, task_metric,
                                        opt.n_perm, derive_seed(opt.seed, kStreamImportance, s));
    // Back to feature ids.
    std::vector<double> full(kNumFeatures, 0.0);
    for (std::size_t c = 0; c < all.columns.size(); ++c) full[all.columns[c]] = local[c];
    per_split[s] = std::move(full);
  });
  return select_features(std::move(per_split));
}

std::vector<double> test_primary(const FeatureSetResult& r) {
  std::vector<double> v;
  for (const auto& s : r.per_split) v.push_back(s.test.primary);
  return v;
}

}  // namespace

DownstreamReport run_downstream(const DownstreamInput& in, const DownstreamOptions& opt) {
  const std::size_t n = in.patient_ids.size();
  if (in.x.rows() != n || in.targets.size() != n) {
    throw Error(ErrorCode::kLengthMismatch, "patients, features and targets differ in length");
  }
  if (in.x.cols() != static_cast<std::size_t>(kNumFeatures)) {
    throw Error(ErrorCode::kWidthMismatch, "expected " + std::to_string(kNumFeatures) +
                                               " feature columns, got " +
                                               std::to_string(in.x.cols()));
  }
  if (in.targets.task == Task::kGrading) {
    std::vector<int> distinct(static_cast<std::size_t>(in.targets.num_classes), 0);
    for (int y : in.targets.labels) {
      if (y < 0 || y >= in.targets.num_classes) {
        throw Error(ErrorCode::kInvariantViolation, "grade " + std::to_string(y) + " out of range");
      }
      distinct[static_cast<std::size_t>(y)] = 1;
    }
    if (std::accumulate(distinct.begin(), distinct.end(), 0) < 2) {
      throw Error(ErrorCode::kDegenerateTargets, "all patients share one grade");
    }
  } else {
    bool any = false;
    for (const auto& s : in.targets.survival) any = any || s.event;
    if (!any) throw Error(ErrorCode::kDegenerateTargets, "no events in the survival data");
  }

  DownstreamReport rep;
  std::optional<std::vector<int>> strata;
  if (in.targets.task == Task::kGrading) strata = in.targets.labels;
  rep.splits = make_cv_splits(n, strata, derive_seed(opt.seed, kStreamSplits, 0), opt.folds,
                              opt.repeats);
  rep.sampled = sample_hyperparameters(opt.search_n, derive_seed(opt.seed, kStreamParams, 0));

  const FeatureSet requested = opt.feature_set.value_or(FeatureSet::kSelected);
  if (requested != FeatureSet::kSelected) {
    rep.results.push_back(
        evaluate_set(in, opt, rep, requested, feature_set_columns(requested)));
    return rep;
  }

  rep.results.push_back(
      evaluate_set(in, opt, rep, FeatureSet::kAll, feature_set_columns(FeatureSet::kAll)));
  rep.importance = importance_over_splits(in, opt, rep, rep.results.front());
  if (rep.importance->degenerate) return rep;
  rep.results.push_back(
      evaluate_set(in, opt, rep, FeatureSet::kSelected, rep.importance->selected_ids));
  rep.selected_vs_all = paired_t_test(test_primary(rep.results[1]), test_primary(rep.results[0]));
  return rep;
}

namespace {

nlohmann::ordered_json number_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

nlohmann::ordered_json to_json(const SplitScores& s, Task task) {
  nlohmann::ordered_json j;
  j[task == Task::kGrading ? "qwk" : "c_index"] = number_or_null(s.primary);
  if (s.classification) {
    j["mf1"] = number_or_null(s.classification->mf1);
    j["map"] = number_or_null(s.classification->map);
    j["classes"] = to_json(*s.classification)["per_class"];
  }
  return j;
}

nlohmann::ordered_json summary(const std::vector<double>& v) {
  std::vector<double> d;
  for (double x : v) {
    if (!std::isnan(x)) d.push_back(x);
  }
  nlohmann::ordered_json j;
  j["n"] = d.size();
  if (d.empty()) {
    j["mean"] = nullptr;
    j["std"] = nullptr;
    return j;
  }
  double mean = 0.0;
  for (double x : d) mean += x;
  mean /= static_cast<double>(d.size());
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  j["mean"] = number_or_null(mean);
  j["std"] = number_or_null(std::sqrt(ss / static_cast<double>(d.size())));
  return j;
}

}  // namespace

nlohmann::ordered_json to_json(const DownstreamReport& rep, const DownstreamInput& in) {
  const Task task = in.targets.task;
  const char* metric = task == Task::kGrading ? "qwk" : "c_index";
  nlohmann::ordered_json j;
  j["task"] = std::string(to_string(task));
  j["metric"] = metric;
  j["patients"] = in.patient_ids.size();

  auto splits = nlohmann::ordered_json::array();
  for (const auto& s : rep.splits) splits.push_back(to_json(s, in.patient_ids));
  j["splits"] = std::move(splits);
  j["search_size"] = rep.sampled.size();

  auto sets = nlohmann::ordered_json::array();
  for (const auto& r : rep.results) {
    nlohmann::ordered_json js;
    js["feature_set"] = std::string(feature_set_tag(r.set));
    js["num_features"] = r.columns.size();
    js["columns"] = r.columns;
    js["winner_index"] = r.winner;
    js["winner_params"] = to_json(r.winner_params);
    js["winner_mean_valid"] = number_or_null(r.winner_mean_valid);
    auto per = nlohmann::ordered_json::array();
    std::vector<double> valid, test, test_mf1, test_map;
    for (std::size_t s = 0; s < r.per_split.size(); ++s) {
      const auto& o = r.per_split[s];
      per.push_back({{"fold", rep.splits[s].fold},
                     {"repeat", rep.splits[s].repeat},
                     {"best_param_index", r.best_per_split[s]},
                     {"valid", to_json(o.valid, task)},
                     {"test", to_json(o.test, task)}});
      valid.push_back(o.valid.primary);
      test.push_back(o.test.primary);
      if (o.test.classification) {
        test_mf1.push_back(o.test.classification->mf1);
        test_map.push_back(o.test.classification->map);
      }
    }
    js["per_split"] = std::move(per);
    nlohmann::ordered_json sm;
    sm[std::string("valid_") + metric] = summary(valid);
    sm[std::string("test_") + metric] = summary(test);
    if (task == Task::kGrading) {
      sm["test_mf1"] = summary(test_mf1);
      sm["test_map"] = summary(test_map);
    }
    js["summary"] = std::move(sm);
    sets.push_back(std::move(js));
  }
  j["feature_sets"] = std::move(sets);
  j["importance"] = rep.importance ? to_json(*rep.importance, in.feature_names)
                                   : nlohmann::ordered_json(nullptr);
  j["selected_vs_all"] =
      rep.selected_vs_all ? to_json(*rep.selected_vs_all) : nlohmann::ordered_json(nullptr);
  return j;
}

}  // namespace conic
