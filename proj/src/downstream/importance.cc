#include "conic/downstream/importance.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "conic/parallel.h"

namespace conic {

std::vector<double> permutation_importance(const GbtModel& model, const DenseMatrix& x,
                                           const TaskTargets& targets, const TaskMetric& metric,
                                           int n_perm, std::uint64_t seed, int threads) {
  if (n_perm < 1) throw Error(ErrorCode::kConfigError, "n_perm must be >= 1");
  const double baseline = metric(model, x, targets);
  std::vector<double> out(x.cols(), 0.0);
  if (std::isnan(baseline)) return out;

  parallel_for(x.cols(), threads, [&](std::size_t f) {
    if (!model.uses_feature(static_cast<int>(f))) return;
    std::mt19937_64 rng(derive_seed(seed, f));
    DenseMatrix shuffled = x;
    std::vector<double> column(x.rows());
    double mean = 0.0, count = 0.0;
    for (int k = 0; k < n_perm; ++k) {
      for (std::size_t r = 0; r < x.rows(); ++r) column[r] = x(r, f);
      std::shuffle(column.begin(), column.end(), rng);
      for (std::size_t r = 0; r < x.rows(); ++r) shuffled(r, f) = column[r];
      const double m = metric(model, shuffled, targets);
      if (std::isnan(m)) continue;
      count += 1.0;
      mean += (m - mean) / count;
    }
    if (count > 0.0) out[f] = baseline - mean;
  });
  return out;
}

ImportanceReport select_features(std::vector<std::vector<double>> per_split) {
  if (per_split.empty()) throw Error(ErrorCode::kEmptyDataset, "no importance vectors");
  const std::size_t width = per_split.front().size();
  if (width == 0) throw Error(ErrorCode::kWidthMismatch, "importance vectors are empty");
  for (std::size_t s = 0; s < per_split.size(); ++s) {
    if (per_split[s].size() != width) {
      throw Error(ErrorCode::kWidthMismatch, "split " + std::to_string(s) + " has " +
                                                 std::to_string(per_split[s].size()) +
                                                 " importances, expected " +
                                                 std::to_string(width));
    }
  }
  ImportanceReport rep;
  rep.aggregated_mean.resize(width);
  std::vector<double> values(per_split.size());
  for (std::size_t f = 0; f < width; ++f) {
    for (std::size_t s = 0; s < per_split.size(); ++s) values[s] = per_split[s][f];
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    rep.aggregated_mean[f] = sum / static_cast<double>(values.size());
  }
  std::vector<double> sorted = rep.aggregated_mean;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = width / 2;
  rep.median = width % 2 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2.0;
  rep.selected.resize(width);
  for (std::size_t f = 0; f < width; ++f) {
    rep.selected[f] = rep.aggregated_mean[f] > rep.median;
    if (rep.selected[f]) rep.selected_ids.push_back(static_cast<int>(f));
  }
  rep.degenerate = rep.selected_ids.empty();
  rep.per_split = std::move(per_split);
  return rep;
}

nlohmann::ordered_json to_json(const ImportanceReport& r, std::span<const std::string> names) {
  nlohmann::ordered_json j;
  j["median"] = r.median;
  j["degenerate"] = r.degenerate;
  j["selected_ids"] = r.selected_ids;
  auto features = nlohmann::ordered_json::array();
  for (std::size_t f = 0; f < r.aggregated_mean.size(); ++f) {
    nlohmann::ordered_json e;
    e["id"] = f;
    if (f < names.size()) e["name"] = names[f];
    e["aggregated_mean"] = r.aggregated_mean[f];
    e["selected"] = static_cast<bool>(r.selected[f]);
    auto splits = nlohmann::ordered_json::array();
    for (const auto& s : r.per_split) splits.push_back(s[f]);
    e["per_split"] = std::move(splits);
    features.push_back(std::move(e));
  }
  j["features"] = std::move(features);
  return j;
}

}  // namespace conic
