#include "conic/downstream/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

namespace conic {

namespace {

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

nlohmann::ordered_json number_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

}  // namespace

std::optional<double> qwk(std::span<const int> y_true, std::span<const int> y_pred,
                          int num_classes) {
  if (y_true.size() != y_pred.size()) {
    throw Error(ErrorCode::kLengthMismatch, std::to_string(y_true.size()) + " truths vs " +
                                                std::to_string(y_pred.size()) + " predictions");
  }
  if (y_true.empty()) throw Error(ErrorCode::kEmptyDataset, "qwk of no samples");
  int k = num_classes;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_true[i] < 0 || y_pred[i] < 0) {
      throw Error(ErrorCode::kInvariantViolation, "negative class label");
    }
    k = std::max({k, y_true[i] + 1, y_pred[i] + 1});
  }
  const auto ku = static_cast<std::size_t>(k);
  std::vector<std::int64_t> rows(ku, 0), cols(ku, 0);
  // Weights (i-j)^2 / (K-1)^2: the normalisation cancels, so both sums stay
  // in integers and the ratio is formed once.
  std::int64_t observed = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const std::int64_t d = y_true[i] - y_pred[i];
    observed += d * d;
    ++rows[static_cast<std::size_t>(y_true[i])];
    ++cols[static_cast<std::size_t>(y_pred[i])];
  }
  long double expected = 0.0L;
  for (std::size_t i = 0; i < ku; ++i) {
    for (std::size_t j = 0; j < ku; ++j) {
      const long double d = static_cast<long double>(i) - static_cast<long double>(j);
      expected += d * d * static_cast<long double>(rows[i]) * static_cast<long double>(cols[j]);
    }
  }
  if (expected == 0.0L) return std::nullopt;
  const long double n = static_cast<long double>(y_true.size());
  return static_cast<double>(1.0L - n * static_cast<long double>(observed) / expected);
}

int argmax(std::span<const double> row) {
  int best = 0;
  for (std::size_t c = 1; c < row.size(); ++c) {
    if (row[c] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
  }
  return best;
}

double average_precision(std::span<const int> positive, std::span<const double> score) {
  std::vector<std::size_t> order(score.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  const double total_pos =
      static_cast<double>(std::count_if(positive.begin(), positive.end(), [](int p) { return p; }));
  if (total_pos == 0.0) return nan();
  double ap = 0.0, tp = 0.0, seen = 0.0, prev_recall = 0.0;
  std::size_t q = 0;
  while (q < order.size()) {
    const double s = score[order[q]];
    while (q < order.size() && score[order[q]] == s) {
      tp += positive[order[q]] ? 1.0 : 0.0;
      seen += 1.0;
      ++q;
    }
    const double recall = tp / total_pos;
    ap += (recall - prev_recall) * (tp / seen);
    prev_recall = recall;
  }
  return ap;
}

ClassificationReport classification_metrics(std::span<const int> y_true,
                                            const DenseMatrix& probs) {
  if (y_true.size() != probs.rows()) {
    throw Error(ErrorCode::kLengthMismatch, std::to_string(y_true.size()) + " labels for " +
                                                std::to_string(probs.rows()) + " rows");
  }
  const std::size_t k = probs.cols();
  std::vector<int> pred(y_true.size());
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = argmax(probs.row(i));

  ClassificationReport rep;
  rep.per_class.resize(k);
  double f1_sum = 0.0, ap_sum = 0.0;
  int ap_count = 0;
  std::vector<int> positive(y_true.size());
  std::vector<double> column(y_true.size());
  for (std::size_t c = 0; c < k; ++c) {
    const int ci = static_cast<int>(c);
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      const bool t = y_true[i] == ci, p = pred[i] == ci;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
      positive[i] = t ? 1 : 0;
      column[i] = probs(i, c);
    }
    auto& s = rep.per_class[c];
    if (tp + fp + fn == 0) {
      s.f1 = 0.0;
      s.f1_flagged = true;
    } else {
      s.f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    }
    f1_sum += s.f1;
    s.ap = average_precision(positive, column);
    s.ap_defined = !std::isnan(s.ap);
    if (s.ap_defined) {
      ap_sum += s.ap;
      ++ap_count;
    }
  }
  rep.mf1 = k ? f1_sum / static_cast<double>(k) : nan();
  rep.map = ap_count ? ap_sum / ap_count : nan();
  return rep;
}

double c_index(std::span<const double> risk, std::span<const SurvivalRecord> records) {
  if (risk.size() != records.size()) {
    throw Error(ErrorCode::kLengthMismatch, std::to_string(risk.size()) + " risks for " +
                                                std::to_string(records.size()) + " records");
  }
  std::int64_t comparable = 0, concordant2 = 0;  // concordant counted in halves
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].event) continue;
    for (std::size_t j = 0; j < records.size(); ++j) {
      if (!(records[i].time < records[j].time)) continue;
      ++comparable;
      if (risk[i] > risk[j]) {
        concordant2 += 2;
      } else if (risk[i] == risk[j]) {
        concordant2 += 1;
      }
    }
  }
  if (comparable == 0) throw Error(ErrorCode::kNoComparablePairs, "no comparable pairs");
  return static_cast<double>(concordant2) / (2.0 * static_cast<double>(comparable));
}

PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kLengthMismatch, "paired samples differ in length");
  }
  if (a.size() < 2) throw Error(ErrorCode::kEmptyDataset, "paired t-test needs 2 pairs");
  const double n = static_cast<double>(a.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  PairedTTest r;
  r.mean_difference = mean;
  r.df = static_cast<int>(a.size()) - 1;
  const double se = std::sqrt(ss / (n - 1.0) / n);
  if (se == 0.0) {
    r.t = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    r.p_value = mean == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t = mean / se;
  boost::math::students_t dist(static_cast<double>(r.df));
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  return r;
}

nlohmann::ordered_json to_json(const ClassificationReport& r) {
  nlohmann::ordered_json j;
  auto per = nlohmann::ordered_json::array();
  for (const auto& s : r.per_class) {
    per.push_back({{"f1", s.f1},
                   {"f1_flagged", s.f1_flagged},
                   {"ap", number_or_null(s.ap)},
                   {"ap_defined", s.ap_defined}});
  }
  j["per_class"] = std::move(per);
  j["mf1"] = number_or_null(r.mf1);
  j["map"] = number_or_null(r.map);
  return j;
}

nlohmann::ordered_json to_json(const PairedTTest& t) {
  return {{"mean_difference", number_or_null(t.mean_difference)},
          {"t", number_or_null(t.t)},
          {"df", t.df},
          {"p_value", number_or_null(t.p_value)}};
}

}  // namespace conic
