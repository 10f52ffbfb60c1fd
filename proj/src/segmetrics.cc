#include "conic/segmetrics.h"

#include <limits>
#include <unordered_map>

namespace conic {

namespace {

struct InstanceInfo {
  std::int64_t area = 0;
  std::uint8_t cls = 0;
};

std::unordered_map<std::uint32_t, InstanceInfo> instance_table(
    const LabeledInstanceGrid& grid) {
  std::unordered_map<std::uint32_t, InstanceInfo> table;
  const auto inst = grid.instance_labels();
  const auto cls = grid.class_labels();
  for (std::size_t i = 0; i < inst.size(); ++i) {
    if (inst[i] == 0) continue;
    auto& info = table[inst[i]];
    ++info.area;
    info.cls = cls[i];
  }
  return table;
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

MatchStats match_instances(const LabeledInstanceGrid& gt, const LabeledInstanceGrid& pred) {
  if (gt.height() != pred.height() || gt.width() != pred.width()) {
    throw Error(ErrorCode::kShapeMismatch,
                "gt is " + std::to_string(gt.height()) + "x" + std::to_string(gt.width()) +
                    ", prediction is " + std::to_string(pred.height()) + "x" +
                    std::to_string(pred.width()));
  }
  const auto gt_info = instance_table(gt);
  const auto pred_info = instance_table(pred);

  // One pass over pixels: intersection size of every co-occurring label pair.
  std::unordered_map<std::uint64_t, std::int64_t> overlap;
  const auto g = gt.instance_labels();
  const auto p = pred.instance_labels();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (g[i] == 0 || p[i] == 0) continue;
    ++overlap[(static_cast<std::uint64_t>(g[i]) << 32) | p[i]];
  }

  MatchStats stats;
  for (const auto& [label, info] : gt_info) ++stats.per_class[info.cls - 1].fn;
  for (const auto& [label, info] : pred_info) ++stats.per_class[info.cls - 1].fp;

  // Matched IoUs are summed in sorted order so the result does not depend on
  // label numbering or hash iteration order.
  std::array<std::vector<double>, kNumClasses> matched;
  for (const auto& [key, inter] : overlap) {
    const auto& gi = gt_info.at(static_cast<std::uint32_t>(key >> 32));
    const auto& pi = pred_info.at(static_cast<std::uint32_t>(key & 0xffffffffu));
    if (gi.cls != pi.cls) continue;
    const std::int64_t uni = gi.area + pi.area - inter;
    if (2 * inter <= uni) continue;  // IoU > 0.5 only
    auto& s = stats.per_class[gi.cls - 1];
    ++s.tp;
    --s.fn;
    --s.fp;
    matched[gi.cls - 1].push_back(static_cast<double>(inter) / static_cast<double>(uni));
  }
  for (int c = 0; c < kNumClasses; ++c) {
    std::sort(matched[c].begin(), matched[c].end());
    for (double iou : matched[c]) stats.per_class[c].iou_sum += iou;
  }
  return stats;
}

PqBreakdown panoptic_quality(const MatchStats& stats) {
  PqBreakdown out;
  double pq_sum = 0.0, dq_sum = 0.0, sq_sum = 0.0;
  int defined = 0;
  for (int i = 0; i < kNumClasses; ++i) {
    const auto& s = stats.per_class[i];
    auto& q = out.per_class[i];
    q.stats = s;
    q.defined = (s.tp + s.fp + s.fn) > 0;
    if (!q.defined) {
      q.pq = q.dq = q.sq = nan();
      out.undefined_classes.push_back(class_at(i));
      continue;
    }
    const double tp = static_cast<double>(s.tp);
    q.dq = tp / (tp + 0.5 * static_cast<double>(s.fp) + 0.5 * static_cast<double>(s.fn));
    q.sq = s.tp > 0 ? s.iou_sum / tp : 0.0;
    q.pq = q.dq * q.sq;
    pq_sum += q.pq;
    dq_sum += q.dq;
    sq_sum += q.sq;
    ++defined;
  }
  if (defined == 0) {
    out.mpq_plus = out.mdq_plus = out.msq_plus = nan();
  } else {
    out.mpq_plus = pq_sum / defined;
    out.mdq_plus = dq_sum / defined;
    out.msq_plus = sq_sum / defined;
  }
  return out;
}

PqBreakdown aggregate_mpq(std::span<const MatchStats> per_image, bool strict) {
  if (per_image.empty()) throw Error(ErrorCode::kEmptyDataset, "no images to aggregate");
  MatchStats total;
  for (const auto& s : per_image) total += s;
  PqBreakdown out = panoptic_quality(total);
  if (strict && !out.undefined_classes.empty()) {
    throw Error(ErrorCode::kEmptyDataset,
                "class '" + std::string(class_name(out.undefined_classes.front())) +
                    "' has no instances in the dataset");
  }
  return out;
}

namespace {

nlohmann::ordered_json number_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

}  // namespace

nlohmann::ordered_json to_json(const PqBreakdown& b) {
  nlohmann::ordered_json j;
  for (NucleusClass c : kClassesById) {
    const auto& q = b[c];
    nlohmann::ordered_json entry;
    entry["pq"] = number_or_null(q.pq);
    entry["dq"] = number_or_null(q.dq);
    entry["sq"] = number_or_null(q.sq);
    entry["tp"] = q.stats.tp;
    entry["fp"] = q.stats.fp;
    entry["fn"] = q.stats.fn;
    j[std::string(class_name(c))] = std::move(entry);
  }
  j["mpq_plus"] = number_or_null(b.mpq_plus);
  j["mdq_plus"] = number_or_null(b.mdq_plus);
  j["msq_plus"] = number_or_null(b.msq_plus);
  auto undefined = nlohmann::ordered_json::array();
  for (NucleusClass c : b.undefined_classes) undefined.push_back(class_name(c));
  j["undefined_classes"] = std::move(undefined);
  return j;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::kEmptyDataset, "percentile of nothing");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

BootstrapResult summarize_bootstrap(std::vector<double> samples) {
  BootstrapResult r;
  // Running mean: exact when every sample is identical.
  double count = 0.0;
  for (double s : samples) {
    count += 1.0;
    r.mean += (s - r.mean) / count;
  }
  r.lo = percentile(samples, 2.5);
  r.hi = percentile(samples, 97.5);
  r.samples = std::move(samples);
  return r;
}

nlohmann::ordered_json to_json(const BootstrapResult& r) {
  nlohmann::ordered_json j;
  j["n"] = r.samples.size();
  j["mean"] = number_or_null(r.mean);
  j["lo"] = number_or_null(r.lo);
  j["hi"] = number_or_null(r.hi);
  auto samples = nlohmann::ordered_json::array();
  for (double s : r.samples) samples.push_back(number_or_null(s));
  j["samples"] = std::move(samples);
  return j;
}

}  // namespace conic
