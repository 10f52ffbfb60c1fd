#include "conic/countmetrics.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

namespace conic {

CropSpec CropSpec::central(int size, int grid_height, int grid_width) {
  return {(grid_height - size) / 2, (grid_width - size) / 2, size, size};
}

ClassCounts counts_from_segmentation(const LabeledInstanceGrid& grid, const CropSpec& crop,
                                     std::string image_id) {
  if (crop.top < 0 || crop.left < 0 || crop.height < 0 || crop.width < 0 ||
      crop.top + crop.height > grid.height() || crop.left + crop.width > grid.width()) {
    throw Error(ErrorCode::kCropOutOfBounds,
                "crop [" + std::to_string(crop.top) + "," + std::to_string(crop.left) +
                    " " + std::to_string(crop.height) + "x" + std::to_string(crop.width) +
                    "] does not fit a " + std::to_string(grid.height()) + "x" +
                    std::to_string(grid.width()) + " grid");
  }
  struct Membership {
    std::int64_t total = 0;
    std::int64_t inside = 0;
    std::uint8_t cls = 0;
  };
  std::unordered_map<std::uint32_t, Membership> members;
  for (int r = 0; r < grid.height(); ++r) {
    const bool row_in = r >= crop.top && r < crop.top + crop.height;
    for (int c = 0; c < grid.width(); ++c) {
      const std::uint32_t label = grid.instance_at(r, c);
      if (label == 0) continue;
      auto& m = members[label];
      ++m.total;
      m.cls = grid.class_at(r, c);
      if (row_in && c >= crop.left && c < crop.left + crop.width) ++m.inside;
    }
  }
  ClassCounts out;
  out.image_id = std::move(image_id);
  for (const auto& [label, m] : members) {
    if (2 * m.inside > m.total) ++out.counts[m.cls - 1];
  }
  return out;
}

CountMatrix to_count_matrix(std::span<const ClassCounts> rows) {
  CountMatrix m;
  m.reserve(rows.size());
  for (const auto& r : rows) {
    std::array<double, kNumClasses> row{};
    for (int i = 0; i < kNumClasses; ++i) row[i] = static_cast<double>(r.counts[i]);
    m.push_back(row);
  }
  return m;
}

CompositionReport composition_metrics(const CountMatrix& pred, const CountMatrix& truth) {
  if (pred.size() != truth.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "prediction has " + std::to_string(pred.size()) + " images, truth has " +
                    std::to_string(truth.size()));
  }
  if (truth.size() < 2) {
    throw Error(ErrorCode::kTooFewImages, "composition metrics need at least 2 images");
  }
  const double n = static_cast<double>(truth.size());
  constexpr double kHalfPi = std::numbers::pi / 2.0;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  CompositionReport rep;
  double r2_sum = 0.0, mae_sum = 0.0, maape_sum = 0.0;
  int r2_count = 0, maape_count = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    auto& out = rep.per_class[c];
    double mean = 0.0;
    for (const auto& row : truth) mean += row[c];
    mean /= n;

    double abs_err = 0.0, arctan_sum = 0.0;
    int arctan_count = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const double t = truth[i][c];
      const double p = pred[i][c];
      const double err = t - p;
      out.rss += err * err;
      out.tss += (t - mean) * (t - mean);
      abs_err += std::abs(err);
      if (t == 0.0) {
        if (p == 0.0) {
          ++out.maape_skipped;
          continue;
        }
        arctan_sum += kHalfPi;
      } else {
        arctan_sum += std::atan(std::abs(err) / std::abs(t));
      }
      ++arctan_count;
    }
    out.mae = abs_err / n;
    mae_sum += out.mae;

    out.r2_defined = out.tss > 0.0;
    if (out.r2_defined) {
      out.r2 = 1.0 - out.rss / out.tss;
      r2_sum += out.r2;
      ++r2_count;
    } else {
      out.r2 = nan;
      rep.undefined_r2.push_back(class_at(c));
    }

    out.maape_defined = arctan_count > 0;
    if (out.maape_defined) {
      out.maape = arctan_sum / arctan_count;
      maape_sum += out.maape;
      ++maape_count;
    } else {
      out.maape = nan;
      rep.undefined_maape.push_back(class_at(c));
    }
  }
  rep.mr2 = r2_count ? r2_sum / r2_count : nan;
  rep.mmae = mae_sum / kNumClasses;
  rep.mmaape = maape_count ? maape_sum / maape_count : nan;
  return rep;
}

namespace {

nlohmann::ordered_json number_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

nlohmann::ordered_json class_list(const std::vector<NucleusClass>& classes) {
  auto arr = nlohmann::ordered_json::array();
  for (NucleusClass c : classes) arr.push_back(class_name(c));
  return arr;
}

}  // namespace

nlohmann::ordered_json to_json(const CompositionReport& rep) {
  nlohmann::ordered_json j;
  for (NucleusClass c : kClassesById) {
    const auto& m = rep[c];
    nlohmann::ordered_json e;
    e["r2"] = number_or_null(m.r2);
    e["mae"] = m.mae;
    e["maape"] = number_or_null(m.maape);
    e["maape_skipped"] = m.maape_skipped;
    j[std::string(class_name(c))] = std::move(e);
  }
  j["mr2"] = number_or_null(rep.mr2);
  j["mmae"] = rep.mmae;
  j["mmaape"] = number_or_null(rep.mmaape);
  j["undefined_r2"] = class_list(rep.undefined_r2);
  j["undefined_maape"] = class_list(rep.undefined_maape);
  j["maape_zero_truth_rule"] =
      "truth=0,pred=0 skipped; truth=0,pred!=0 contributes pi/2";
  return j;
}

}  // namespace conic
