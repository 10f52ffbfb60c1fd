#include "conic/spatial.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "conic/parallel.h"

namespace conic {

namespace {

// Geometric slack in cell units; far above coordinate rounding, far below
// any meaningful distance.
constexpr double kSlack = 1e-9;
constexpr std::size_t kMaxCells = std::size_t{1} << 23;

}  // namespace

SpatialIndex::SpatialIndex(std::span<const SpatialPoint> points, double cell_size) {
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) {
    throw Error(ErrorCode::kNonPositiveRadius, "cell size must be positive");
  }
  if (points.size() >= std::size_t{1} << 31) {
    throw Error(ErrorCode::kInvariantViolation, "too many points for one index");
  }
  double xmin = 0.0, xmax = 0.0, ymin = 0.0, ymax = 0.0;
  if (!points.empty()) {
    xmin = xmax = points[0].x;
    ymin = ymax = points[0].y;
  }
  for (const auto& p : points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw Error(ErrorCode::kInvariantViolation, "non-finite centroid");
    }
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  // Coarsen sparse layouts so the bucket table stays proportional to the
  // point count; only speed depends on the cell size.
  const std::size_t cap = std::min(2 * points.size() + 4096, kMaxCells);
  cell_ = cell_size;
  for (;;) {
    const double cols = std::floor((xmax - xmin) / cell_) + 1.0;
    const double rows = std::floor((ymax - ymin) / cell_) + 1.0;
    if (cols * rows <= static_cast<double>(cap)) {
      cols_ = static_cast<int>(cols);
      rows_ = static_cast<int>(rows);
      break;
    }
    cell_ *= 2.0;
  }
  x0_ = xmin;
  y0_ = ymin;

  const std::size_t n_cells = static_cast<std::size_t>(rows_) * cols_;
  std::vector<std::uint32_t> cell_of(points.size());
  cell_start_.assign(n_cells + 1, 0);
  for (std::size_t k = 0; k < points.size(); ++k) {
    cell_of[k] = static_cast<std::uint32_t>(static_cast<std::size_t>(row_of(points[k].y)) * cols_ +
                                            col_of(points[k].x));
    ++cell_start_[cell_of[k] + 1];
  }
  for (std::size_t c = 0; c < n_cells; ++c) cell_start_[c + 1] += cell_start_[c];

  xs_.resize(points.size());
  ys_.resize(points.size());
  cls_.resize(points.size());
  ids_.resize(points.size());
  std::vector<std::uint32_t> fill(cell_start_.begin(), cell_start_.end() - 1);
  for (std::size_t k = 0; k < points.size(); ++k) {
    const std::uint32_t slot = fill[cell_of[k]]++;
    xs_[slot] = points[k].x;
    ys_[slot] = points[k].y;
    cls_[slot] = static_cast<std::uint8_t>(points[k].cls);
    ids_[slot] = points[k].id;
  }

  row_prefix_.assign(static_cast<std::size_t>(rows_) * (cols_ + 1), {});
  for (int i = 0; i < rows_; ++i) {
    auto* prefix = &row_prefix_[static_cast<std::size_t>(i) * (cols_ + 1)];
    for (int j = 0; j < cols_; ++j) {
      prefix[j + 1] = prefix[j];
      const std::size_t c = static_cast<std::size_t>(i) * cols_ + j;
      for (std::uint32_t k = cell_start_[c]; k < cell_start_[c + 1]; ++k) {
        ++prefix[j + 1][cls_[k] - 1];
      }
    }
  }
}

int SpatialIndex::col_of(double x) const {
  const double u = std::floor((x - x0_) / cell_);
  return static_cast<int>(std::clamp(u, 0.0, static_cast<double>(cols_ - 1)));
}

int SpatialIndex::row_of(double y) const {
  const double v = std::floor((y - y0_) / cell_);
  return static_cast<int>(std::clamp(v, 0.0, static_cast<double>(rows_ - 1)));
}

NeighborCounts SpatialIndex::count_within(double x, double y, double radius) const {
  if (!(radius > 0.0)) {
    throw Error(ErrorCode::kNonPositiveRadius, "radius must be positive");
  }
  NeighborCounts out{};
  if (xs_.empty()) return out;
  const double r2 = radius * radius;
  const double ru = radius / cell_;
  const double ru2 = ru * ru;
  const double ux = (x - x0_) / cell_;
  const double uy = (y - y0_) / cell_;

  auto scan = [&](std::size_t first_cell, std::size_t last_cell) {
    for (std::uint32_t k = cell_start_[first_cell]; k < cell_start_[last_cell + 1]; ++k) {
      const double dx = xs_[k] - x;
      const double dy = ys_[k] - y;
      if (dx * dx + dy * dy <= r2) ++out[cls_[k] - 1];
    }
  };

  const int i_lo = static_cast<int>(std::max(0.0, std::floor(uy - ru - kSlack)));
  const int i_hi = static_cast<int>(
      std::min(static_cast<double>(rows_ - 1), std::floor(uy + ru + kSlack)));
  for (int i = i_lo; i <= i_hi; ++i) {
    const double band_lo = i;
    const double band_hi = i + 1.0;
    const double dy_min = uy < band_lo ? band_lo - uy : (uy > band_hi ? uy - band_hi : 0.0);
    const double dy_max = std::max(std::abs(uy - band_lo), std::abs(uy - band_hi));
    if (dy_min > ru + kSlack) continue;

    const double w_out = std::sqrt(std::max(0.0, ru2 - dy_min * dy_min)) + kSlack;
    const double j_lo_f = std::floor(ux - w_out);
    const double j_hi_f = std::floor(ux + w_out);
    if (j_hi_f < 0.0 || j_lo_f > cols_ - 1) continue;
    const int j_lo = static_cast<int>(std::max(0.0, j_lo_f));
    const int j_hi = static_cast<int>(std::min(static_cast<double>(cols_ - 1), j_hi_f));

    int in_lo = 1, in_hi = 0;
    const double inner = ru2 * (1.0 - kSlack) - dy_max * dy_max;
    if (inner > 0.0) {
      const double w_in = std::sqrt(inner) - kSlack;
      if (w_in > 0.0) {
        in_lo = std::max(j_lo, static_cast<int>(std::ceil(ux - w_in)));
        in_hi = std::min(j_hi, static_cast<int>(std::floor(ux + w_in)) - 1);
      }
    }
    const std::size_t row_base = static_cast<std::size_t>(i) * cols_;
    if (in_lo > in_hi) {
      scan(row_base + j_lo, row_base + j_hi);
      continue;
    }
    const auto* prefix = &row_prefix_[static_cast<std::size_t>(i) * (cols_ + 1)];
    for (int c = 0; c < kNumClasses; ++c) out[c] += prefix[in_hi + 1][c] - prefix[in_lo][c];
    if (j_lo < in_lo) scan(row_base + j_lo, row_base + in_lo - 1);
    if (in_hi < j_hi) scan(row_base + in_hi + 1, row_base + j_hi);
  }
  return out;
}

bool SpatialIndex::contains(const SpatialPoint& p) const {
  if (xs_.empty() || !std::isfinite(p.x) || !std::isfinite(p.y)) return false;
  const std::size_t c = bucket_of(p.x, p.y);
  for (std::uint32_t k = cell_start_[c]; k < cell_start_[c + 1]; ++k) {
    if (ids_[k] == p.id && xs_[k] == p.x && ys_[k] == p.y &&
        cls_[k] == static_cast<std::uint8_t>(p.cls)) {
      return true;
    }
  }
  return false;
}

std::size_t SpatialIndex::bucket_of(double x, double y) const {
  return static_cast<std::size_t>(row_of(y)) * cols_ + col_of(x);
}

std::vector<SpatialPoint> SpatialIndex::bucket_points(std::size_t bucket) const {
  std::vector<SpatialPoint> out;
  if (bucket + 1 >= cell_start_.size()) return out;
  for (std::uint32_t k = cell_start_[bucket]; k < cell_start_[bucket + 1]; ++k) {
    out.push_back({xs_[k], ys_[k], static_cast<NucleusClass>(cls_[k]), ids_[k]});
  }
  return out;
}

NeighborCounts neighbor_counts(const SpatialIndex& index, const SpatialPoint& center,
                               double radius_um) {
  if (!(radius_um > 0.0)) {
    throw Error(ErrorCode::kNonPositiveRadius,
                "radius " + std::to_string(radius_um) + " must be positive");
  }
  NeighborCounts counts = index.count_within(center.x, center.y, radius_um);
  if (index.contains(center)) --counts[class_index(center.cls)];
  return counts;
}

SpatialPoint to_spatial_point(const NucleusRecord& record) {
  return {record.centroid_x_um, record.centroid_y_um, record.cls, record.nucleus_id};
}

NeighborCounts neighbor_counts(const SpatialIndex& index, const NucleusRecord& center,
                               double radius_um) {
  return neighbor_counts(index, to_spatial_point(center), radius_um);
}

namespace {

struct CountMoments {
  // [radius][center class][neighbor class]
  std::vector<std::array<std::array<std::int64_t, kNumClasses>, kNumClasses>> sum;
  std::vector<std::array<std::array<std::int64_t, kNumClasses>, kNumClasses>> sumsq;
  std::array<std::int64_t, kNumClasses> centers{};

  explicit CountMoments(std::size_t radii) : sum(radii), sumsq(radii) {}

  CountMoments& operator+=(const CountMoments& o) {
    for (std::size_t r = 0; r < sum.size(); ++r) {
      for (int a = 0; a < kNumClasses; ++a) {
        for (int b = 0; b < kNumClasses; ++b) {
          sum[r][a][b] += o.sum[r][a][b];
          sumsq[r][a][b] += o.sumsq[r][a][b];
        }
      }
    }
    for (int a = 0; a < kNumClasses; ++a) centers[a] += o.centers[a];
    return *this;
  }
};

void validate_radii(std::span<const double> radii) {
  if (radii.empty()) throw Error(ErrorCode::kNonPositiveRadius, "no radii given");
  for (double r : radii) {
    if (!(r > 0.0)) {
      throw Error(ErrorCode::kNonPositiveRadius,
                  "radius " + std::to_string(r) + " must be positive");
    }
  }
}

}  // namespace

std::vector<double> colocalisation_features(std::span<const std::vector<SpatialPoint>> slides,
                                            std::span<const double> radii_um, int threads) {
  validate_radii(radii_um);
  const double min_radius = *std::min_element(radii_um.begin(), radii_um.end());
  CountMoments total(radii_um.size());

  for (const auto& slide : slides) {
    if (slide.empty()) continue;
    const SpatialIndex index(slide, min_radius / 4.0);
    constexpr std::size_t kChunk = 4096;
    const std::size_t n_chunks = (index.size() + kChunk - 1) / kChunk;
    std::vector<CountMoments> partial(n_chunks, CountMoments(radii_um.size()));
    parallel_for(n_chunks, threads, [&](std::size_t chunk) {
      auto& acc = partial[chunk];
      const std::size_t end = std::min(index.size(), (chunk + 1) * kChunk);
      for (std::size_t k = chunk * kChunk; k < end; ++k) {
        const int center = class_index(index.stored_class(k));
        ++acc.centers[center];
        for (std::size_t r = 0; r < radii_um.size(); ++r) {
          auto counts = index.count_within(index.stored_x(k), index.stored_y(k), radii_um[r]);
          --counts[center];  // the centre itself
          for (int b = 0; b < kNumClasses; ++b) {
            acc.sum[r][center][b] += counts[b];
            acc.sumsq[r][center][b] += counts[b] * counts[b];
          }
        }
      }
    });
    for (const auto& p : partial) total += p;
  }

  std::vector<double> out(radii_um.size() * 72, kMissing);
  std::size_t slot = 0;
  for (std::size_t r = 0; r < radii_um.size(); ++r) {
    for (NucleusClass center : kClassesFeatureOrder) {
      const int a = class_index(center);
      const std::int64_t n = total.centers[a];
      for (int b = 0; b < kNumClasses; ++b, slot += 2) {
        if (n == 0) continue;
        const __int128 s = total.sum[r][a][b];
        const __int128 scaled_var = static_cast<__int128>(n) * total.sumsq[r][a][b] - s * s;
        const double nd = static_cast<double>(n);
        out[slot] = static_cast<double>(total.sum[r][a][b]) / nd;
        out[slot + 1] = std::sqrt(static_cast<double>(scaled_var)) / nd;
      }
    }
  }
  return out;
}

std::vector<double> colocalisation_features(std::span<const NucleusRecord> nuclei,
                                            std::span<const double> radii_um, int threads) {
  std::map<std::string, std::vector<SpatialPoint>> by_slide;
  for (const auto& n : nuclei) by_slide[n.image_id].push_back(to_spatial_point(n));
  std::vector<std::vector<SpatialPoint>> slides;
  slides.reserve(by_slide.size());
  for (auto& [id, points] : by_slide) slides.push_back(std::move(points));
  return colocalisation_features(slides, radii_um, threads);
}

std::array<double, kNumClasses> density_features(const NeighborCounts& class_totals) {
  std::array<double, kNumClasses> out;
  out.fill(kMissing);
  std::int64_t total = 0;
  for (auto c : class_totals) total += c;
  if (total == 0) return out;
  for (int i = 0; i < kNumClasses; ++i) {
    const NucleusClass c = kClassesFeatureOrder[i];
    out[i] = static_cast<double>(class_totals[class_index(c)]) / static_cast<double>(total);
  }
  return out;
}

std::array<double, kNumClasses> density_features(std::span<const NucleusRecord> nuclei) {
  NeighborCounts totals{};
  for (const auto& n : nuclei) ++totals[class_index(n.cls)];
  return density_features(totals);
}

}  // namespace conic
