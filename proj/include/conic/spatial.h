#pragma once

// Fixed-radius per-class neighbour counting over nucleus centroids, and the
// colocalisation (ids 72-215) and density (ids 216-221) feature blocks.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "conic/core.h"

namespace conic {

struct SpatialPoint {
  double x = 0.0;  // microns
  double y = 0.0;
  NucleusClass cls = NucleusClass::kConnective;
  std::int64_t id = 0;
};

// Counts in class-id order.
using NeighborCounts = std::array<std::int64_t, kNumClasses>;

// Uniform grid over the point bounding box. Points are stored sorted by
// cell (row-major), so every row of cells is one contiguous point range,
// and each row keeps prefix sums of per-class counts: cells that lie
// entirely inside a query disk are counted without visiting their points.
// Immutable after construction; safe for concurrent queries.
class SpatialIndex {
 public:
  SpatialIndex(std::span<const SpatialPoint> points, double cell_size);

  double cell_size() const { return cell_; }
  std::size_t size() const { return xs_.size(); }
  int grid_rows() const { return rows_; }
  int grid_cols() const { return cols_; }

  // Indexed points with |p - (x, y)| <= radius, per class. Exact: agrees
  // with a direct evaluation of dx*dx + dy*dy <= radius*radius.
  NeighborCounts count_within(double x, double y, double radius) const;

  // True when a point with this id and centroid is indexed.
  bool contains(const SpatialPoint& p) const;

  // Stored points in bucket order.
  double stored_x(std::size_t k) const { return xs_[k]; }
  double stored_y(std::size_t k) const { return ys_[k]; }
  NucleusClass stored_class(std::size_t k) const {
    return static_cast<NucleusClass>(cls_[k]);
  }

  // Bucket of a stored point (row-major cell id) and the stored points of a
  // bucket, for inspection.
  std::size_t bucket_of(double x, double y) const;
  std::vector<SpatialPoint> bucket_points(std::size_t bucket) const;

 private:
  int col_of(double x) const;
  int row_of(double y) const;

  double x0_ = 0.0;
  double y0_ = 0.0;
  double cell_ = 1.0;
  int rows_ = 1;
  int cols_ = 1;
  std::vector<std::uint32_t> cell_start_;  // rows*cols + 1 offsets
  // Per row, cols+1 prefix entries of per-class counts.
  std::vector<std::array<std::int32_t, kNumClasses>> row_prefix_;
  std::vector<double> xs_;
  std::vector<double> ys_;
  std::vector<std::uint8_t> cls_;
  std::vector<std::int64_t> ids_;
};

// Neighbours within radius_um (inclusive) of the centre, excluding the
// centre itself when it is one of the indexed points.
NeighborCounts neighbor_counts(const SpatialIndex& index, const SpatialPoint& center,
                               double radius_um);
NeighborCounts neighbor_counts(const SpatialIndex& index, const NucleusRecord& center,
                               double radius_um);

SpatialPoint to_spatial_point(const NucleusRecord& record);

// Per-slide point sets of one patient. For every radius, centre class
// (feature order) and neighbour class (id order): mean and population std
// over the patient's centre nuclei of their neighbour counts, never crossing
// slides. Missing (NaN) where the centre class has no nuclei.
// Returns radii.size() * 72 values.
std::vector<double> colocalisation_features(
    std::span<const std::vector<SpatialPoint>> slides, std::span<const double> radii_um,
    int threads = 1);

// Groups records by image_id, then as above.
std::vector<double> colocalisation_features(std::span<const NucleusRecord> nuclei,
                                            std::span<const double> radii_um,
                                            int threads = 1);

// Share of each class (feature order) among all nuclei; all missing when
// there are none.
std::array<double, kNumClasses> density_features(std::span<const NucleusRecord> nuclei);
std::array<double, kNumClasses> density_features(const NeighborCounts& class_totals);

}  // namespace conic
