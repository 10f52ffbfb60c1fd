#pragma once

// Per-nucleus shape descriptors and their patient-level aggregation
// (feature ids 0-71).
//
// Pixels are modelled as unit squares, so second moments include the 1/12
// within-pixel variance; an N x N square therefore has the moments of the
// continuous square and every mask has a strictly positive minor axis.
//
// BAM here is the Jaccard dissimilarity between a mask and its
// moment-matched ellipse: 0 for a perfect ellipse, approaching 1 for very
// irregular shapes.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "conic/core.h"
#include "conic/feature_catalog.h"

namespace conic {

struct Pixel {
  int row = 0;
  int col = 0;
  bool operator==(const Pixel&) const = default;
};

// A set of pixels stored as a bitmap over its bounding box.
class BinaryMask {
 public:
  BinaryMask() = default;
  static BinaryMask from_pixels(std::span<const Pixel> pixels);

  bool empty() const { return count_ == 0; }
  std::int64_t count() const { return count_; }
  int top() const { return top_; }
  int left() const { return left_; }
  int height() const { return height_; }
  int width() const { return width_; }

  // Absolute coordinates; false outside the bounding box.
  bool contains(int row, int col) const;
  std::vector<Pixel> pixels() const;

 private:
  int top_ = 0;
  int left_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::int64_t count_ = 0;
  std::vector<std::uint8_t> bits_;
};

bool is_8_connected(const BinaryMask& mask);

// Moore-neighbour outer boundary, clockwise from the top-left pixel.
std::vector<Pixel> trace_boundary(const BinaryMask& mask);
double boundary_length(std::span<const Pixel> boundary);

struct MorphologyFeatures {
  double area_um2 = 0.0;
  double eccentricity = 0.0;
  double perimeter_um = 0.0;
  double major_axis_um = 0.0;
  double minor_axis_um = 0.0;
  double bam = 0.0;

  double stat(ShapeStat s) const;
};

// Everything except bam (left at 0).
MorphologyFeatures region_properties(const BinaryMask& mask, double mpp);

double best_alignment_metric(const BinaryMask& mask);

// Pixels whose centres lie inside the polygon, on a grid of pitch `mpp`
// anchored at the micron origin. Falls back to the pixel under the polygon
// centroid when no centre is covered, and keeps the largest 8-connected
// component otherwise.
BinaryMask rasterize_polygon(std::span<const PointUm> polygon_um, double mpp);

// Full descriptor for a nucleus record; mpp is taken from the record or
// inferred as sqrt(contour area / area_px).
MorphologyFeatures nucleus_morphology(const NucleusRecord& record);

struct ClassifiedMorphology {
  NucleusClass cls;
  MorphologyFeatures features;
};

// Per class (feature order) and per statistic: mean then population std.
// Classes without nuclei are missing (NaN).
std::array<double, 72> aggregate_morphology(std::span<const ClassifiedMorphology> nuclei);

}  // namespace conic
