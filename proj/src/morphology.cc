#include "conic/morphology.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <optional>

namespace conic {

namespace {

// Clockwise in image coordinates (row grows downwards).
constexpr std::array<Pixel, 8> kDirs = {{{0, 1},   // E
                                         {1, 1},   // SE
                                         {1, 0},   // S
                                         {1, -1},  // SW
                                         {0, -1},  // W
                                         {-1, -1}, // NW
                                         {-1, 0},  // N
                                         {-1, 1}}};// NE

int direction_of(int dr, int dc) {
  for (int k = 0; k < 8; ++k) {
    if (kDirs[k].row == dr && kDirs[k].col == dc) return k;
  }
  return -1;
}

struct Moments {
  double mean_row = 0.0;
  double mean_col = 0.0;
  double var_row = 0.0;
  double var_col = 0.0;
  double cov = 0.0;
  double lambda_major = 0.0;
  double lambda_minor = 0.0;
  // Unit vector of the major axis in (row, col).
  double axis_row = 1.0;
  double axis_col = 0.0;
};

Moments moments_of(const BinaryMask& mask) {
  Moments m;
  const auto pixels = mask.pixels();
  const double n = static_cast<double>(pixels.size());
  for (const auto& p : pixels) {
    m.mean_row += p.row;
    m.mean_col += p.col;
  }
  m.mean_row /= n;
  m.mean_col /= n;
  for (const auto& p : pixels) {
    const double dr = p.row - m.mean_row;
    const double dc = p.col - m.mean_col;
    m.var_row += dr * dr;
    m.var_col += dc * dc;
    m.cov += dr * dc;
  }
  constexpr double kPixelVariance = 1.0 / 12.0;
  m.var_row = m.var_row / n + kPixelVariance;
  m.var_col = m.var_col / n + kPixelVariance;
  m.cov /= n;

  const double half_trace = 0.5 * (m.var_row + m.var_col);
  const double half_diff = 0.5 * (m.var_row - m.var_col);
  const double root = std::sqrt(half_diff * half_diff + m.cov * m.cov);
  m.lambda_major = half_trace + root;
  m.lambda_minor = std::max(half_trace - root, 0.0);
  if (m.cov != 0.0) {
    const double vr = m.lambda_major - m.var_col;
    const double vc = m.cov;
    const double norm = std::hypot(vr, vc);
    m.axis_row = vr / norm;
    m.axis_col = vc / norm;
  } else if (m.var_col > m.var_row) {
    m.axis_row = 0.0;
    m.axis_col = 1.0;
  }
  return m;
}

}  // namespace

BinaryMask BinaryMask::from_pixels(std::span<const Pixel> pixels) {
  BinaryMask m;
  if (pixels.empty()) return m;
  int r0 = std::numeric_limits<int>::max(), c0 = r0;
  int r1 = std::numeric_limits<int>::min(), c1 = r1;
  for (const auto& p : pixels) {
    r0 = std::min(r0, p.row);
    r1 = std::max(r1, p.row);
    c0 = std::min(c0, p.col);
    c1 = std::max(c1, p.col);
  }
  m.top_ = r0;
  m.left_ = c0;
  m.height_ = r1 - r0 + 1;
  m.width_ = c1 - c0 + 1;
  m.bits_.assign(static_cast<std::size_t>(m.height_) * m.width_, 0);
  for (const auto& p : pixels) {
    auto& bit = m.bits_[static_cast<std::size_t>(p.row - r0) * m.width_ + (p.col - c0)];
    if (!bit) {
      bit = 1;
      ++m.count_;
    }
  }
  return m;
}

bool BinaryMask::contains(int row, int col) const {
  const int r = row - top_;
  const int c = col - left_;
  if (r < 0 || c < 0 || r >= height_ || c >= width_) return false;
  return bits_[static_cast<std::size_t>(r) * width_ + c] != 0;
}

std::vector<Pixel> BinaryMask::pixels() const {
  std::vector<Pixel> out;
  out.reserve(static_cast<std::size_t>(count_));
  for (int r = 0; r < height_; ++r) {
    for (int c = 0; c < width_; ++c) {
      if (bits_[static_cast<std::size_t>(r) * width_ + c]) out.push_back({r + top_, c + left_});
    }
  }
  return out;
}

namespace {

// Labels 8-connected components; returns the pixels of each.
std::vector<std::vector<Pixel>> components(const BinaryMask& mask) {
  std::vector<std::vector<Pixel>> comps;
  const int h = mask.height(), w = mask.width();
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(h) * w, 0);
  for (const auto& start : mask.pixels()) {
    auto& s = seen[static_cast<std::size_t>(start.row - mask.top()) * w + (start.col - mask.left())];
    if (s) continue;
    s = 1;
    std::vector<Pixel> comp;
    std::deque<Pixel> queue{start};
    while (!queue.empty()) {
      const Pixel p = queue.front();
      queue.pop_front();
      comp.push_back(p);
      for (const auto& d : kDirs) {
        const Pixel q{p.row + d.row, p.col + d.col};
        if (!mask.contains(q.row, q.col)) continue;
        auto& flag = seen[static_cast<std::size_t>(q.row - mask.top()) * w + (q.col - mask.left())];
        if (flag) continue;
        flag = 1;
        queue.push_back(q);
      }
    }
    comps.push_back(std::move(comp));
  }
  return comps;
}

}  // namespace

bool is_8_connected(const BinaryMask& mask) {
  return !mask.empty() && components(mask).size() == 1;
}

std::vector<Pixel> trace_boundary(const BinaryMask& mask) {
  std::vector<Pixel> boundary;
  if (mask.empty()) return boundary;
  Pixel start{};
  bool found = false;
  for (int r = mask.top(); r < mask.top() + mask.height() && !found; ++r) {
    for (int c = mask.left(); c < mask.left() + mask.width(); ++c) {
      if (mask.contains(r, c)) {
        start = {r, c};
        found = true;
        break;
      }
    }
  }
  boundary.push_back(start);

  Pixel current = start;
  int backtrack = 4;  // west of the top-left pixel is background
  std::optional<Pixel> first_step;
  const std::size_t limit = static_cast<std::size_t>(mask.count()) * 8 + 8;
  while (boundary.size() <= limit) {
    int next_dir = -1;
    for (int i = 1; i <= 8; ++i) {
      const int k = (backtrack + i) & 7;
      if (mask.contains(current.row + kDirs[k].row, current.col + kDirs[k].col)) {
        next_dir = k;
        break;
      }
    }
    if (next_dir < 0) break;  // isolated pixel
    const Pixel next{current.row + kDirs[next_dir].row, current.col + kDirs[next_dir].col};
    if (current == start) {
      if (first_step && *first_step == next) break;
      if (!first_step) first_step = next;
    }
    const Pixel& prev_dir = kDirs[(next_dir + 7) & 7];
    const Pixel& step_dir = kDirs[next_dir];
    backtrack = direction_of(prev_dir.row - step_dir.row, prev_dir.col - step_dir.col);
    current = next;
    boundary.push_back(current);
  }
  // The closing return to `start` is implied.
  if (boundary.size() > 1 && boundary.back() == start) boundary.pop_back();
  return boundary;
}

double boundary_length(std::span<const Pixel> boundary) {
  if (boundary.size() < 2) return 0.0;
  double length = 0.0;
  for (std::size_t i = 0; i < boundary.size(); ++i) {
    const Pixel& a = boundary[i];
    const Pixel& b = boundary[(i + 1) % boundary.size()];
    const bool diagonal = a.row != b.row && a.col != b.col;
    length += diagonal ? std::numbers::sqrt2 : 1.0;
  }
  return length;
}

double MorphologyFeatures::stat(ShapeStat s) const {
  switch (s) {
    case ShapeStat::kArea: return area_um2;
    case ShapeStat::kEccentricity: return eccentricity;
    case ShapeStat::kPerimeter: return perimeter_um;
    case ShapeStat::kMinorAxis: return minor_axis_um;
    case ShapeStat::kMajorAxis: return major_axis_um;
    case ShapeStat::kBam: return bam;
  }
  return 0.0;
}

MorphologyFeatures region_properties(const BinaryMask& mask, double mpp) {
  if (mask.empty()) throw Error(ErrorCode::kEmptyMask, "region_properties of an empty mask");
  if (!is_8_connected(mask)) {
    throw Error(ErrorCode::kDisconnectedMask, "mask is not 8-connected");
  }
  if (!(mpp > 0.0)) throw Error(ErrorCode::kInvariantViolation, "mpp must be positive");
  const Moments m = moments_of(mask);
  MorphologyFeatures f;
  f.area_um2 = static_cast<double>(mask.count()) * mpp * mpp;
  f.perimeter_um = boundary_length(trace_boundary(mask)) * mpp;
  f.major_axis_um = 4.0 * std::sqrt(m.lambda_major) * mpp;
  f.minor_axis_um = 4.0 * std::sqrt(m.lambda_minor) * mpp;
  f.eccentricity = std::sqrt(std::max(0.0, 1.0 - m.lambda_minor / m.lambda_major));
  return f;
}

double best_alignment_metric(const BinaryMask& mask) {
  if (mask.empty()) throw Error(ErrorCode::kEmptyMask, "BAM of an empty mask");
  const Moments m = moments_of(mask);
  const double semi_major = 2.0 * std::sqrt(m.lambda_major);
  const double semi_minor = 2.0 * std::sqrt(m.lambda_minor);
  // minor axis direction is the major one rotated by 90 degrees
  const double minor_row = -m.axis_col;
  const double minor_col = m.axis_row;

  auto inside_ellipse = [&](int r, int c) {
    const double dr = r - m.mean_row;
    const double dc = c - m.mean_col;
    const double u = (dr * m.axis_row + dc * m.axis_col) / semi_major;
    const double v = (dr * minor_row + dc * minor_col) / semi_minor;
    return u * u + v * v <= 1.0;
  };

  const int r0 = std::min(mask.top(), static_cast<int>(std::floor(m.mean_row - semi_major)) - 1);
  const int r1 = std::max(mask.top() + mask.height() - 1,
                          static_cast<int>(std::ceil(m.mean_row + semi_major)) + 1);
  const int c0 = std::min(mask.left(), static_cast<int>(std::floor(m.mean_col - semi_major)) - 1);
  const int c1 = std::max(mask.left() + mask.width() - 1,
                          static_cast<int>(std::ceil(m.mean_col + semi_major)) + 1);
  std::int64_t inter = 0, uni = 0;
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const bool a = mask.contains(r, c);
      const bool b = inside_ellipse(r, c);
      inter += a && b;
      uni += a || b;
    }
  }
  return 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
}

BinaryMask rasterize_polygon(std::span<const PointUm> polygon, double mpp) {
  if (polygon.size() < 3 || !(mpp > 0.0)) {
    throw Error(ErrorCode::kInvariantViolation, "cannot rasterize a degenerate polygon");
  }
  double ymin = polygon[0].y, ymax = ymin;
  for (const auto& p : polygon) {
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  std::vector<Pixel> pixels;
  const int row0 = static_cast<int>(std::floor(ymin / mpp));
  const int row1 = static_cast<int>(std::floor(ymax / mpp));
  std::vector<double> xs;
  for (int row = row0; row <= row1; ++row) {
    const double y = (row + 0.5) * mpp;
    xs.clear();
    for (std::size_t i = 0; i < polygon.size(); ++i) {
      const PointUm& a = polygon[i];
      const PointUm& b = polygon[(i + 1) % polygon.size()];
      // half-open rule so shared vertices are counted once
      if ((a.y <= y && b.y > y) || (b.y <= y && a.y > y)) {
        xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
      }
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
      // centres (col + 0.5) * mpp inside [xs[i], xs[i+1]]
      const int c_lo = static_cast<int>(std::ceil(xs[i] / mpp - 0.5));
      const int c_hi = static_cast<int>(std::floor(xs[i + 1] / mpp - 0.5));
      for (int col = c_lo; col <= c_hi; ++col) pixels.push_back({row, col});
    }
  }
  if (pixels.empty()) {
    double cx = 0.0, cy = 0.0;
    for (const auto& p : polygon) {
      cx += p.x;
      cy += p.y;
    }
    cx /= static_cast<double>(polygon.size());
    cy /= static_cast<double>(polygon.size());
    pixels.push_back({static_cast<int>(std::floor(cy / mpp)),
                      static_cast<int>(std::floor(cx / mpp))});
  }
  BinaryMask mask = BinaryMask::from_pixels(pixels);
  auto comps = components(mask);
  if (comps.size() > 1) {
    auto largest = std::max_element(comps.begin(), comps.end(), [](const auto& a, const auto& b) {
      return a.size() < b.size();
    });
    mask = BinaryMask::from_pixels(*largest);
  }
  return mask;
}

MorphologyFeatures nucleus_morphology(const NucleusRecord& record) {
  const double mpp = record.mpp.value_or(
      std::sqrt(polygon_area(record.contour) / static_cast<double>(record.area_px)));
  const BinaryMask mask = rasterize_polygon(record.contour, mpp);
  MorphologyFeatures f = region_properties(mask, mpp);
  f.bam = best_alignment_metric(mask);
  return f;
}

std::array<double, 72> aggregate_morphology(std::span<const ClassifiedMorphology> nuclei) {
  struct Accumulator {
    std::int64_t n = 0;
    std::array<double, kNumShapeStats> sum{};
  };
  std::array<Accumulator, kNumClasses> acc{};
  for (const auto& nucleus : nuclei) {
    auto& a = acc[class_index(nucleus.cls)];
    ++a.n;
    for (int s = 0; s < kNumShapeStats; ++s) {
      a.sum[s] += nucleus.features.stat(static_cast<ShapeStat>(s));
    }
  }
  // Two-pass population variance; squares are taken about the mean.
  std::array<std::array<double, kNumShapeStats>, kNumClasses> sq{};
  for (const auto& nucleus : nuclei) {
    const auto& a = acc[class_index(nucleus.cls)];
    for (int s = 0; s < kNumShapeStats; ++s) {
      const double d = nucleus.features.stat(static_cast<ShapeStat>(s)) -
                       a.sum[s] / static_cast<double>(a.n);
      sq[class_index(nucleus.cls)][s] += d * d;
    }
  }
  std::array<double, 72> out;
  out.fill(kMissing);
  int slot = 0;
  for (NucleusClass c : kClassesFeatureOrder) {
    const auto& a = acc[class_index(c)];
    for (int s = 0; s < kNumShapeStats; ++s, slot += 2) {
      if (a.n == 0) continue;
      const double n = static_cast<double>(a.n);
      out[slot] = a.sum[s] / n;
      out[slot + 1] = std::sqrt(sq[class_index(c)][s] / n);
    }
  }
  return out;
}

}  // namespace conic
