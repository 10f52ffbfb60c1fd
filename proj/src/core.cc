#include "conic/core.h"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace conic {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kInvariantViolation: return "InvariantViolation";
    case ErrorCode::kMissingMpp: return "MissingMpp";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kNegativeCount: return "NegativeCount";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kCropOutOfBounds: return "CropOutOfBounds";
    case ErrorCode::kTooFewImages: return "TooFewImages";
    case ErrorCode::kEmptyMask: return "EmptyMask";
    case ErrorCode::kDisconnectedMask: return "DisconnectedMask";
    case ErrorCode::kNonPositiveRadius: return "NonPositiveRadius";
    case ErrorCode::kTooFewPatients: return "TooFewPatients";
    case ErrorCode::kDegenerateTargets: return "DegenerateTargets";
    case ErrorCode::kNonFiniteFeature: return "NonFiniteFeature";
    case ErrorCode::kWidthMismatch: return "WidthMismatch";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kNoComparablePairs: return "NoComparablePairs";
    case ErrorCode::kImageIdMismatch: return "ImageIdMismatch";
    case ErrorCode::kOrphanImage: return "OrphanImage";
    case ErrorCode::kIdMismatch: return "IdMismatch";
    case ErrorCode::kUnmatchedFile: return "UnmatchedFile";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kConfigError: return "ConfigError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      detail_(message) {}

namespace {

constexpr std::array<std::string_view, kNumClasses> kNames = {
    "neutrophil", "epithelial", "lymphocyte",
    "plasma",     "eosinophil", "connective"};
constexpr std::array<std::string_view, kNumClasses> kDisplayNames = {
    "Neutrophil", "Epithelial", "Lymphocyte",
    "Plasma",     "Eosinophil", "Connective"};

}  // namespace

std::string_view class_name(NucleusClass c) { return kNames[class_index(c)]; }

std::string_view class_display_name(NucleusClass c) {
  return kDisplayNames[class_index(c)];
}

std::optional<NucleusClass> class_from_name(std::string_view name) {
  for (int i = 0; i < kNumClasses; ++i) {
    if (kNames[i] == name) return class_at(i);
  }
  return std::nullopt;
}

ClassRegistry ClassRegistry::standard() {
  return ClassRegistry({1, 2, 3, 4, 5, 6});
}

ClassRegistry ClassRegistry::from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.size() != kNumClasses) {
    throw Error(ErrorCode::kConfigError,
                "class registry must map all six class names to ids");
  }
  std::array<std::uint32_t, kNumClasses> ids{};
  for (const auto& [key, value] : j.items()) {
    auto cls = class_from_name(key);
    if (!cls) throw Error(ErrorCode::kConfigError, "unknown class '" + key + "'");
    if (!value.is_number_integer() || value.get<std::int64_t>() < 1 ||
        value.get<std::int64_t>() > std::numeric_limits<std::uint32_t>::max()) {
      throw Error(ErrorCode::kConfigError,
                  "class id for '" + key + "' must be a positive integer");
    }
    ids[class_index(*cls)] = value.get<std::uint32_t>();
  }
  auto sorted = ids;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorCode::kConfigError, "class ids must be distinct");
  }
  return ClassRegistry(ids);
}

NucleusClass ClassRegistry::from_id(std::uint32_t external_id) const {
  for (int i = 0; i < kNumClasses; ++i) {
    if (ids_[i] == external_id) return class_at(i);
  }
  throw Error(ErrorCode::kInvariantViolation,
              "class id " + std::to_string(external_id) +
                  " is not in the class registry");
}

nlohmann::ordered_json ClassRegistry::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (NucleusClass c : kClassesById) j[std::string(class_name(c))] = to_id(c);
  return j;
}

LabeledInstanceGrid::LabeledInstanceGrid(int height, int width,
                                         std::vector<std::uint32_t> instance_labels,
                                         std::vector<std::uint8_t> class_labels,
                                         double mpp)
    : height_(height),
      width_(width),
      instance_labels_(std::move(instance_labels)),
      class_labels_(std::move(class_labels)),
      mpp_(mpp) {
  if (height < 0 || width < 0) {
    throw Error(ErrorCode::kShapeMismatch, "negative grid dimensions");
  }
  const auto n = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  if (instance_labels_.size() != n || class_labels_.size() != n) {
    throw Error(ErrorCode::kShapeMismatch,
                "instance/class layers do not match " + std::to_string(height) +
                    "x" + std::to_string(width));
  }
  if (!(mpp > 0.0) || !std::isfinite(mpp)) {
    throw Error(ErrorCode::kInvariantViolation, "mpp must be positive");
  }
  std::unordered_map<std::uint32_t, std::uint8_t> label_class;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t inst = instance_labels_[i];
    const std::uint8_t cls = class_labels_[i];
    if (inst == 0) {
      if (cls != 0) {
        throw Error(ErrorCode::kInvariantViolation,
                    "background pixel " + std::to_string(i) + " carries class " +
                        std::to_string(cls));
      }
      continue;
    }
    if (cls < 1 || cls > kNumClasses) {
      throw Error(ErrorCode::kInvariantViolation,
                  "instance " + std::to_string(inst) + " has class " +
                      std::to_string(cls) + " outside 1..6");
    }
    auto [it, inserted] = label_class.emplace(inst, cls);
    if (!inserted && it->second != cls) {
      throw Error(ErrorCode::kInvariantViolation,
                  "instance " + std::to_string(inst) + " spans classes " +
                      std::to_string(it->second) + " and " + std::to_string(cls));
    }
  }
}

double polygon_area(std::span<const PointUm> polygon) {
  double twice = 0.0;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0; i < n; ++i) {
    const PointUm& a = polygon[i];
    const PointUm& b = polygon[(i + 1) % n];
    twice += a.x * b.y - b.x * a.y;
  }
  return std::abs(twice) * 0.5;
}

namespace {

double cross(const PointUm& o, const PointUm& a, const PointUm& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool on_segment(const PointUm& p, const PointUm& a, const PointUm& b) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
         std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

bool segments_intersect(const PointUm& p1, const PointUm& p2, const PointUm& q1,
                        const PointUm& q2) {
  const double d1 = cross(q1, q2, p1);
  const double d2 = cross(q1, q2, p2);
  const double d3 = cross(p1, p2, q1);
  const double d4 = cross(p1, p2, q2);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
      ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  if (d1 == 0 && on_segment(p1, q1, q2)) return true;
  if (d2 == 0 && on_segment(p2, q1, q2)) return true;
  if (d3 == 0 && on_segment(q1, p1, p2)) return true;
  if (d4 == 0 && on_segment(q2, p1, p2)) return true;
  return false;
}

}  // namespace

bool polygon_is_simple(std::span<const PointUm> polygon) {
  const std::size_t n = polygon.size();
  if (n < 3) return false;
  if (polygon_area(polygon) <= 0.0) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const PointUm& a1 = polygon[i];
    const PointUm& a2 = polygon[(i + 1) % n];
    if (a1 == a2) return false;
    for (std::size_t j = i + 1; j < n; ++j) {
      // Adjacent edges share exactly one vertex by construction.
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(a1, a2, polygon[j], polygon[(j + 1) % n])) {
        return false;
      }
    }
  }
  return true;
}

void validate(const NucleusRecord& record) {
  if (record.contour.size() < 3) {
    throw Error(ErrorCode::kInvariantViolation,
                "nucleus " + std::to_string(record.nucleus_id) + " has a " +
                    std::to_string(record.contour.size()) + "-vertex contour");
  }
  if (!polygon_is_simple(record.contour)) {
    throw Error(ErrorCode::kInvariantViolation,
                "nucleus " + std::to_string(record.nucleus_id) +
                    " has a self-intersecting or degenerate contour");
  }
  if (record.area_px < 1) {
    throw Error(ErrorCode::kInvariantViolation,
                "nucleus " + std::to_string(record.nucleus_id) +
                    " has area_px < 1");
  }
  if (!std::isfinite(record.centroid_x_um) || !std::isfinite(record.centroid_y_um)) {
    throw Error(ErrorCode::kInvariantViolation,
                "nucleus " + std::to_string(record.nucleus_id) +
                    " has a non-finite centroid");
  }
  if (record.mpp && !(*record.mpp > 0.0)) {
    throw Error(ErrorCode::kInvariantViolation,
                "nucleus " + std::to_string(record.nucleus_id) +
                    " has non-positive mpp");
  }
}

bool PatientFeatureVector::missing(int id) const {
  return std::isnan(values[static_cast<std::size_t>(id)]);
}

std::array<bool, kNumFeatures> PatientFeatureVector::missing_mask() const {
  std::array<bool, kNumFeatures> mask{};
  for (int i = 0; i < kNumFeatures; ++i) mask[i] = missing(i);
  return mask;
}

bool same_values(const PatientFeatureVector& a, const PatientFeatureVector& b) {
  if (a.patient_id != b.patient_id || a.clinical != b.clinical) return false;
  for (int i = 0; i < kNumFeatures; ++i) {
    if (a.missing(i) != b.missing(i)) return false;
    if (!a.missing(i) && a.values[i] != b.values[i]) return false;
  }
  return true;
}

void validate(const SurvivalRecord& record) {
  if (!(record.time > 0.0) || !std::isfinite(record.time)) {
    throw Error(ErrorCode::kInvariantViolation,
                "survival time for '" + record.patient_id + "' must be positive");
  }
}

}  // namespace conic
