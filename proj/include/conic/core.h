#pragma once

// Shared domain types for the nuclear-recognition evaluation and analytics
// stack: the six-class registry, label grids, nucleus records, per-image
// class counts, patient feature vectors and survival records.

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace conic {

enum class ErrorCode {
  kShapeMismatch,
  kInvariantViolation,
  kMissingMpp,
  kParseError,
  kNegativeCount,
  kEmptyDataset,
  kCropOutOfBounds,
  kTooFewImages,
  kEmptyMask,
  kDisconnectedMask,
  kNonPositiveRadius,
  kTooFewPatients,
  kDegenerateTargets,
  kNonFiniteFeature,
  kWidthMismatch,
  kLengthMismatch,
  kNoComparablePairs,
  kImageIdMismatch,
  kOrphanImage,
  kIdMismatch,
  kUnmatchedFile,
  kIoError,
  kConfigError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }
  // The message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

inline constexpr int kNumClasses = 6;

// Canonical ids. 0 is background and never a NucleusClass value.
enum class NucleusClass : std::uint8_t {
  kNeutrophil = 1,
  kEpithelial = 2,
  kLymphocyte = 3,
  kPlasma = 4,
  kEosinophil = 5,
  kConnective = 6,
};

// Id order; also the neighbor order inside colocalisation blocks and the
// column order of counts tables.
inline constexpr std::array<NucleusClass, kNumClasses> kClassesById = {
    NucleusClass::kNeutrophil, NucleusClass::kEpithelial,
    NucleusClass::kLymphocyte, NucleusClass::kPlasma,
    NucleusClass::kEosinophil, NucleusClass::kConnective};

// Alphabetical order used by the per-class blocks of the feature vector.
inline constexpr std::array<NucleusClass, kNumClasses> kClassesFeatureOrder = {
    NucleusClass::kConnective, NucleusClass::kEosinophil,
    NucleusClass::kEpithelial, NucleusClass::kLymphocyte,
    NucleusClass::kNeutrophil, NucleusClass::kPlasma};

// 0-based slot for per-class arrays indexed in id order.
constexpr int class_index(NucleusClass c) { return static_cast<int>(c) - 1; }
constexpr NucleusClass class_at(int index) { return kClassesById[index]; }

std::string_view class_name(NucleusClass c);          // "neutrophil"
std::string_view class_display_name(NucleusClass c);  // "Neutrophil"
std::optional<NucleusClass> class_from_name(std::string_view name);

// Maps the numeric class ids used in label-grid files onto NucleusClass.
class ClassRegistry {
 public:
  static ClassRegistry standard();
  // Accepts {"neutrophil": 1, ...}; all six names, distinct ids >= 1.
  static ClassRegistry from_json(const nlohmann::json& j);

  NucleusClass from_id(std::uint32_t external_id) const;
  std::uint32_t to_id(NucleusClass c) const { return ids_[class_index(c)]; }
  nlohmann::ordered_json to_json() const;

  bool operator==(const ClassRegistry&) const = default;

 private:
  explicit ClassRegistry(std::array<std::uint32_t, kNumClasses> ids)
      : ids_(ids) {}
  std::array<std::uint32_t, kNumClasses> ids_;
};

// One image: an instance layer (0 = background) and a class layer holding
// canonical class ids (0 = background). Validated on construction.
class LabeledInstanceGrid {
 public:
  LabeledInstanceGrid(int height, int width,
                      std::vector<std::uint32_t> instance_labels,
                      std::vector<std::uint8_t> class_labels, double mpp);

  int height() const { return height_; }
  int width() const { return width_; }
  double mpp() const { return mpp_; }
  std::size_t size() const { return instance_labels_.size(); }

  std::span<const std::uint32_t> instance_labels() const {
    return instance_labels_;
  }
  std::span<const std::uint8_t> class_labels() const { return class_labels_; }

  std::uint32_t instance_at(int row, int col) const {
    return instance_labels_[static_cast<std::size_t>(row) * width_ + col];
  }
  std::uint8_t class_at(int row, int col) const {
    return class_labels_[static_cast<std::size_t>(row) * width_ + col];
  }

  bool operator==(const LabeledInstanceGrid&) const = default;

 private:
  int height_;
  int width_;
  std::vector<std::uint32_t> instance_labels_;
  std::vector<std::uint8_t> class_labels_;
  double mpp_;
};

struct PointUm {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const PointUm&) const = default;
};

struct NucleusRecord {
  std::int64_t nucleus_id = 0;
  NucleusClass cls = NucleusClass::kConnective;
  double centroid_x_um = 0.0;
  double centroid_y_um = 0.0;
  std::vector<PointUm> contour;
  std::int64_t area_px = 1;
  std::string image_id;
  std::string patient_id;
  // Source resolution; inferred from contour area and area_px when absent.
  std::optional<double> mpp;

  bool operator==(const NucleusRecord&) const = default;
};

// Throws InvariantViolation for degenerate contours or area_px < 1.
void validate(const NucleusRecord& record);

bool polygon_is_simple(std::span<const PointUm> polygon);
double polygon_area(std::span<const PointUm> polygon);

struct ClassCounts {
  std::string image_id;
  std::array<std::int64_t, kNumClasses> counts{};  // id order

  std::int64_t& operator[](NucleusClass c) { return counts[class_index(c)]; }
  std::int64_t operator[](NucleusClass c) const {
    return counts[class_index(c)];
  }
  bool operator==(const ClassCounts&) const = default;
};

inline constexpr int kNumFeatures = 222;
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

struct ClinicalFields {
  std::optional<int> sex;
  std::optional<double> age;
  std::optional<int> stage;
  bool operator==(const ClinicalFields&) const = default;
};

struct PatientFeatureVector {
  std::string patient_id;
  // NaN marks a missing entry.
  std::array<double, kNumFeatures> values;
  std::optional<ClinicalFields> clinical;

  PatientFeatureVector() { values.fill(kMissing); }

  bool missing(int id) const;
  std::array<bool, kNumFeatures> missing_mask() const;
};

bool same_values(const PatientFeatureVector& a, const PatientFeatureVector& b);

struct SurvivalRecord {
  std::string patient_id;
  double time = 1.0;  // days, > 0
  bool event = false;
};

void validate(const SurvivalRecord& record);

}  // namespace conic
