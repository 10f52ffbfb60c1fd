#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "conic/core.h"

namespace conic {

enum class FeatureCategory { kMorphology, kColocalisation, kDensity };

inline constexpr int kMorphologyBegin = 0;
inline constexpr int kColocalisationBegin = 72;
inline constexpr int kDensityBegin = 216;

inline constexpr std::array<double, 2> kDefaultRadiiUm = {200.0, 400.0};

// Per-nucleus shape statistics in feature-vector order.
enum class ShapeStat { kArea, kEccentricity, kPerimeter, kMinorAxis, kMajorAxis, kBam };
inline constexpr int kNumShapeStats = 6;

// The 222 patient-level feature names in id order. Pure; stable.
const std::vector<std::string>& canonical_feature_names();

// Same layout with the colocalisation names generated for `radii_um`
// (exactly two radii).
std::vector<std::string> feature_names(std::span<const double> radii_um);

FeatureCategory feature_category(int id);
std::string_view to_string(FeatureCategory category);

// Named input subsets for the downstream learners.
enum class FeatureSet { kMorphology, kColocalisation, kDensity, kAll, kSelected };

FeatureSet feature_set_from_tag(std::string_view tag);  // Dm|Dc|Dd|D|Dbar
std::string_view feature_set_tag(FeatureSet set);

// Column ids for a fixed set; kSelected has no fixed columns and throws.
std::vector<int> feature_set_columns(FeatureSet set);

}  // namespace conic
