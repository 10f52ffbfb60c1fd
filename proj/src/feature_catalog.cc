#include "conic/feature_catalog.h"

#include <cmath>

namespace conic {

namespace {

std::string_view stat_name(ShapeStat stat) {
  switch (stat) {
    case ShapeStat::kArea: return "area";
    case ShapeStat::kEccentricity: return "eccentricity";
    case ShapeStat::kPerimeter: return "perimeter";
    case ShapeStat::kMinorAxis: return "minor axis length";
    case ShapeStat::kMajorAxis: return "major axis length";
    case ShapeStat::kBam: return "BAM";
  }
  return "";
}

std::string article_for(NucleusClass c) {
  const char first = class_display_name(c).front();
  const bool vowel = first == 'A' || first == 'E' || first == 'I' ||
                     first == 'O' || first == 'U';
  return vowel ? "an" : "a";
}

std::string radius_label(double radius) {
  if (radius == std::floor(radius)) {
    return std::to_string(static_cast<long long>(radius)) + "um";
  }
  std::string s = std::to_string(radius);
  s.erase(s.find_last_not_of('0') + 1);
  return s + "um";
}

std::vector<std::string> build_names(std::span<const double> radii) {
  if (radii.size() != 2) {
    throw Error(ErrorCode::kConfigError,
                "the feature layout needs exactly two colocalisation radii");
  }
  std::vector<std::string> names;
  names.reserve(kNumFeatures);
  for (NucleusClass c : kClassesFeatureOrder) {
    const std::string owner = std::string(class_display_name(c)) + "'s ";
    for (int s = 0; s < kNumShapeStats; ++s) {
      const auto stat = stat_name(static_cast<ShapeStat>(s));
      names.push_back("Average " + owner + std::string(stat));
      names.push_back("Variation in " + owner + std::string(stat));
    }
  }
  for (double r : radii) {
    for (NucleusClass center : kClassesFeatureOrder) {
      for (NucleusClass neighbor : kClassesById) {
        const std::string body = "# " + std::string(class_display_name(neighbor)) +
                                 " within " + radius_label(r) + " radius of " +
                                 article_for(center) + " " +
                                 std::string(class_display_name(center)) +
                                 " nucleus";
        names.push_back("Average " + body);
        names.push_back("Variation in " + body);
      }
    }
  }
  for (NucleusClass c : kClassesFeatureOrder) {
    names.push_back(std::string(class_display_name(c)) + " cellular composition");
  }
  return names;
}

}  // namespace

const std::vector<std::string>& canonical_feature_names() {
  static const std::vector<std::string> names = build_names(kDefaultRadiiUm);
  return names;
}

std::vector<std::string> feature_names(std::span<const double> radii_um) {
  return build_names(radii_um);
}

FeatureCategory feature_category(int id) {
  if (id < 0 || id >= kNumFeatures) {
    throw Error(ErrorCode::kWidthMismatch, "feature id " + std::to_string(id));
  }
  if (id < kColocalisationBegin) return FeatureCategory::kMorphology;
  if (id < kDensityBegin) return FeatureCategory::kColocalisation;
  return FeatureCategory::kDensity;
}

std::string_view to_string(FeatureCategory category) {
  switch (category) {
    case FeatureCategory::kMorphology: return "Morphology";
    case FeatureCategory::kColocalisation: return "Colocalisation";
    case FeatureCategory::kDensity: return "Density";
  }
  return "";
}

FeatureSet feature_set_from_tag(std::string_view tag) {
  if (tag == "Dm") return FeatureSet::kMorphology;
  if (tag == "Dc") return FeatureSet::kColocalisation;
  if (tag == "Dd") return FeatureSet::kDensity;
  if (tag == "D") return FeatureSet::kAll;
  if (tag == "Dbar") return FeatureSet::kSelected;
  throw Error(ErrorCode::kConfigError, "unknown feature set '" + std::string(tag) + "'");
}

std::string_view feature_set_tag(FeatureSet set) {
  switch (set) {
    case FeatureSet::kMorphology: return "Dm";
    case FeatureSet::kColocalisation: return "Dc";
    case FeatureSet::kDensity: return "Dd";
    case FeatureSet::kAll: return "D";
    case FeatureSet::kSelected: return "Dbar";
  }
  return "";
}

std::vector<int> feature_set_columns(FeatureSet set) {
  int begin = 0;
  int end = kNumFeatures;
  switch (set) {
    case FeatureSet::kMorphology: end = kColocalisationBegin; break;
    case FeatureSet::kColocalisation:
      begin = kColocalisationBegin;
      end = kDensityBegin;
      break;
    case FeatureSet::kDensity: begin = kDensityBegin; break;
    case FeatureSet::kAll: break;
    case FeatureSet::kSelected:
      throw Error(ErrorCode::kConfigError,
                  "the selected feature set is data-dependent");
  }
  std::vector<int> cols;
  for (int i = begin; i < end; ++i) cols.push_back(i);
  return cols;
}

}  // namespace conic
