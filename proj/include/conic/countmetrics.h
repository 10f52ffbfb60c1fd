#pragma once

// Cellular-composition counting and regression metrics (R2, MAE, MAAPE and
// their unweighted class means).

#include <array>
#include <span>
#include <string>
#include <vector>

#include "conic/core.h"
#include "json.hpp"

namespace conic {

struct CropSpec {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  // Centered square of side `size` inside a height x width grid.
  static CropSpec central(int size, int grid_height, int grid_width);
  static CropSpec whole(const LabeledInstanceGrid& grid) {
    return {0, 0, grid.height(), grid.width()};
  }
};

// A nucleus counts toward its class iff strictly more than half of its
// pixels fall inside the crop.
ClassCounts counts_from_segmentation(const LabeledInstanceGrid& grid, const CropSpec& crop,
                                     std::string image_id = {});

// rows = images, columns = classes in id order
using CountMatrix = std::vector<std::array<double, kNumClasses>>;

CountMatrix to_count_matrix(std::span<const ClassCounts> rows);

struct ClassComposition {
  bool r2_defined = false;  // false when TSS = 0
  double r2 = 0.0;
  double rss = 0.0;
  double tss = 0.0;
  double mae = 0.0;
  bool maape_defined = false;  // false when every element had truth = pred = 0
  double maape = 0.0;
  int maape_skipped = 0;  // elements with truth = pred = 0
};

struct CompositionReport {
  std::array<ClassComposition, kNumClasses> per_class{};
  double mr2 = 0.0;  // over classes with defined R2; NaN if none
  double mmae = 0.0;
  double mmaape = 0.0;  // over classes with defined MAAPE; NaN if none
  std::vector<NucleusClass> undefined_r2;
  std::vector<NucleusClass> undefined_maape;

  const ClassComposition& operator[](NucleusClass c) const {
    return per_class[class_index(c)];
  }
};

CompositionReport composition_metrics(const CountMatrix& pred, const CountMatrix& truth);

nlohmann::ordered_json to_json(const CompositionReport& report);

}  // namespace conic
