#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace conic {

// Row indices into the patient list; the three sets are disjoint and
// cover every patient.
struct CvSplit {
  int fold = 0;
  int repeat = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
  std::vector<std::size_t> test;
};

// `repeats` shuffles of the patients into `folds` near-equal folds. Split
// (repeat r, fold f) tests on fold f, validates on fold f+1 (cyclically)
// and trains on the rest, i.e. 60/20/20 for five folds. With
// `stratify_labels`, each label's patients are dealt round-robin so every
// fold holds its share of each label to within one.
std::vector<CvSplit> make_cv_splits(std::size_t num_patients,
                                    const std::optional<std::vector<int>>& stratify_labels,
                                    std::uint64_t seed, int folds = 5, int repeats = 5);

nlohmann::ordered_json to_json(const CvSplit& split, std::span<const std::string> patient_ids);

}  // namespace conic
