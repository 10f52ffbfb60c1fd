#pragma once

// Patient-level feature extraction: morphology (0-71), colocalisation
// (72-215) and density (216-221) assembled into the canonical vector.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "conic/core.h"
#include "conic/feature_catalog.h"
#include "conic/io.h"

namespace conic {

// All nuclei of one patient, pooled over the patient's slides.
PatientFeatureVector extract_patient_features(
    const std::string& patient_id, std::span<const NucleusRecord> nuclei,
    std::span<const double> radii_um = kDefaultRadiiUm, int threads = 1);

// Groups nuclei by patient through `manifest` (image_id -> patient_id) and
// returns one row per patient in lexicographic patient order. Every
// manifest patient gets a row, even without nuclei. Throws OrphanImage when
// a nucleus references an image the manifest does not list.
io::FeatureMatrix extract_feature_matrix(
    std::span<const NucleusRecord> nuclei,
    const std::map<std::string, std::string>& manifest,
    std::span<const double> radii_um = kDefaultRadiiUm, int threads = 1);

}  // namespace conic
