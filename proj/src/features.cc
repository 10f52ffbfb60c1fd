#include "conic/features.h"

#include "conic/morphology.h"
#include "conic/parallel.h"
#include "conic/spatial.h"

namespace conic {

PatientFeatureVector extract_patient_features(const std::string& patient_id,
                                              std::span<const NucleusRecord> nuclei,
                                              std::span<const double> radii_um,
                                              int threads) {
  if (radii_um.size() != 2) {
    throw Error(ErrorCode::kConfigError, "feature extraction needs exactly two radii");
  }
  PatientFeatureVector row;
  row.patient_id = patient_id;

  std::vector<ClassifiedMorphology> shapes(nuclei.size());
  parallel_for(nuclei.size(), threads, [&](std::size_t i) {
    shapes[i] = {nuclei[i].cls, nucleus_morphology(nuclei[i])};
  });
  const auto morph = aggregate_morphology(shapes);
  std::copy(morph.begin(), morph.end(), row.values.begin() + kMorphologyBegin);

  const auto coloc = colocalisation_features(nuclei, radii_um, threads);
  std::copy(coloc.begin(), coloc.end(), row.values.begin() + kColocalisationBegin);

  const auto density = density_features(nuclei);
  std::copy(density.begin(), density.end(), row.values.begin() + kDensityBegin);
  return row;
}

io::FeatureMatrix extract_feature_matrix(std::span<const NucleusRecord> nuclei,
                                         const std::map<std::string, std::string>& manifest,
                                         std::span<const double> radii_um, int threads) {
  std::map<std::string, std::vector<NucleusRecord>> by_patient;
  for (const auto& [image, patient] : manifest) by_patient[patient];
  for (const auto& n : nuclei) {
    auto it = manifest.find(n.image_id);
    if (it == manifest.end()) {
      throw Error(ErrorCode::kOrphanImage,
                  "image '" + n.image_id + "' is not listed in the manifest");
    }
    by_patient[it->second].push_back(n);
  }
  io::FeatureMatrix m;
  m.names = feature_names(radii_um);
  for (const auto& [patient, records] : by_patient) {
    m.rows.push_back(extract_patient_features(patient, records, radii_um, threads));
  }
  return m;
}

}  // namespace conic
