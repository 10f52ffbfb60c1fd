#pragma once

// Readers and writers for the on-disk formats.
//
//   label grid     <stem>.json sidecar + <stem>.bin payload (u32 LE,
//                  instance layer then class layer, row-major)
//   nuclei table   newline-delimited JSON, one NucleusRecord per line
//   counts table   CSV image_id,neutrophil,...,connective
//   feature matrix CSV patient_id,<222 names>[,sex,age,stage]
//   manifest       CSV image_id,patient_id
//   grade labels   CSV patient_id,grade
//   survival table CSV patient_id,time,event
//
// All readers validate and are deterministic. Doubles are written in their
// shortest round-trip form so tables read back field-exact.

#include <filesystem>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "conic/core.h"

namespace conic::io {

std::string format_double(double value);
double parse_double(std::string_view text, std::size_t line);

// `path` may name the sidecar, the payload or the bare stem.
LabeledInstanceGrid read_label_grid(
    const std::filesystem::path& path,
    const ClassRegistry& registry = ClassRegistry::standard());
void write_label_grid(const std::filesystem::path& path,
                      const LabeledInstanceGrid& grid,
                      const ClassRegistry& registry = ClassRegistry::standard());

std::vector<NucleusRecord> parse_nuclei_table(std::istream& in);
std::vector<NucleusRecord> read_nuclei_table(const std::filesystem::path& path);
void write_nuclei_table(std::ostream& out, const std::vector<NucleusRecord>& records);
void write_nuclei_table(const std::filesystem::path& path,
                        const std::vector<NucleusRecord>& records);

std::vector<ClassCounts> parse_counts_table(std::istream& in);
std::vector<ClassCounts> read_counts_table(const std::filesystem::path& path);
void write_counts_table(const std::filesystem::path& path,
                        const std::vector<ClassCounts>& rows);

struct FeatureMatrix {
  std::vector<std::string> names;
  std::vector<PatientFeatureVector> rows;
  bool has_clinical = false;
};

// Header must equal `expected_names` exactly (canonical names by default).
FeatureMatrix parse_feature_matrix(std::istream& in,
                                   const std::vector<std::string>& expected_names);
FeatureMatrix read_feature_matrix(const std::filesystem::path& path);
FeatureMatrix read_feature_matrix(const std::filesystem::path& path,
                                  const std::vector<std::string>& expected_names);
void write_feature_matrix(std::ostream& out, const FeatureMatrix& matrix);
void write_feature_matrix(const std::filesystem::path& path,
                          const FeatureMatrix& matrix);

// image_id -> patient_id
std::map<std::string, std::string> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::map<std::string, std::string>& manifest);

std::map<std::string, int> read_grade_labels(const std::filesystem::path& path);
void write_grade_labels(const std::filesystem::path& path,
                        const std::map<std::string, int>& labels);

std::vector<SurvivalRecord> read_survival_table(const std::filesystem::path& path);
void write_survival_table(const std::filesystem::path& path,
                          const std::vector<SurvivalRecord>& records);

// Splits one CSV line on commas. Quoted fields are not part of the format.
std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no);

}  // namespace conic::io
