#include "conic/io.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "conic/feature_catalog.h"

namespace conic::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write '" + path.string() + "'");
  return out;
}

[[noreturn]] void parse_error(std::size_t line, const std::string& what) {
  throw Error(ErrorCode::kParseError, "line " + std::to_string(line) + ": " + what);
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

std::int64_t parse_int(std::string_view text, std::size_t line) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    parse_error(line, "expected an integer, got '" + std::string(text) + "'");
  }
  return value;
}

void expect_header(const std::vector<std::string>& got,
                   const std::vector<std::string>& want) {
  if (got != want) {
    std::string joined;
    for (const auto& w : want) joined += (joined.empty() ? "" : ",") + w;
    parse_error(1, "header must be '" + joined + "'");
  }
}

// Reads every non-empty line after the header.
template <typename Fn>
void for_each_row(std::istream& in, const std::vector<std::string>& header, Fn&& fn) {
  std::string line;
  if (!std::getline(in, line)) parse_error(1, "missing header");
  expect_header(split_csv_line(strip_cr(line), 1), header);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_csv_line(line, line_no);
    if (fields.size() != header.size()) {
      parse_error(line_no, "expected " + std::to_string(header.size()) +
                               " fields, got " + std::to_string(fields.size()));
    }
    fn(fields, line_no);
  }
}

fs::path sidecar_path(const fs::path& path) {
  fs::path p = path;
  return p.replace_extension(".json");
}

fs::path payload_path(const fs::path& path) {
  fs::path p = path;
  return p.replace_extension(".bin");
}

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

double parse_double(std::string_view text, std::size_t line) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    parse_error(line, "expected a number, got '" + std::string(text) + "'");
  }
  return value;
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  if (line.find('"') != std::string::npos) {
    parse_error(line_no, "quoted CSV fields are not supported");
  }
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

// ---------------------------------------------------------------- grids

LabeledInstanceGrid read_label_grid(const fs::path& path,
                                    const ClassRegistry& registry) {
  json header;
  {
    auto in = open_in(sidecar_path(path));
    try {
      in >> header;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParseError,
                  sidecar_path(path).string() + ": " + e.what());
    }
  }
  if (!header.contains("mpp") || !header["mpp"].is_number()) {
    throw Error(ErrorCode::kMissingMpp, sidecar_path(path).string());
  }
  if (!header.contains("height") || !header.contains("width") ||
      !header["height"].is_number_integer() || !header["width"].is_number_integer()) {
    throw Error(ErrorCode::kParseError,
                sidecar_path(path).string() + ": height/width missing");
  }
  if (header.value("dtype", std::string("u32")) != "u32") {
    throw Error(ErrorCode::kParseError, "only dtype u32 is supported");
  }
  if (header.contains("layers") &&
      header["layers"] != json::array({"instance", "class"})) {
    throw Error(ErrorCode::kParseError, "layers must be [\"instance\",\"class\"]");
  }
  const ClassRegistry file_registry =
      header.contains("classes") ? ClassRegistry::from_json(header["classes"]) : registry;

  const auto height = header["height"].get<std::int64_t>();
  const auto width = header["width"].get<std::int64_t>();
  if (height < 0 || width < 0) {
    throw Error(ErrorCode::kShapeMismatch, "negative grid shape");
  }
  const auto n = static_cast<std::size_t>(height * width);

  auto in = open_in(payload_path(path), std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() != 2 * n * 4) {
    throw Error(ErrorCode::kShapeMismatch,
                payload_path(path).string() + ": payload is " +
                    std::to_string(bytes.size()) + " bytes, expected " +
                    std::to_string(2 * n * 4));
  }
  auto word = [&](std::size_t i) {
    const unsigned char* b = bytes.data() + 4 * i;
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  };
  std::vector<std::uint32_t> instances(n);
  std::vector<std::uint8_t> classes(n);
  for (std::size_t i = 0; i < n; ++i) {
    instances[i] = word(i);
    const std::uint32_t cls = word(n + i);
    classes[i] = cls == 0 ? 0 : static_cast<std::uint8_t>(file_registry.from_id(cls));
  }
  return LabeledInstanceGrid(static_cast<int>(height), static_cast<int>(width),
                             std::move(instances), std::move(classes),
                             header["mpp"].get<double>());
}

void write_label_grid(const fs::path& path, const LabeledInstanceGrid& grid,
                      const ClassRegistry& registry) {
  nlohmann::ordered_json header;
  header["height"] = grid.height();
  header["width"] = grid.width();
  header["dtype"] = "u32";
  header["layers"] = {"instance", "class"};
  header["mpp"] = grid.mpp();
  header["classes"] = registry.to_json();
  {
    auto out = open_out(sidecar_path(path));
    out << header.dump(2) << '\n';
  }
  std::vector<unsigned char> bytes(grid.size() * 8);
  auto put = [&](std::size_t i, std::uint32_t v) {
    unsigned char* b = bytes.data() + 4 * i;
    b[0] = v & 0xff;
    b[1] = (v >> 8) & 0xff;
    b[2] = (v >> 16) & 0xff;
    b[3] = (v >> 24) & 0xff;
  };
  const auto inst = grid.instance_labels();
  const auto cls = grid.class_labels();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    put(i, inst[i]);
    put(grid.size() + i,
        cls[i] == 0 ? 0 : registry.to_id(static_cast<NucleusClass>(cls[i])));
  }
  auto out = open_out(payload_path(path), std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------- nuclei

namespace {

NucleusRecord record_from_json(const json& j, std::size_t line) {
  NucleusRecord r;
  try {
    r.nucleus_id = j.at("nucleus_id").get<std::int64_t>();
    const auto& cls = j.at("class");
    std::optional<NucleusClass> c;
    if (cls.is_string()) {
      c = class_from_name(cls.get<std::string>());
    } else if (cls.is_number_integer()) {
      const auto id = cls.get<std::int64_t>();
      if (id >= 1 && id <= kNumClasses) c = static_cast<NucleusClass>(id);
    }
    if (!c) parse_error(line, "unknown class " + cls.dump());
    r.cls = *c;
    r.centroid_x_um = j.at("centroid_x_um").get<double>();
    r.centroid_y_um = j.at("centroid_y_um").get<double>();
    for (const auto& v : j.at("contour")) {
      if (!v.is_array() || v.size() != 2) parse_error(line, "contour vertex must be [x, y]");
      r.contour.push_back({v[0].get<double>(), v[1].get<double>()});
    }
    r.area_px = j.at("area_px").get<std::int64_t>();
    r.image_id = j.at("image_id").get<std::string>();
    r.patient_id = j.at("patient_id").get<std::string>();
    if (j.contains("mpp") && !j["mpp"].is_null()) r.mpp = j["mpp"].get<double>();
  } catch (const json::exception& e) {
    parse_error(line, e.what());
  }
  try {
    validate(r);
  } catch (const Error& e) {
    throw Error(e.code(), "line " + std::to_string(line) + ": " + e.detail());
  }
  return r;
}

}  // namespace

std::vector<NucleusRecord> parse_nuclei_table(std::istream& in) {
  std::vector<NucleusRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      parse_error(line_no, e.what());
    }
    records.push_back(record_from_json(j, line_no));
  }
  return records;
}

std::vector<NucleusRecord> read_nuclei_table(const fs::path& path) {
  auto in = open_in(path);
  try {
    return parse_nuclei_table(in);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

void write_nuclei_table(std::ostream& out, const std::vector<NucleusRecord>& records) {
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["nucleus_id"] = r.nucleus_id;
    j["class"] = class_name(r.cls);
    j["centroid_x_um"] = r.centroid_x_um;
    j["centroid_y_um"] = r.centroid_y_um;
    auto contour = nlohmann::ordered_json::array();
    for (const auto& p : r.contour) contour.push_back({p.x, p.y});
    j["contour"] = std::move(contour);
    j["area_px"] = r.area_px;
    j["image_id"] = r.image_id;
    j["patient_id"] = r.patient_id;
    if (r.mpp) j["mpp"] = *r.mpp;
    out << j.dump() << '\n';
  }
}

void write_nuclei_table(const fs::path& path, const std::vector<NucleusRecord>& records) {
  auto out = open_out(path);
  write_nuclei_table(out, records);
}

// ---------------------------------------------------------------- counts

namespace {

std::vector<std::string> counts_header() {
  std::vector<std::string> h = {"image_id"};
  for (NucleusClass c : kClassesById) h.emplace_back(class_name(c));
  return h;
}

}  // namespace

std::vector<ClassCounts> parse_counts_table(std::istream& in) {
  std::vector<ClassCounts> rows;
  for_each_row(in, counts_header(), [&](const std::vector<std::string>& f, std::size_t line) {
    ClassCounts cc;
    cc.image_id = f[0];
    for (int i = 0; i < kNumClasses; ++i) {
      const auto v = parse_int(f[i + 1], line);
      if (v < 0) {
        throw Error(ErrorCode::kNegativeCount,
                    "line " + std::to_string(line) + ": " + f[i + 1] + " for " +
                        std::string(class_name(class_at(i))));
      }
      cc.counts[i] = v;
    }
    rows.push_back(std::move(cc));
  });
  return rows;
}

std::vector<ClassCounts> read_counts_table(const fs::path& path) {
  auto in = open_in(path);
  return parse_counts_table(in);
}

void write_counts_table(const fs::path& path, const std::vector<ClassCounts>& rows) {
  auto out = open_out(path);
  const auto header = counts_header();
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& r : rows) {
    out << r.image_id;
    for (auto v : r.counts) out << ',' << v;
    out << '\n';
  }
}

// ---------------------------------------------------------------- features

namespace {

const std::vector<std::string> kClinicalColumns = {"sex", "age", "stage"};

template <typename T>
std::optional<T> optional_field(const std::string& text, std::size_t line) {
  if (text.empty()) return std::nullopt;
  if constexpr (std::is_integral_v<T>) {
    return static_cast<T>(parse_int(text, line));
  } else {
    return parse_double(text, line);
  }
}

}  // namespace

FeatureMatrix parse_feature_matrix(std::istream& in,
                                   const std::vector<std::string>& expected_names) {
  std::string line;
  if (!std::getline(in, line)) parse_error(1, "missing header");
  const auto header = split_csv_line(strip_cr(line), 1);
  FeatureMatrix m;
  m.names = expected_names;
  const std::size_t base = expected_names.size() + 1;
  if (header.size() == base + kClinicalColumns.size()) {
    m.has_clinical = true;
  } else if (header.size() != base) {
    parse_error(1, "feature matrix must have " + std::to_string(base) + " or " +
                       std::to_string(base + 3) + " columns, got " +
                       std::to_string(header.size()));
  }
  if (header[0] != "patient_id") parse_error(1, "first column must be patient_id");
  for (std::size_t i = 0; i < expected_names.size(); ++i) {
    if (header[i + 1] != expected_names[i]) {
      parse_error(1, "column " + std::to_string(i + 1) + " is '" + header[i + 1] +
                         "', expected '" + expected_names[i] + "'");
    }
  }
  if (m.has_clinical) {
    for (std::size_t i = 0; i < kClinicalColumns.size(); ++i) {
      if (header[base + i] != kClinicalColumns[i]) {
        parse_error(1, "clinical columns must be sex,age,stage");
      }
    }
  }
  std::set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_csv_line(line, line_no);
    if (f.size() != header.size()) {
      parse_error(line_no, "expected " + std::to_string(header.size()) +
                               " fields, got " + std::to_string(f.size()));
    }
    PatientFeatureVector row;
    row.patient_id = f[0];
    if (!seen.insert(row.patient_id).second) {
      parse_error(line_no, "duplicate patient '" + row.patient_id + "'");
    }
    for (int i = 0; i < kNumFeatures; ++i) {
      row.values[i] = f[i + 1].empty() ? kMissing : parse_double(f[i + 1], line_no);
    }
    if (m.has_clinical) {
      ClinicalFields c;
      c.sex = optional_field<int>(f[base], line_no);
      c.age = optional_field<double>(f[base + 1], line_no);
      c.stage = optional_field<int>(f[base + 2], line_no);
      row.clinical = c;
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

FeatureMatrix read_feature_matrix(const fs::path& path) {
  return read_feature_matrix(path, canonical_feature_names());
}

FeatureMatrix read_feature_matrix(const fs::path& path,
                                  const std::vector<std::string>& expected_names) {
  if (expected_names.size() != static_cast<std::size_t>(kNumFeatures)) {
    throw Error(ErrorCode::kWidthMismatch, "feature layout must have 222 names");
  }
  auto in = open_in(path);
  return parse_feature_matrix(in, expected_names);
}

void write_feature_matrix(std::ostream& out, const FeatureMatrix& m) {
  out << "patient_id";
  for (const auto& n : m.names) out << ',' << n;
  if (m.has_clinical) {
    for (const auto& c : kClinicalColumns) out << ',' << c;
  }
  out << '\n';
  for (const auto& row : m.rows) {
    out << row.patient_id;
    for (double v : row.values) out << ',' << format_double(v);
    if (m.has_clinical) {
      const ClinicalFields c = row.clinical.value_or(ClinicalFields{});
      out << ',' << (c.sex ? std::to_string(*c.sex) : "");
      out << ',' << (c.age ? format_double(*c.age) : "");
      out << ',' << (c.stage ? std::to_string(*c.stage) : "");
    }
    out << '\n';
  }
}

void write_feature_matrix(const fs::path& path, const FeatureMatrix& m) {
  auto out = open_out(path);
  write_feature_matrix(out, m);
}

// ---------------------------------------------------------------- tables

std::map<std::string, std::string> read_manifest(const fs::path& path) {
  auto in = open_in(path);
  std::map<std::string, std::string> manifest;
  for_each_row(in, {"image_id", "patient_id"},
               [&](const std::vector<std::string>& f, std::size_t line) {
                 if (!manifest.emplace(f[0], f[1]).second) {
                   parse_error(line, "duplicate image '" + f[0] + "'");
                 }
               });
  return manifest;
}

void write_manifest(const fs::path& path,
                    const std::map<std::string, std::string>& manifest) {
  auto out = open_out(path);
  out << "image_id,patient_id\n";
  for (const auto& [image, patient] : manifest) out << image << ',' << patient << '\n';
}

std::map<std::string, int> read_grade_labels(const fs::path& path) {
  auto in = open_in(path);
  std::map<std::string, int> labels;
  for_each_row(in, {"patient_id", "grade"},
               [&](const std::vector<std::string>& f, std::size_t line) {
                 const auto g = parse_int(f[1], line);
                 if (g < 0) parse_error(line, "grade must be non-negative");
                 if (!labels.emplace(f[0], static_cast<int>(g)).second) {
                   parse_error(line, "duplicate patient '" + f[0] + "'");
                 }
               });
  return labels;
}

void write_grade_labels(const fs::path& path, const std::map<std::string, int>& labels) {
  auto out = open_out(path);
  out << "patient_id,grade\n";
  for (const auto& [patient, grade] : labels) out << patient << ',' << grade << '\n';
}

std::vector<SurvivalRecord> read_survival_table(const fs::path& path) {
  auto in = open_in(path);
  std::vector<SurvivalRecord> records;
  std::set<std::string> seen;
  for_each_row(in, {"patient_id", "time", "event"},
               [&](const std::vector<std::string>& f, std::size_t line) {
                 SurvivalRecord r;
                 r.patient_id = f[0];
                 r.time = parse_double(f[1], line);
                 const auto e = parse_int(f[2], line);
                 if (e != 0 && e != 1) parse_error(line, "event must be 0 or 1");
                 r.event = e == 1;
                 if (!seen.insert(r.patient_id).second) {
                   parse_error(line, "duplicate patient '" + r.patient_id + "'");
                 }
                 try {
                   validate(r);
                 } catch (const Error& err) {
                   throw Error(err.code(), "line " + std::to_string(line) + ": " + err.detail());
                 }
                 records.push_back(std::move(r));
               });
  return records;
}

void write_survival_table(const fs::path& path, const std::vector<SurvivalRecord>& records) {
  auto out = open_out(path);
  out << "patient_id,time,event\n";
  for (const auto& r : records) {
    out << r.patient_id << ',' << format_double(r.time) << ',' << (r.event ? 1 : 0) << '\n';
  }
}

}  // namespace conic::io
