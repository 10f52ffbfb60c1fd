#include "run_config.h"

#include <fstream>
#include <set>
#include <string>

namespace conic::cli {

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kConfigError, what); };
  if (radii_um.size() != 2) fail("exactly two radii are needed for the 222-feature layout");
  for (std::size_t i = 0; i < radii_um.size(); ++i) {
    if (!(radii_um[i] > 0.0)) fail("radii must be positive");
    if (i > 0 && !(radii_um[i] > radii_um[i - 1])) fail("radii must be strictly increasing");
  }
  if (crop_size < 1) fail("crop size must be >= 1");
  if (bootstrap_n < 1) fail("bootstrap n must be >= 1");
  if (search_n < 1) fail("search n must be >= 1");
  if (folds < 2) fail("folds must be >= 2");
  if (repeats < 1) fail("repeats must be >= 1");
  if (n_perm < 1) fail("n_perm must be >= 1");
  if (threads < 1) fail("threads must be >= 1");
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["classes"] = classes.to_json();
  j["crop_size"] = crop_size;
  j["radii_um"] = radii_um;
  j["bootstrap_n"] = bootstrap_n;
  j["search_n"] = search_n;
  j["folds"] = folds;
  j["repeats"] = repeats;
  j["n_perm"] = n_perm;
  j["seed"] = seed;
  return j;
}

RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kConfigError, "config must be a JSON object");
  static const std::set<std::string> known = {"classes", "crop_size", "radii_um", "bootstrap_n",
                                              "search_n", "folds",    "repeats",  "n_perm",
                                              "seed",    "threads"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw Error(ErrorCode::kConfigError, "unknown config key '" + key + "'");
  }
  RunConfig c;
  try {
    if (j.contains("classes")) c.classes = ClassRegistry::from_json(j["classes"]);
    c.crop_size = j.value("crop_size", c.crop_size);
    c.radii_um = j.value("radii_um", c.radii_um);
    c.bootstrap_n = j.value("bootstrap_n", c.bootstrap_n);
    c.search_n = j.value("search_n", c.search_n);
    c.folds = j.value("folds", c.folds);
    c.repeats = j.value("repeats", c.repeats);
    c.n_perm = j.value("n_perm", c.n_perm);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigError, e.what());
  }
  c.validate();
  return c;
}

RunConfig read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfigError, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace conic::cli
