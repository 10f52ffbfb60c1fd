#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "conic/core.h"
#include "json.hpp"

namespace conic::cli {

struct RunConfig {
  ClassRegistry classes = ClassRegistry::standard();
  int crop_size = 224;  // central square for counting
  std::vector<double> radii_um = {200.0, 400.0};
  int bootstrap_n = 100;
  int search_n = 2048;
  int folds = 5;
  int repeats = 5;
  int n_perm = 5;
  std::uint64_t seed = 0;
  int threads = 1;

  // ConfigError on radii that are not positive and strictly increasing,
  // folds < 2 and other unusable values.
  void validate() const;

  // Everything that can change a result. The thread count is left out:
  // results do not depend on it.
  nlohmann::ordered_json to_json() const;
};

// Unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig read_config(const std::filesystem::path& path);

}  // namespace conic::cli
