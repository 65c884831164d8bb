#pragma once

#include "geode/model_core.hpp"

#include <json.hpp>

#include <string>

namespace geode {

// Everything a fit needs besides the data. Read from a JSON object whose keys
// are the field names below; unknown keys are rejected.
struct RunConfig {
  Hyperparams hyper;
  // 0 selects 2 * d_upper.
  int min_cell_size = 0;
  int max_lloyd_iters = 100;
  int oversample = 10;
  int power_iters = 2;
  int impute_sweeps = 5;
  int threads = 1;

  void validate() const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& config);
RunConfig load_config(const std::string& path);

}  // namespace geode
