#pragma once

#include "geode/common.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace geode {

// Ids "1".."6": Gaussian factor data N_D(0, Lambda Lambda^T + sigma2 I) with
// Lambda entries N(0, 25) and 10 sigma2 ~ chi-square(1).
// Ids "7".."9": Swissroll latent points with coordinate noise, y = Lambda eta.
// "threemix": three factor components with intrinsic dims 3, 5, 7.
// "parabola": eta = (t, t^2), t ~ U[-1, 1], y = Lambda eta + noise.
struct ScenarioSpec {
  std::string id = "1";
  Index n = 600;
  Index D = 200;
  int p = 10;
  bool missing = false;
  double missing_fraction = 0.2;
  // Swissroll coordinate noise variance.
  double roll_noise = 2.5e-5;
  std::uint64_t seed = 1;
};

struct ScenarioData {
  RowMatrix complete;
  RowMatrix observed;  // complete with the missing mask applied (NaN)
  RowMatrix latent;    // generating latent coordinates, one row per observation
  std::vector<int> labels;
  nlohmann::json truth;
};

ScenarioData simulate_scenario(const ScenarioSpec& spec);

}  // namespace geode
