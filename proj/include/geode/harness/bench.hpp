#pragma once

#include "geode/common.hpp"

#include <json.hpp>

#include <vector>

namespace geode {

struct BenchOptions {
  std::vector<Index> dims{500, 1000, 2000, 4000};
  Index n = 1000;
  int d_upper = 10;
  int L = 4;
  int iters = 100;
  int repeats = 5;
  int threads = 1;
  std::uint64_t seed = 1;
};

struct BenchPoint {
  Index D = 0;
  double stage1_seconds = 0.0;
  double stage2_seconds_per_iter = 0.0;
};

struct BenchReport {
  BenchOptions options;
  std::vector<BenchPoint> points;
  double stage1_r2 = 0.0;      // R^2 of a straight-line fit of stage-1 time on D
  double stage2_spread = 0.0;  // (max - min) / min of per-iteration stage-2 time
};

// Times both stages on Swissroll data over the D grid; each figure is the
// fastest of the repeats.
BenchReport run_bench(const BenchOptions& options);

double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y);

nlohmann::json bench_to_json(const BenchReport& report);
BenchReport bench_from_json(const nlohmann::json& j);

}  // namespace geode
