#pragma once

#include "geode/harness/config.hpp"
#include "geode/inference.hpp"

#include <string>

namespace geode {

// Binary container: a magic line, the header length as a little-endian
// uint64, a JSON header describing shapes, settings and the block list, then
// the blocks as little-endian float64 arrays.
struct ModelBundle {
  FittedModel model;
  RunConfig config;
};

std::string serialize_model(const FittedModel& model, const RunConfig& config);
ModelBundle deserialize_model(const std::string& bytes);

void save_model(const std::string& path, const FittedModel& model, const RunConfig& config);
ModelBundle load_model(const std::string& path);

}  // namespace geode
