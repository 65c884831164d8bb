#pragma once

#include "geode/harness/config.hpp"
#include "geode/inference.hpp"

namespace geode {

struct StageOneResult {
  ClusterTree tree;
  MultiscaleDictionary dict;
  SuffStats stats;
};

// Tree, dictionary and sufficient statistics.
StageOneResult run_stage_one(const DataSet& data, const RunConfig& config);

// Both stages; the observer sees one record per Gibbs iteration.
FittedModel fit_model(const DataSet& data, const RunConfig& config, const IterationObserver& observer = {});

}  // namespace geode
