#pragma once

#include "geode/dictionary.hpp"
#include "geode/partition_tree.hpp"

#include <string>
#include <vector>

namespace geode {

// Multiscale principal component regression: at scale s, each cell of the
// level-s partition regresses the response coordinate on the d local
// principal scores of the other coordinates. Test rows go to the cell whose
// centre is nearest on the non-response coordinates.
struct MpcrResult {
  int scale = 0;
  double mse = 0.0;
  Vector predictions;
  // Cells too small for the regression; they predict their mean response.
  int fallback_cells = 0;
  std::vector<std::string> warnings;
};

MpcrResult mpcr_baseline(const ClusterTree& tree, const MultiscaleDictionary& dict, const DataSet& train,
                         const RowMatrix& test, Index response, int scale);

}  // namespace geode
