#pragma once

#include "geode/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace geode {

struct TreeOptions {
  int max_depth = 6;
  // A cell is only split when both children keep at least this many points.
  int min_cell_size = 20;
  int max_lloyd_iters = 100;
  std::uint64_t seed = 0;
};

// Binary clustering tree of dyadic cells over the training sample. Cells that
// cannot be split stay leaves at their own scale, so the tree may be ragged.
class ClusterTree {
 public:
  ClusterTree() = default;

  // Rebuilds a tree from per-slot index sets; an empty set marks an absent
  // slot. Throws FormatError if the sets violate the nesting rules.
  static ClusterTree from_cells(Index sample_size, std::vector<std::vector<Index>> cells);

  int depth() const { return depth_; }
  int slot_count() const { return static_cast<int>(cells_.size()); }
  Index sample_size() const { return sample_size_; }

  bool exists(int slot) const {
    return slot >= 0 && slot < slot_count() && !cells_[static_cast<std::size_t>(slot)].empty();
  }
  bool is_leaf(int slot) const { return exists(slot) && !exists(left_child(slot)); }
  std::span<const Index> members(int slot) const { return cells_[static_cast<std::size_t>(slot)]; }

  // Existing slots in heap order.
  const std::vector<int>& nodes() const { return nodes_; }
  std::vector<int> nodes_at_scale(int scale) const;
  // Level-s nodes plus leaves above scale s; their cells partition the sample.
  std::vector<int> frontier(int scale) const;
  // Deepest node containing observation i.
  int leaf_of(Index i) const { return leaf_of_[static_cast<std::size_t>(i)]; }

  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  friend ClusterTree build_tree(const DataSet&, const TreeOptions&);
  void finalize();

  int depth_ = 0;
  Index sample_size_ = 0;
  std::vector<std::vector<Index>> cells_;
  std::vector<int> nodes_;
  std::vector<int> leaf_of_;
  std::vector<std::string> warnings_;
};

// Recursive 2-means splitting (farthest-point initialisation, Lloyd
// iterations, ties to the first centroid). Missing coordinates are skipped
// in distances and centroid means.
ClusterTree build_tree(const DataSet& data, const TreeOptions& options);

// Result of a single 2-means split of the given rows; exposed for testing.
struct TwoMeansSplit {
  std::vector<Index> left;
  std::vector<Index> right;
  bool degenerate = false;
};
TwoMeansSplit two_means_split(const DataSet& data, std::span<const Index> rows, int max_iters);

}  // namespace geode
