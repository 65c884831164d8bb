#include "geode/partition_tree.hpp"

#include <algorithm>
#include <iterator>
#include <limits>
#include <string>

namespace geode {

namespace {

// Available-case mean over the given rows; NaN where no row observes a column.
Vector available_mean(const DataSet& data, std::span<const Index> rows) {
  const Index D = data.cols();
  Vector sum = Vector::Zero(D);
  Eigen::VectorXi count = Eigen::VectorXi::Zero(D);
  for (Index i : rows) {
    const auto y = data.row(i);
    for (Index j = 0; j < D; ++j) {
      if (!std::isnan(y(j))) {
        sum(j) += y(j);
        ++count(j);
      }
    }
  }
  for (Index j = 0; j < D; ++j) {
    sum(j) = count(j) > 0 ? sum(j) / count(j) : std::numeric_limits<double>::quiet_NaN();
  }
  return sum;
}

// Squared distance over coordinates observed in both, rescaled to the full
// dimension so rows with different missingness are comparable.
double partial_sq_distance(const auto& y, const Vector& c) {
  double sum = 0.0;
  Index used = 0;
  for (Index j = 0; j < c.size(); ++j) {
    if (std::isnan(y(j)) || std::isnan(c(j))) continue;
    const double diff = y(j) - c(j);
    sum += diff * diff;
    ++used;
  }
  if (used == 0) return 0.0;
  return sum * static_cast<double>(c.size()) / static_cast<double>(used);
}

Index farthest_from(const DataSet& data, std::span<const Index> rows, const Vector& c, double* dist) {
  Index best = rows.front();
  double best_dist = -1.0;
  for (Index i : rows) {
    const double d = partial_sq_distance(data.row(i), c);
    if (d > best_dist) {
      best_dist = d;
      best = i;
    }
  }
  *dist = best_dist;
  return best;
}

}  // namespace

TwoMeansSplit two_means_split(const DataSet& data, std::span<const Index> rows, int max_iters) {
  TwoMeansSplit split;
  if (rows.size() < 2) {
    split.degenerate = true;
    return split;
  }
  const Vector mean = available_mean(data, rows);
  double spread = 0.0;
  const Index first = farthest_from(data, rows, mean, &spread);
  Vector c1 = data.row(first).transpose();
  double gap = 0.0;
  const Index second = farthest_from(data, rows, c1, &gap);
  Vector c2 = data.row(second).transpose();
  if (spread <= 0.0 || gap <= 0.0) {
    split.degenerate = true;
    return split;
  }
  // Centroid coordinates missing in the seed rows fall back to the cell mean.
  for (Index j = 0; j < mean.size(); ++j) {
    if (std::isnan(c1(j))) c1(j) = mean(j);
    if (std::isnan(c2(j))) c2(j) = mean(j);
  }

  std::vector<char> assign(rows.size(), 0);
  for (int iter = 0; iter < std::max(1, max_iters); ++iter) {
    bool changed = iter == 0;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto y = data.row(rows[k]);
      double d1 = 0.0;
      double d2 = 0.0;
      for (Index j = 0; j < y.size(); ++j) {
        if (std::isnan(y(j)) || std::isnan(c1(j)) || std::isnan(c2(j))) continue;
        d1 += (y(j) - c1(j)) * (y(j) - c1(j));
        d2 += (y(j) - c2(j)) * (y(j) - c2(j));
      }
      const char side = d2 < d1 ? 1 : 0;
      if (side != assign[k]) {
        assign[k] = side;
        changed = true;
      }
    }
    std::vector<Index> a;
    std::vector<Index> b;
    for (std::size_t k = 0; k < rows.size(); ++k) (assign[k] ? b : a).push_back(rows[k]);
    if (a.empty() || b.empty()) {
      split.degenerate = true;
      return split;
    }
    split.left = std::move(a);
    split.right = std::move(b);
    if (!changed) break;
    c1 = available_mean(data, split.left);
    c2 = available_mean(data, split.right);
  }
  return split;
}

ClusterTree build_tree(const DataSet& data, const TreeOptions& options) {
  if (data.rows() == 0) throw Error(ErrorKind::EmptyData, "cannot build a tree on zero observations");
  if (options.max_depth < 0) throw Error(ErrorKind::InvalidArgument, "max_depth must be >= 0");
  if (options.min_cell_size < 2) throw Error(ErrorKind::InvalidArgument, "min_cell_size must be >= 2");
  for (Index i = 0; i < data.rows(); ++i) {
    if (data.missing_count(i) == data.cols()) {
      throw Error(ErrorKind::EmptyData, "row " + std::to_string(i) + " has no observed entries");
    }
  }

  ClusterTree tree;
  tree.sample_size_ = data.rows();
  tree.cells_.assign(static_cast<std::size_t>(slot_count_for_depth(options.max_depth)), {});
  auto& root = tree.cells_[0];
  root.resize(static_cast<std::size_t>(data.rows()));
  for (Index i = 0; i < data.rows(); ++i) root[static_cast<std::size_t>(i)] = i;

  const int internal_slots = slot_count_for_depth(options.max_depth - 1);
  for (int slot = 0; slot < internal_slots; ++slot) {
    const auto& cell = tree.cells_[static_cast<std::size_t>(slot)];
    if (cell.empty()) continue;
    if (cell.size() < 2 * static_cast<std::size_t>(options.min_cell_size)) continue;
    TwoMeansSplit split = two_means_split(data, cell, options.max_lloyd_iters);
    if (split.degenerate) {
      const NodeId id = node_of(slot);
      tree.warnings_.push_back("DegenerateCell: cell (" + std::to_string(id.scale) + "," +
                               std::to_string(id.position) + ") has identical points; kept as leaf");
      continue;
    }
    if (split.left.size() < static_cast<std::size_t>(options.min_cell_size) ||
        split.right.size() < static_cast<std::size_t>(options.min_cell_size)) {
      continue;
    }
    tree.cells_[static_cast<std::size_t>(left_child(slot))] = std::move(split.left);
    tree.cells_[static_cast<std::size_t>(right_child(slot))] = std::move(split.right);
  }
  tree.finalize();
  return tree;
}

void ClusterTree::finalize() {
  depth_ = 0;
  nodes_.clear();
  for (int slot = 0; slot < slot_count(); ++slot) {
    if (!cells_[static_cast<std::size_t>(slot)].empty()) {
      nodes_.push_back(slot);
      depth_ = std::max(depth_, scale_of(slot));
    }
  }
  cells_.resize(static_cast<std::size_t>(slot_count_for_depth(depth_)));
  for (auto& cell : cells_) std::sort(cell.begin(), cell.end());
  leaf_of_.assign(static_cast<std::size_t>(sample_size_), 0);
  for (int slot : nodes_) {
    for (Index i : members(slot)) leaf_of_[static_cast<std::size_t>(i)] = slot;
  }
}

ClusterTree ClusterTree::from_cells(Index sample_size, std::vector<std::vector<Index>> cells) {
  ClusterTree tree;
  tree.sample_size_ = sample_size;
  int depth = 0;
  while (slot_count_for_depth(depth) < static_cast<int>(cells.size())) ++depth;
  cells.resize(static_cast<std::size_t>(slot_count_for_depth(depth)));
  tree.cells_ = std::move(cells);
  if (tree.cells_.empty() || static_cast<Index>(tree.cells_[0].size()) != sample_size) {
    throw Error(ErrorKind::FormatError, "root cell must hold every observation");
  }
  for (auto& cell : tree.cells_) std::sort(cell.begin(), cell.end());
  const auto& root = tree.cells_[0];
  for (std::size_t q = 0; q < root.size(); ++q) {
    if (root[q] != static_cast<Index>(q)) throw Error(ErrorKind::FormatError, "root cell must be 0..n-1");
  }
  for (int slot = 0; slot < tree.slot_count(); ++slot) {
    const int left = left_child(slot);
    if (left >= tree.slot_count()) break;
    const bool has_left = tree.exists(left);
    const bool has_right = tree.exists(left + 1);
    if (!has_left && !has_right) continue;
    if (!tree.exists(slot) || has_left != has_right) {
      throw Error(ErrorKind::FormatError, "tree cells violate nesting below slot " + std::to_string(slot));
    }
    std::vector<Index> merged;
    std::merge(tree.cells_[static_cast<std::size_t>(left)].begin(), tree.cells_[static_cast<std::size_t>(left)].end(),
               tree.cells_[static_cast<std::size_t>(left + 1)].begin(),
               tree.cells_[static_cast<std::size_t>(left + 1)].end(), std::back_inserter(merged));
    if (merged != tree.cells_[static_cast<std::size_t>(slot)]) {
      throw Error(ErrorKind::FormatError, "children of slot " + std::to_string(slot) + " do not partition it");
    }
  }
  tree.finalize();
  return tree;
}

std::vector<int> ClusterTree::nodes_at_scale(int scale) const {
  std::vector<int> out;
  if (scale < 0 || scale > depth_) return out;
  for (int slot = (1 << scale) - 1; slot < (1 << (scale + 1)) - 1; ++slot) {
    if (exists(slot)) out.push_back(slot);
  }
  return out;
}

std::vector<int> ClusterTree::frontier(int scale) const {
  std::vector<int> out;
  for (int slot : nodes_) {
    const int s = scale_of(slot);
    if (s == scale || (s < scale && is_leaf(slot))) out.push_back(slot);
  }
  return out;
}

}  // namespace geode
