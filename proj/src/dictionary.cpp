#include "geode/dictionary.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace geode {

namespace {

// Appends orthonormal columns to `basis` until it has `target` columns.
Matrix complete_basis(const Matrix& basis, Index target, Rng& rng) {
  const Index D = basis.rows();
  const Index have = basis.cols();
  if (have >= target) return basis;
  Matrix stacked(D, target);
  stacked.leftCols(have) = basis;
  for (Index j = have; j < target; ++j) {
    for (Index i = 0; i < D; ++i) stacked(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(stacked);
  const Matrix Q = qr.householderQ() * Matrix::Identity(D, target);
  Matrix out(D, target);
  out.leftCols(have) = basis;
  out.rightCols(target - have) = Q.rightCols(target - have);
  return out;
}

NodeDictionary fit_cell(const Matrix& cell, int d, const SvdOptions& svd_options, Rng& rng) {
  NodeDictionary node;
  node.mu = cell.colwise().mean().transpose();
  const Matrix centered = cell.rowwise() - node.mu.transpose();
  const int rank = static_cast<int>(std::min<Index>(d, std::min(cell.rows(), cell.cols())));
  RankDSvd svd = randomized_rank_d_svd(centered, rank, svd_options, rng);
  node.basis = complete_basis(svd.right_vectors, d, rng);
  node.singular_values = Vector::Zero(d);
  node.singular_values.head(rank) = svd.singular_values;
  return node;
}

}  // namespace

MultiscaleDictionary fit_dictionary(const ClusterTree& tree, const DataSet& data,
                                    const DictionaryOptions& options) {
  if (options.d_upper < 1) throw Error(ErrorKind::InvalidArgument, "d_upper must be >= 1");
  if (data.rows() != tree.sample_size()) {
    throw Error(ErrorKind::DimensionMismatch, "tree was built on " + std::to_string(tree.sample_size()) +
                                                  " rows, data has " + std::to_string(data.rows()));
  }
  const Index D = data.cols();
  const int d = static_cast<int>(std::min<Index>(options.d_upper, D));

  // Working copy in which missing entries are progressively filled: column
  // means first, then rank-d reconstructions cell by cell down the tree.
  RowMatrix filled = data.values();
  if (data.has_missing()) {
    for (Index j = 0; j < D; ++j) {
      double sum = 0.0;
      Index count = 0;
      for (Index i = 0; i < data.rows(); ++i) {
        if (data.observed(i, j)) {
          sum += data.values()(i, j);
          ++count;
        }
      }
      const double mean = count > 0 ? sum / static_cast<double>(count) : 0.0;
      for (Index i = 0; i < data.rows(); ++i) {
        if (!data.observed(i, j)) filled(i, j) = mean;
      }
    }
  }

  std::vector<NodeDictionary> nodes(static_cast<std::size_t>(tree.slot_count()));
  for (int scale = 0; scale <= tree.depth(); ++scale) {
    const std::vector<int> level = tree.nodes_at_scale(scale);
    detail::parallel_for(level.size(), options.threads, [&](std::size_t k) {
      const int slot = level[k];
      const auto rows = tree.members(slot);
      Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(slot)));
      Matrix cell(static_cast<Index>(rows.size()), D);
      bool any_missing = false;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        cell.row(static_cast<Index>(r)) = filled.row(rows[r]);
        any_missing = any_missing || data.missing_count(rows[r]) > 0;
      }
      if (any_missing) {
        for (int sweep = 0; sweep < options.impute_sweeps; ++sweep) {
          const NodeDictionary fit = fit_cell(cell, d, options.svd, rng);
          const Matrix centered = cell.rowwise() - fit.mu.transpose();
          const Matrix recon =
              (centered * fit.basis * fit.basis.transpose()).rowwise() + fit.mu.transpose();
          for (std::size_t r = 0; r < rows.size(); ++r) {
            for (Index j = 0; j < D; ++j) {
              if (!data.observed(rows[r], j)) cell(static_cast<Index>(r), j) = recon(static_cast<Index>(r), j);
            }
          }
        }
        // Children start from this cell's completion; rows of one level are
        // disjoint so the writes do not overlap.
        for (std::size_t r = 0; r < rows.size(); ++r) filled.row(rows[r]) = cell.row(static_cast<Index>(r));
      }
      nodes[static_cast<std::size_t>(slot)] = fit_cell(cell, d, options.svd, rng);
    });
  }
  return MultiscaleDictionary(D, d, std::move(nodes));
}

CompleteStats complete_node_stats(const NodeDictionary& node, const Eigen::Ref<const Vector>& y) {
  const Vector centered = y - node.mu;
  return CompleteStats{centered.squaredNorm(), node.basis.transpose() * centered};
}

PartialStats partial_node_stats(const NodeDictionary& node, const Eigen::Ref<const Vector>& y) {
  const Index D = y.size();
  const Index d = node.basis.cols();
  PartialStats out;
  out.gram = Matrix::Zero(d, d);
  out.C = Vector::Zero(d);
  for (Index j = 0; j < D; ++j) {
    if (std::isnan(y(j))) continue;
    const double r = y(j) - node.mu(j);
    const auto phi = node.basis.row(j);
    out.B += r * r;
    out.C += r * phi.transpose();
    out.gram.noalias() += phi.transpose() * phi;
    ++out.observed;
  }
  return out;
}

SuffStats precompute_stats(const MultiscaleDictionary& dict, const ClusterTree& tree, const DataSet& data,
                           int threads) {
  if (data.cols() != dict.ambient_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "data has " + std::to_string(data.cols()) +
                                                  " columns, dictionary expects " +
                                                  std::to_string(dict.ambient_dim()));
  }
  for (int slot : tree.nodes()) {
    if (!dict.covers(slot)) {
      throw Error(ErrorKind::DimensionMismatch, "dictionary has no entry for tree slot " + std::to_string(slot));
    }
  }
  SuffStats stats;
  stats.dim_ = dict.dim();
  stats.n_ = data.rows();
  stats.slots_ = tree.slot_count();
  const int d = stats.dim_;
  const std::size_t n = static_cast<std::size_t>(stats.n_);
  const std::size_t slots = static_cast<std::size_t>(stats.slots_);

  std::vector<Index> complete_rows;
  stats.partial_pos_.assign(n, -1);
  for (Index i = 0; i < data.rows(); ++i) {
    if (data.missing_count(i) > 0) {
      stats.partial_pos_[static_cast<std::size_t>(i)] = static_cast<Index>(stats.partial_rows_.size());
      stats.partial_rows_.push_back(i);
    } else {
      complete_rows.push_back(i);
    }
  }
  const std::size_t np = stats.partial_rows_.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  stats.A_.assign(slots * n, nan);
  stats.Z_.assign(slots * n * static_cast<std::size_t>(d), nan);
  stats.gram_.assign(slots * np * static_cast<std::size_t>(d * d), nan);
  stats.B_.assign(slots * np, nan);
  stats.C_.assign(slots * np * static_cast<std::size_t>(d), nan);
  stats.observed_.resize(np);
  for (std::size_t p = 0; p < np; ++p) {
    stats.observed_[p] = data.cols() - data.missing_count(stats.partial_rows_[p]);
  }

  constexpr Index kBlock = 256;
  const std::vector<int>& nodes = tree.nodes();
  detail::parallel_for(nodes.size(), threads, [&](std::size_t k) {
    const int slot = nodes[k];
    const NodeDictionary& node = dict.node(slot);
    for (std::size_t start = 0; start < complete_rows.size(); start += kBlock) {
      const Index rows = std::min<Index>(kBlock, static_cast<Index>(complete_rows.size() - start));
      Matrix centered(rows, data.cols());
      for (Index r = 0; r < rows; ++r) {
        centered.row(r) = data.row(complete_rows[start + static_cast<std::size_t>(r)]) - node.mu.transpose();
      }
      const Matrix Z = centered * node.basis;
      for (Index r = 0; r < rows; ++r) {
        const Index i = complete_rows[start + static_cast<std::size_t>(r)];
        const std::size_t at = stats.flat(slot, i);
        stats.A_[at] = centered.row(r).squaredNorm();
        for (int m = 0; m < d; ++m) stats.Z_[at * static_cast<std::size_t>(d) + static_cast<std::size_t>(m)] = Z(r, m);
      }
    }
    for (Index i : stats.partial_rows_) {
      const PartialStats ps = partial_node_stats(node, data.row(i).transpose());
      const std::size_t at = stats.pflat(slot, i);
      stats.B_[at] = ps.B;
      std::copy(ps.C.data(), ps.C.data() + d, stats.C_.begin() + static_cast<std::ptrdiff_t>(at * static_cast<std::size_t>(d)));
      std::copy(ps.gram.data(), ps.gram.data() + d * d,
                stats.gram_.begin() + static_cast<std::ptrdiff_t>(at * static_cast<std::size_t>(d * d)));
    }
  });
  return stats;
}

}  // namespace geode
