#pragma once

#include "geode/common.hpp"
#include "geode/partition_tree.hpp"

#include <span>
#include <vector>

namespace geode {

struct SvdOptions {
  int oversample = 10;
  int power_iters = 2;
};

struct RankDSvd {
  Vector singular_values;  // non-increasing
  Matrix right_vectors;    // D x d, orthonormal columns
};

// Randomized range finder followed by an exact SVD of the projected matrix.
// Throws InvalidRank when d > min(rows, cols).
RankDSvd randomized_rank_d_svd(const Matrix& M, int d, const SvdOptions& options, Rng& rng);

struct NodeDictionary {
  Vector mu;               // cell mean
  Matrix basis;            // D x d, orthonormal columns, ordered by singular value
  Vector singular_values;  // non-increasing, zero-padded for small cells
};

struct DictionaryOptions {
  int d_upper = 10;
  SvdOptions svd;
  // Rank-d reconstruction sweeps used to fill missing entries of a cell
  // before its mean and basis are taken.
  int impute_sweeps = 5;
  int threads = 1;
  std::uint64_t seed = 0;
};

class MultiscaleDictionary {
 public:
  MultiscaleDictionary() = default;
  MultiscaleDictionary(Index ambient_dim, int dim, std::vector<NodeDictionary> nodes)
      : ambient_dim_(ambient_dim), dim_(dim), nodes_(std::move(nodes)) {}

  Index ambient_dim() const { return ambient_dim_; }
  int dim() const { return dim_; }
  int slot_count() const { return static_cast<int>(nodes_.size()); }
  const NodeDictionary& node(int slot) const { return nodes_[static_cast<std::size_t>(slot)]; }
  bool covers(int slot) const {
    return slot >= 0 && slot < slot_count() && nodes_[static_cast<std::size_t>(slot)].mu.size() == ambient_dim_;
  }

 private:
  Index ambient_dim_ = 0;
  int dim_ = 0;
  std::vector<NodeDictionary> nodes_;
};

// Per-cell mean and rank-d basis for every tree node. d_upper is clamped to
// the ambient dimension. Cells with rank below d are completed with
// orthonormal columns carrying zero singular values.
MultiscaleDictionary fit_dictionary(const ClusterTree& tree, const DataSet& data,
                                    const DictionaryOptions& options);

// Statistics of one observation against one node when some coordinates are
// missing: Gram = Phi_O^T Phi_O, B = |y_O - mu_O|^2, C = Phi_O^T (y_O - mu_O).
struct PartialStats {
  Matrix gram;
  double B = 0.0;
  Vector C;
  Index observed = 0;
};

struct CompleteStats {
  double A = 0.0;
  Vector Z;
};

CompleteStats complete_node_stats(const NodeDictionary& node, const Eigen::Ref<const Vector>& y);
PartialStats partial_node_stats(const NodeDictionary& node, const Eigen::Ref<const Vector>& y);

// Flat (node, observation) arrays of the sufficient statistics. Complete rows
// carry (A, Z) at every node; rows with missing entries carry (Gram, B, C).
class SuffStats {
 public:
  SuffStats() = default;

  int dim() const { return dim_; }
  Index observations() const { return n_; }
  int slot_count() const { return slots_; }

  bool is_partial(Index i) const { return partial_pos_[static_cast<std::size_t>(i)] >= 0; }
  const std::vector<Index>& partial_rows() const { return partial_rows_; }

  double A(int slot, Index i) const { return A_[flat(slot, i)]; }
  std::span<const double> Z(int slot, Index i) const {
    return {Z_.data() + flat(slot, i) * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }

  // Partial-row accessors; i is the observation index.
  Eigen::Map<const Matrix> gram(int slot, Index i) const {
    return Eigen::Map<const Matrix>(gram_.data() + pflat(slot, i) * static_cast<std::size_t>(dim_ * dim_), dim_, dim_);
  }
  double B(int slot, Index i) const { return B_[pflat(slot, i)]; }
  Eigen::Map<const Vector> C(int slot, Index i) const {
    return Eigen::Map<const Vector>(C_.data() + pflat(slot, i) * static_cast<std::size_t>(dim_), dim_);
  }
  Index observed_count(Index i) const { return observed_[static_cast<std::size_t>(partial_pos_[static_cast<std::size_t>(i)])]; }

 private:
  friend SuffStats precompute_stats(const MultiscaleDictionary&, const ClusterTree&, const DataSet&, int);

  std::size_t flat(int slot, Index i) const {
    return static_cast<std::size_t>(slot) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(i);
  }
  std::size_t pflat(int slot, Index i) const {
    return static_cast<std::size_t>(slot) * partial_rows_.size() +
           static_cast<std::size_t>(partial_pos_[static_cast<std::size_t>(i)]);
  }

  int dim_ = 0;
  Index n_ = 0;
  int slots_ = 0;
  std::vector<double> A_;
  std::vector<double> Z_;
  std::vector<Index> partial_rows_;
  std::vector<Index> partial_pos_;
  std::vector<double> gram_;
  std::vector<double> B_;
  std::vector<double> C_;
  std::vector<Index> observed_;
};

SuffStats precompute_stats(const MultiscaleDictionary& dict, const ClusterTree& tree, const DataSet& data,
                           int threads = 1);

}  // namespace geode
