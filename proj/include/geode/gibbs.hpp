#pragma once

#include "geode/common.hpp"
#include "geode/dictionary.hpp"
#include "geode/model_core.hpp"
#include "geode/partition_tree.hpp"

#include <functional>
#include <vector>

namespace geode {

// Occupancy counts implied by the memberships: stop = n_{s,h} (observations
// allocated to the node), pass = v_{s,h} (allocated to the node or below),
// right = r_{s,h} (passing on through the right child), per_scale = n_s.
struct Counts {
  std::vector<Index> stop;
  std::vector<Index> pass;
  std::vector<Index> right;
  std::vector<Index> per_scale;

  friend bool operator==(const Counts&, const Counts&) = default;
};

Counts count_memberships(const std::vector<int>& membership, const ClusterTree& tree);

struct ChainState {
  std::vector<int> membership;  // tree slot per observation
  StickState stick;
  std::vector<NodeParams> nodes;  // per slot; absent slots keep empty params
  ScaleParams scales;
  int iter = 0;
  Counts counts;
  // (A, Z) of every observation at its current node. Rows with missing
  // entries get these from the imputation drawn during the membership sweep.
  Vector cur_A;
  RowMatrix cur_Z;
};

struct SamplerContext {
  const ClusterTree& tree;
  const MultiscaleDictionary& dict;
  const SuffStats& stats;
  const DataSet& data;
  const Hyperparams& hyper;
};

// Truncated multiscale stick-breaking weights. Leaves (scale L and ragged
// leaves) stop with probability one.
Vector compute_weights(const Vector& S, const Vector& R, const ClusterTree& tree);

struct BetaParams {
  double a = 1.0;
  double b = 1.0;
};

struct GammaParams {
  double shape = 1.0;
  double rate = 1.0;
};

BetaParams stop_posterior(const Counts& counts, int slot, const Hyperparams& hyper);
BetaParams right_posterior(const Counts& counts, int slot, const Hyperparams& hyper);
// z2_sum is the sum of squared m-th scores over the observations stopped at
// the node.
GammaParams u_posterior(const NodeParams& node, int m, Index stopped, double z2_sum, double sigma2);
// Rate a_tau - sum_{j >= m, retained} log u_j.
double tau_posterior_rate(const NodeParams& node, int m, double a_tau);
// quad_sum is sum over C_s of A - sum_j (1 - u_j) Z_j^2.
GammaParams sigma_posterior(const Hyperparams& hyper, Index D, Index n_scale, double quad_sum);

// Sum over C_s of the bracket above, from the chain's current statistics.
double scale_quad_sum(const ChainState& state, int scale);

// Log weights log pi_k + log f_k(y_i) over the tree slots (-inf for absent
// slots), using the marginal density of the observed part for partial rows.
Vector membership_log_weights(const ChainState& state, const SamplerContext& ctx, Index i);

void sample_membership(ChainState& state, const SamplerContext& ctx, Rng& rng);
void update_sticks(ChainState& state, const ClusterTree& tree, const Hyperparams& hyper, Rng& rng);
void update_u(ChainState& state, const SamplerContext& ctx, Rng& rng);
void update_tau(ChainState& state, const ClusterTree& tree, const Hyperparams& hyper, Rng& rng);
void update_sigma(ChainState& state, const SamplerContext& ctx, Rng& rng);

struct AdaptationOutcome {
  int deleted = 0;
  int reinserted = 0;
};

// Deletes every retained dimension whose ratio alpha_m^2 / max_j alpha_j^2 is
// below tol; when none qualifies, re-inserts one deleted dimension drawn in
// proportion to its last ratio. At least one dimension is always kept.
AdaptationOutcome adapt_node(NodeParams& node, double sigma2, const Hyperparams& hyper, Rng& rng);
AdaptationOutcome apply_adaptation(ChainState& state, const ClusterTree& tree, const Hyperparams& hyper, Rng& rng);
// Runs apply_adaptation with probability p(t); returns whether it ran.
bool adapt_dimensions(ChainState& state, const ClusterTree& tree, const Hyperparams& hyper, Rng& rng, int t,
                      AdaptationOutcome* outcome = nullptr);

ChainState initialize_chain(const SamplerContext& ctx, Rng& rng);

struct Snapshot {
  int iter = 0;
  std::vector<int> membership;
  StickState stick;
  std::vector<NodeParams> nodes;
  ScaleParams scales;
};

struct AdaptationRecord {
  int iter = 0;
  bool collected = false;  // after burn-in
  int deleted = 0;
  int reinserted = 0;
  // Number of observations whose current node retains dimension j.
  std::vector<Index> inclusion;
  Index observations = 0;
};

struct PosteriorDraws {
  std::vector<Snapshot> snapshots;
  std::vector<AdaptationRecord> adaptation_log;
};

struct IterationRecord {
  int iter = 0;
  Vector sigma2;
  int retained_total = 0;
  bool adapted = false;
  AdaptationOutcome outcome;
};

using IterationObserver = std::function<void(const IterationRecord&)>;

struct GibbsRun {
  ChainState state;
  PosteriorDraws draws;
};

GibbsRun run_gibbs(const SamplerContext& ctx, const IterationObserver& observer = {});

}  // namespace geode
