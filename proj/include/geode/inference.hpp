#pragma once

#include "geode/common.hpp"
#include "geode/dictionary.hpp"
#include "geode/gibbs.hpp"
#include "geode/model_core.hpp"
#include "geode/partition_tree.hpp"

#include <span>
#include <vector>

namespace geode {

struct FittedModel {
  ClusterTree tree;
  MultiscaleDictionary dict;
  Hyperparams hyper;
  PosteriorDraws draws;

  Index ambient_dim() const { return dict.ambient_dim(); }
};

// log N(y_O; mu_O, Phi_O diag(alpha^2) Phi_O^T + sigma2 I) from the partial
// statistics, in O(d^3).
double partial_node_loglik(const Eigen::Ref<const Matrix>& gram, double B, const Eigen::Ref<const Vector>& C,
                           std::span<const double> u, double sigma2, Index observed);
// As above; when no coordinate is missing this is node_log_likelihood with
// A = B and Z = C.
double partial_node_loglik(const PartialStats& stats, std::span<const double> u, double sigma2, Index D);

// Posterior of the latent factor eta given the observed coordinates:
// covariance = factor * factor^T.
struct LatentPosterior {
  Vector mean;
  Matrix factor;

  Matrix covariance() const { return factor * factor.transpose(); }
};

LatentPosterior latent_posterior(const Eigen::Ref<const Matrix>& gram, const Eigen::Ref<const Vector>& C,
                                 std::span<const double> u, double sigma2);

// Per-draw log f^L(y). Missing coordinates are marginalised out.
Vector per_draw_log_density(const FittedModel& model, const Eigen::Ref<const Vector>& y);
// Log of the posterior-mean density (log-mean-exp over draws).
double log_density(const FittedModel& model, const Eigen::Ref<const Vector>& y);

struct ImputedEntry {
  Index column = 0;
  double mean = 0.0;
  double sd = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct ImputationDraw {
  int slot = 0;
  Vector eta;
  Vector missing_values;
};

struct ImputationResult {
  std::vector<ImputedEntry> entries;
  std::vector<ImputationDraw> draws;
};

// Draws the missing coordinates (NaN entries of y) once per posterior draw and
// summarises them with mean, sd and an equal-tailed 95% interval.
ImputationResult impute(const FittedModel& model, const Eigen::Ref<const Vector>& y, Rng& rng);

// impute() restricted to the given response columns, which must be missing in y.
std::vector<ImputedEntry> predict_response(const FittedModel& model, const Eigen::Ref<const Vector>& y,
                                           std::span<const Index> response, Rng& rng);

struct ClassVote {
  int label = 0;
  std::vector<double> distribution;
  std::vector<double> mean_log_density;
};

// Votes from a draws x classes matrix of log-densities. A draw with tied
// maxima splits its vote evenly; a tie in the vote mode goes to the class
// with the higher mean log-density, then to the lower index.
ClassVote vote(const Matrix& log_densities);
ClassVote classify(std::span<const FittedModel* const> models, const Eigen::Ref<const Vector>& y);

// Fraction of (collected adaptation step, observation) pairs in which each
// dimension is retained at the observation's node.
Vector inclusion_probabilities(const FittedModel& model);

}  // namespace geode
