#pragma once

#include "geode/common.hpp"

#include <span>
#include <vector>

namespace geode {

// Model and sampler settings. Defaults follow the published choices where
// they exist (a_sigma = b_sigma = 1/2, a_tau = 0.05, c0 = -1, c1 = -0.005,
// tol = 1e-4, 1000 iterations with 500 burn-in).
struct Hyperparams {
  double a_sigma = 0.5;
  double b_sigma = 0.5;
  double a_tau = 0.05;
  double a_S = 1.0;
  double b_R = 1.0;
  double c0 = -1.0;
  double c1 = -0.005;
  double tol = 1e-4;
  int d_upper = 10;
  int L = 6;
  int iters = 1000;
  int burn_in = 500;
  int thin = 1;
  std::uint64_t seed = 1;

  // Throws ConfigError on an out-of-range field.
  void validate() const;
};

// Shrinkage state of one node. Deleted dimensions keep u = 1 exactly and
// remember the ratio they had when they were removed.
struct NodeParams {
  Vector u;
  Vector tau;
  std::vector<char> retained;
  Vector last_ratio;

  int dim() const { return static_cast<int>(u.size()); }
  // delta_m = prod_{k <= m} tau_k (0-based m).
  double delta(int m) const;
  std::vector<int> retained_indices() const;
  int retained_count() const;
};

NodeParams make_node_params(int d);

struct ScaleParams {
  Vector sigma2;  // one entry per scale 0..L
};

struct StickState {
  Vector S;   // stopping probability per slot (1 at leaves)
  Vector R;   // go-right probability per slot
  Vector pi;  // truncated mixture weight per slot (0 for absent slots)
};

inline double alpha2_from_u(double u, double sigma2) { return sigma2 * (1.0 / u - 1.0); }
inline double u_from_alpha2(double alpha2, double sigma2) { return 1.0 / (1.0 + alpha2 / sigma2); }

// log N_D(y; mu, Phi diag(alpha^2) Phi^T + sigma2 I) from the node
// statistics A = |y - mu|^2 and Z = Phi^T (y - mu), with u_m = (1 + alpha_m^2/sigma2)^-1.
double node_log_likelihood(double A, std::span<const double> Z, std::span<const double> u, double sigma2,
                           Index D);

// Same density with the covariance formed and factorised explicitly. Guarded
// to D <= 2000; throws NotPositiveDefinite when the factorisation fails.
double dense_log_likelihood(const Vector& y, const Vector& mu, const Matrix& Phi, const Vector& alpha2,
                            double sigma2);

// Exponential with the given rate truncated to [1, inf), by inversion.
double trunc_exp_quantile(double rate, double U);
double sample_trunc_exp(double rate, Rng& rng);

// Gamma(shape, rate) conditioned on (0, 1), by inversion of the regularised
// incomplete gamma function. When P(X < 1) underflows, the draw comes from
// the boundary-layer exponential 1 - E / (shape - 1 - rate).
double trunc_gamma01_quantile(double shape, double rate, double U);
double sample_trunc_gamma01(double shape, double rate, Rng& rng);

// Log density of the truncated gamma on (0, 1), normalising constant included.
double trunc_gamma01_log_density(double x, double shape, double rate);

// Adaptation probability p(t) = exp(c0 + c1 t).
inline double adaptation_probability(double c0, double c1, int t) {
  return std::exp(c0 + c1 * static_cast<double>(t));
}

}  // namespace geode
