#include "geode/model_core.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace geode {

void Hyperparams::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorKind::ConfigError, what);
  };
  require(a_sigma > 0.0, "a_sigma must be > 0");
  require(b_sigma > 0.0, "b_sigma must be > 0");
  require(a_tau > 0.0, "a_tau must be > 0");
  require(a_S > 0.0, "a_S must be > 0");
  require(b_R > 0.0, "b_R must be > 0");
  require(tol > 0.0, "tol must be > 0");
  require(d_upper >= 1, "d_upper must be >= 1");
  require(L >= 0 && L <= 20, "L must be in [0, 20]");
  require(iters >= 1, "iters must be ≥ 1");
  require(burn_in >= 0 && burn_in < iters, "burn_in must be in [0, iters)");
  require(thin >= 1, "thin must be ≥ 1");
}

double NodeParams::delta(int m) const {
  double product = 1.0;
  for (int k = 0; k <= m; ++k) product *= tau(k);
  return product;
}

std::vector<int> NodeParams::retained_indices() const {
  std::vector<int> out;
  for (int m = 0; m < dim(); ++m) {
    if (retained[static_cast<std::size_t>(m)]) out.push_back(m);
  }
  return out;
}

int NodeParams::retained_count() const {
  int count = 0;
  for (char r : retained) count += r ? 1 : 0;
  return count;
}

NodeParams make_node_params(int d) {
  NodeParams p;
  p.u = Vector::Ones(d);
  p.tau = Vector::Ones(d);
  p.retained.assign(static_cast<std::size_t>(d), 1);
  p.last_ratio = Vector::Zero(d);
  return p;
}

double node_log_likelihood(double A, std::span<const double> Z, std::span<const double> u, double sigma2,
                           Index D) {
  if (!std::isfinite(A)) throw Error(ErrorKind::NonFiniteInput, "A statistic is not finite");
  double log_u = 0.0;
  double explained = 0.0;
  for (std::size_t m = 0; m < u.size(); ++m) {
    if (!std::isfinite(Z[m])) throw Error(ErrorKind::NonFiniteInput, "Z statistic is not finite");
    log_u += std::log(u[m]);
    explained += (1.0 - u[m]) * Z[m] * Z[m];
  }
  return -0.5 * static_cast<double>(D) * std::log(2.0 * std::numbers::pi * sigma2) + 0.5 * log_u -
         0.5 * (A - explained) / sigma2;
}

double dense_log_likelihood(const Vector& y, const Vector& mu, const Matrix& Phi, const Vector& alpha2,
                            double sigma2) {
  const Index D = y.size();
  if (D > 2000) throw Error(ErrorKind::InvalidArgument, "dense likelihood limited to D <= 2000");
  Matrix cov = Phi * alpha2.asDiagonal() * Phi.transpose();
  cov.diagonal().array() += sigma2;
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::NotPositiveDefinite, "covariance factorisation failed");
  }
  const Vector r = y - mu;
  const Vector w = llt.matrixL().solve(r);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(D) * std::log(2.0 * std::numbers::pi) + log_det + w.squaredNorm());
}

}  // namespace geode
