#include "geode/dictionary.hpp"

#include <algorithm>
#include <string>

namespace geode {

namespace {

Matrix orthonormal_columns(const Matrix& Y) {
  Eigen::HouseholderQR<Matrix> qr(Y);
  return qr.householderQ() * Matrix::Identity(Y.rows(), Y.cols());
}

}  // namespace

RankDSvd randomized_rank_d_svd(const Matrix& M, int d, const SvdOptions& options, Rng& rng) {
  const Index n = M.rows();
  const Index D = M.cols();
  const Index max_rank = std::min(n, D);
  if (d < 0 || d > max_rank) {
    throw Error(ErrorKind::InvalidRank, "rank " + std::to_string(d) + " exceeds min(rows, cols) = " +
                                            std::to_string(max_rank));
  }
  RankDSvd out;
  if (d == 0) {
    out.singular_values = Vector(0);
    out.right_vectors = Matrix(D, 0);
    return out;
  }
  const Index sketch = std::min<Index>(d + std::max(0, options.oversample), max_rank);

  Matrix omega(D, sketch);
  for (Index j = 0; j < sketch; ++j) {
    for (Index i = 0; i < D; ++i) omega(i, j) = rng.normal();
  }
  Matrix Q = orthonormal_columns(M * omega);
  for (int it = 0; it < options.power_iters; ++it) {
    const Matrix W = orthonormal_columns(M.transpose() * Q);
    Q = orthonormal_columns(M * W);
  }
  // B^T = M^T Q is D x sketch; its left singular vectors are the right
  // singular vectors of B = Q^T M.
  const Matrix Bt = M.transpose() * Q;
  Eigen::JacobiSVD<Matrix> svd(Bt, Eigen::ComputeThinU);

  out.singular_values = svd.singularValues().head(d);
  out.right_vectors = svd.matrixU().leftCols(d);
  // Fix the sign of each vector so its largest-magnitude entry is positive.
  for (Index j = 0; j < d; ++j) {
    Index arg = 0;
    out.right_vectors.col(j).cwiseAbs().maxCoeff(&arg);
    if (out.right_vectors(arg, j) < 0.0) out.right_vectors.col(j) *= -1.0;
  }
  return out;
}

}  // namespace geode
