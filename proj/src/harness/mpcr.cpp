#include "geode/harness/mpcr.hpp"

#include <limits>

namespace geode {

namespace {

struct CellModel {
  int slot = 0;
  Vector centre;  // non-response coordinates of the cell mean
  Matrix scores_basis;  // (D - 1) x d
  Vector mu_rest;
  Vector coef;  // intercept first; empty for the mean fallback
  double mean_response = 0.0;
};

Vector drop(const Eigen::Ref<const Vector>& v, Index r) {
  Vector out(v.size() - 1);
  out.head(r) = v.head(r);
  out.tail(v.size() - 1 - r) = v.tail(v.size() - 1 - r);
  return out;
}

Matrix drop_row(const Matrix& m, Index r) {
  Matrix out(m.rows() - 1, m.cols());
  out.topRows(r) = m.topRows(r);
  out.bottomRows(m.rows() - 1 - r) = m.bottomRows(m.rows() - 1 - r);
  return out;
}

}  // namespace

MpcrResult mpcr_baseline(const ClusterTree& tree, const MultiscaleDictionary& dict, const DataSet& train,
                         const RowMatrix& test, Index response, int scale) {
  const Index D = dict.ambient_dim();
  if (train.cols() != D || test.cols() != D) throw Error(ErrorKind::DimensionMismatch, "data width differs from model");
  if (response < 0 || response >= D) throw Error(ErrorKind::InvalidArgument, "response index out of range");
  if (scale < 0 || scale > tree.depth()) {
    throw Error(ErrorKind::InvalidArgument, "scale " + std::to_string(scale) + " outside the tree");
  }
  if (D < 2) throw Error(ErrorKind::InvalidArgument, "need at least one predictor coordinate");
  const int d = dict.dim();

  MpcrResult result;
  result.scale = scale;
  std::vector<CellModel> cells;
  for (int k : tree.frontier(scale)) {
    const NodeDictionary& node = dict.node(k);
    CellModel cm;
    cm.slot = k;
    cm.mu_rest = drop(node.mu, response);
    cm.centre = cm.mu_rest;
    cm.scores_basis = drop_row(node.basis, response);
    std::vector<Index> rows;
    for (Index i : tree.members(k)) {
      if (train.missing_count(i) == 0) rows.push_back(i);
    }
    double sum = 0.0;
    for (Index i : rows) sum += train.values()(i, response);
    cm.mean_response = rows.empty() ? node.mu(response) : sum / static_cast<double>(rows.size());
    if (static_cast<Index>(rows.size()) < d + 2) {
      ++result.fallback_cells;
      result.warnings.push_back("EmptyCellAtScale: cell " + std::to_string(k) + " has " + std::to_string(rows.size()) +
                                " complete rows; using its mean response");
    } else {
      Matrix X(static_cast<Index>(rows.size()), d + 1);
      Vector yv(static_cast<Index>(rows.size()));
      for (std::size_t q = 0; q < rows.size(); ++q) {
        const Vector y = train.values().row(rows[q]).transpose();
        const Vector rest = drop(y, response) - cm.mu_rest;
        X(static_cast<Index>(q), 0) = 1.0;
        X.row(static_cast<Index>(q)).tail(d) = (cm.scores_basis.transpose() * rest).transpose();
        yv(static_cast<Index>(q)) = y(response);
      }
      cm.coef = X.colPivHouseholderQr().solve(yv);
    }
    cells.push_back(std::move(cm));
  }

  result.predictions.resize(test.rows());
  double sse = 0.0;
  for (Index i = 0; i < test.rows(); ++i) {
    const Vector y = test.row(i).transpose();
    const Vector rest = drop(y, response);
    const CellModel* best = nullptr;
    double best_dist = std::numeric_limits<double>::infinity();
    for (const CellModel& cm : cells) {
      double dist = 0.0;
      for (Index j = 0; j < rest.size(); ++j) {
        if (std::isnan(rest(j))) continue;
        const double diff = rest(j) - cm.centre(j);
        dist += diff * diff;
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = &cm;
      }
    }
    double pred = best->mean_response;
    if (best->coef.size() > 0) {
      Vector centred = rest - best->mu_rest;
      for (Index j = 0; j < centred.size(); ++j) {
        if (std::isnan(centred(j))) centred(j) = 0.0;
      }
      pred = best->coef(0) + best->coef.tail(d).dot(best->scores_basis.transpose() * centred);
    }
    result.predictions(i) = pred;
    const double err = pred - y(response);
    sse += err * err;
  }
  result.mse = test.rows() > 0 ? sse / static_cast<double>(test.rows()) : 0.0;
  return result;
}

}  // namespace geode
