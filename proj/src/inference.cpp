#include "geode/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace geode {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Woodbury {
  Vector root_w;  // sqrt(1/u - 1)
  Eigen::LLT<Matrix> llt;
};

Woodbury factor_inner(const Eigen::Ref<const Matrix>& gram, std::span<const double> u) {
  const auto d = static_cast<Index>(u.size());
  if (gram.rows() != d || gram.cols() != d) {
    throw Error(ErrorKind::DimensionMismatch, "Gram matrix does not match the number of shrinkage values");
  }
  Woodbury f;
  f.root_w.resize(d);
  for (Index m = 0; m < d; ++m) {
    const double um = u[static_cast<std::size_t>(m)];
    if (!(um > 0.0 && um <= 1.0)) throw Error(ErrorKind::SingularSystem, "shrinkage value outside (0, 1]");
    f.root_w(m) = std::sqrt(1.0 / um - 1.0);
  }
  Matrix M = f.root_w.asDiagonal() * gram * f.root_w.asDiagonal();
  M.diagonal().array() += 1.0;
  f.llt.compute(M);
  if (f.llt.info() != Eigen::Success) throw Error(ErrorKind::SingularSystem, "d x d system is not positive definite");
  return f;
}

double log_mean_exp(const Vector& v) {
  const double top = v.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((v.array() - top).exp().mean());
}

double log_sum_exp(const Vector& v) {
  const double top = v.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((v.array() - top).exp().sum());
}

void check_model(const FittedModel& model, const Eigen::Ref<const Vector>& y) {
  if (y.size() != model.ambient_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "vector has " + std::to_string(y.size()) + " entries, model expects " +
                                                  std::to_string(model.ambient_dim()));
  }
  if (model.draws.snapshots.empty()) throw Error(ErrorKind::InvalidArgument, "model has no posterior draws");
}

std::vector<Index> missing_indices(const Eigen::Ref<const Vector>& y) {
  std::vector<Index> out;
  for (Index j = 0; j < y.size(); ++j) {
    if (std::isnan(y(j))) out.push_back(j);
  }
  return out;
}

// Node statistics of y against every tree node, computed once and reused by
// all draws.
struct NodeStatsTable {
  bool partial = false;
  std::vector<CompleteStats> complete;
  std::vector<PartialStats> part;
};

NodeStatsTable node_stats(const FittedModel& model, const Eigen::Ref<const Vector>& y, bool partial) {
  NodeStatsTable t;
  t.partial = partial;
  const auto slots = static_cast<std::size_t>(model.tree.slot_count());
  if (partial) {
    t.part.resize(slots);
  } else {
    t.complete.resize(slots);
  }
  for (int k : model.tree.nodes()) {
    const NodeDictionary& node = model.dict.node(k);
    if (partial) {
      t.part[static_cast<std::size_t>(k)] = partial_node_stats(node, y);
    } else {
      t.complete[static_cast<std::size_t>(k)] = complete_node_stats(node, y);
    }
  }
  return t;
}

Vector draw_log_weights(const FittedModel& model, const Snapshot& snap, const NodeStatsTable& t) {
  const Index D = model.ambient_dim();
  Vector logw = Vector::Constant(model.tree.slot_count(), kNegInf);
  for (int k : model.tree.nodes()) {
    const double pi = snap.stick.pi(k);
    if (!(pi > 0.0)) continue;
    const NodeParams& p = snap.nodes[static_cast<std::size_t>(k)];
    const std::span<const double> u(p.u.data(), static_cast<std::size_t>(p.u.size()));
    const double s2 = snap.scales.sigma2(scale_of(k));
    double ll = 0.0;
    if (t.partial) {
      const PartialStats& ps = t.part[static_cast<std::size_t>(k)];
      ll = partial_node_loglik(ps.gram, ps.B, ps.C, u, s2, ps.observed);
    } else {
      const CompleteStats& cs = t.complete[static_cast<std::size_t>(k)];
      ll = node_log_likelihood(cs.A, {cs.Z.data(), static_cast<std::size_t>(cs.Z.size())}, u, s2, D);
    }
    logw(k) = std::log(pi) + ll;
  }
  return logw;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.size() == 1) return sorted.front();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

double partial_node_loglik(const Eigen::Ref<const Matrix>& gram, double B, const Eigen::Ref<const Vector>& C,
                           std::span<const double> u, double sigma2, Index observed) {
  if (observed < 1) throw Error(ErrorKind::NoObservedEntries, "no observed coordinates");
  if (!std::isfinite(B) || !C.allFinite()) throw Error(ErrorKind::NonFiniteInput, "partial statistics are not finite");
  const Woodbury f = factor_inner(gram, u);
  const Vector c = f.root_w.cwiseProduct(C);
  const double quad = c.dot(f.llt.solve(c));
  const Matrix& L = f.llt.matrixLLT();
  const double log_det = 2.0 * L.diagonal().array().log().sum();
  return -0.5 * static_cast<double>(observed) * std::log(2.0 * std::numbers::pi * sigma2) - 0.5 * log_det -
         0.5 * B / sigma2 + 0.5 * quad / sigma2;
}

double partial_node_loglik(const PartialStats& stats, std::span<const double> u, double sigma2, Index D) {
  if (stats.observed == D) {
    return node_log_likelihood(stats.B, {stats.C.data(), static_cast<std::size_t>(stats.C.size())}, u, sigma2, D);
  }
  return partial_node_loglik(stats.gram, stats.B, stats.C, u, sigma2, stats.observed);
}

LatentPosterior latent_posterior(const Eigen::Ref<const Matrix>& gram, const Eigen::Ref<const Vector>& C,
                                 std::span<const double> u, double sigma2) {
  const Woodbury f = factor_inner(gram, u);
  const Index d = f.root_w.size();
  LatentPosterior post;
  post.mean = f.root_w.cwiseProduct(f.llt.solve(f.root_w.cwiseProduct(C)));
  const Matrix inv_upper = f.llt.matrixU().solve(Matrix::Identity(d, d));
  post.factor = std::sqrt(sigma2) * (f.root_w.asDiagonal() * inv_upper);
  return post;
}

Vector per_draw_log_density(const FittedModel& model, const Eigen::Ref<const Vector>& y) {
  check_model(model, y);
  const std::vector<Index> missing = missing_indices(y);
  if (static_cast<Index>(missing.size()) == y.size()) {
    throw Error(ErrorKind::NoObservedEntries, "every coordinate is missing");
  }
  for (Index j = 0; j < y.size(); ++j) {
    if (std::isinf(y(j))) throw Error(ErrorKind::NonFiniteInput, "infinite coordinate");
  }
  const NodeStatsTable t = node_stats(model, y, !missing.empty());
  const auto& snaps = model.draws.snapshots;
  Vector out(static_cast<Index>(snaps.size()));
  for (std::size_t r = 0; r < snaps.size(); ++r) {
    out(static_cast<Index>(r)) = log_sum_exp(draw_log_weights(model, snaps[r], t));
  }
  return out;
}

double log_density(const FittedModel& model, const Eigen::Ref<const Vector>& y) {
  return log_mean_exp(per_draw_log_density(model, y));
}

ImputationResult impute(const FittedModel& model, const Eigen::Ref<const Vector>& y, Rng& rng) {
  check_model(model, y);
  const std::vector<Index> missing = missing_indices(y);
  if (static_cast<Index>(missing.size()) == y.size()) {
    throw Error(ErrorKind::NoObservedEntries, "every coordinate is missing");
  }
  ImputationResult result;
  if (missing.empty()) return result;

  const NodeStatsTable t = node_stats(model, y, true);
  const int d = model.dict.dim();
  const auto& snaps = model.draws.snapshots;
  result.draws.reserve(snaps.size());
  for (const Snapshot& snap : snaps) {
    const Vector logw = draw_log_weights(model, snap, t);
    const double top = logw.maxCoeff();
    if (!std::isfinite(top)) throw Error(ErrorKind::AllZeroWeights, "every node has zero posterior weight");
    const Vector w = (logw.array() - top).exp();
    const double target = rng.uniform() * w.sum();
    double acc = 0.0;
    int k = -1;
    for (Index q = 0; q < w.size(); ++q) {
      if (w(q) <= 0.0) continue;
      acc += w(q);
      k = static_cast<int>(q);
      if (target < acc) break;
    }
    const NodeParams& p = snap.nodes[static_cast<std::size_t>(k)];
    const double s2 = snap.scales.sigma2(scale_of(k));
    const PartialStats& ps = t.part[static_cast<std::size_t>(k)];
    const LatentPosterior post =
        latent_posterior(ps.gram, ps.C, {p.u.data(), static_cast<std::size_t>(d)}, s2);
    Vector z(d);
    for (int m = 0; m < d; ++m) z(m) = rng.normal();
    ImputationDraw draw;
    draw.slot = k;
    draw.eta = post.mean + post.factor * z;
    draw.missing_values.resize(static_cast<Index>(missing.size()));
    const NodeDictionary& node = model.dict.node(k);
    const double sd = std::sqrt(s2);
    for (std::size_t q = 0; q < missing.size(); ++q) {
      const Index j = missing[q];
      draw.missing_values(static_cast<Index>(q)) = node.mu(j) + node.basis.row(j).dot(draw.eta) + sd * rng.normal();
    }
    result.draws.push_back(std::move(draw));
  }

  const std::size_t R = result.draws.size();
  std::vector<double> values(R);
  for (std::size_t q = 0; q < missing.size(); ++q) {
    for (std::size_t r = 0; r < R; ++r) values[r] = result.draws[r].missing_values(static_cast<Index>(q));
    ImputedEntry e;
    e.column = missing[q];
    double sum = 0.0;
    for (double v : values) sum += v;
    e.mean = sum / static_cast<double>(R);
    double ss = 0.0;
    for (double v : values) ss += (v - e.mean) * (v - e.mean);
    e.sd = R > 1 ? std::sqrt(ss / static_cast<double>(R - 1)) : 0.0;
    std::sort(values.begin(), values.end());
    e.lower = quantile_sorted(values, 0.025);
    e.upper = quantile_sorted(values, 0.975);
    result.entries.push_back(e);
  }
  return result;
}

std::vector<ImputedEntry> predict_response(const FittedModel& model, const Eigen::Ref<const Vector>& y,
                                           std::span<const Index> response, Rng& rng) {
  for (Index j : response) {
    if (j < 0 || j >= y.size() || !std::isnan(y(j))) {
      throw Error(ErrorKind::InvalidArgument, "response column " + std::to_string(j) + " is not masked");
    }
  }
  const ImputationResult full = impute(model, y, rng);
  std::vector<ImputedEntry> out;
  for (Index j : response) {
    for (const ImputedEntry& e : full.entries) {
      if (e.column == j) out.push_back(e);
    }
  }
  return out;
}

ClassVote vote(const Matrix& log_densities) {
  const Index draws = log_densities.rows();
  const Index classes = log_densities.cols();
  if (classes == 0) throw Error(ErrorKind::InvalidArgument, "no classes to vote over");
  if (draws == 0) throw Error(ErrorKind::InvalidArgument, "no draws to vote with");
  ClassVote out;
  out.distribution.assign(static_cast<std::size_t>(classes), 0.0);
  out.mean_log_density.assign(static_cast<std::size_t>(classes), 0.0);
  for (Index r = 0; r < draws; ++r) {
    const double top = log_densities.row(r).maxCoeff();
    int ties = 0;
    for (Index c = 0; c < classes; ++c) ties += log_densities(r, c) == top ? 1 : 0;
    for (Index c = 0; c < classes; ++c) {
      if (log_densities(r, c) == top) out.distribution[static_cast<std::size_t>(c)] += 1.0 / ties;
    }
  }
  for (Index c = 0; c < classes; ++c) {
    out.distribution[static_cast<std::size_t>(c)] /= static_cast<double>(draws);
    out.mean_log_density[static_cast<std::size_t>(c)] = log_densities.col(c).mean();
  }
  int best = 0;
  for (int c = 1; c < static_cast<int>(classes); ++c) {
    const double dv = out.distribution[static_cast<std::size_t>(c)] - out.distribution[static_cast<std::size_t>(best)];
    if (dv > 1e-12) {
      best = c;
    } else if (std::abs(dv) <= 1e-12 &&
               out.mean_log_density[static_cast<std::size_t>(c)] > out.mean_log_density[static_cast<std::size_t>(best)]) {
      best = c;
    }
  }
  out.label = best;
  return out;
}

ClassVote classify(std::span<const FittedModel* const> models, const Eigen::Ref<const Vector>& y) {
  if (models.empty()) throw Error(ErrorKind::InvalidArgument, "no class models");
  const Index D = models.front()->ambient_dim();
  const std::size_t draws = models.front()->draws.snapshots.size();
  for (const FittedModel* m : models) {
    if (m->ambient_dim() != D) throw Error(ErrorKind::DimensionMismatch, "class models differ in dimension");
    if (m->draws.snapshots.size() != draws) {
      throw Error(ErrorKind::DrawCountMismatch, "class models have different numbers of posterior draws");
    }
  }
  Matrix ld(static_cast<Index>(draws), static_cast<Index>(models.size()));
  for (std::size_t c = 0; c < models.size(); ++c) ld.col(static_cast<Index>(c)) = per_draw_log_density(*models[c], y);
  return vote(ld);
}

Vector inclusion_probabilities(const FittedModel& model) {
  const int d = model.dict.dim();
  Vector total = Vector::Zero(d);
  double denom = 0.0;
  for (const AdaptationRecord& rec : model.draws.adaptation_log) {
    if (!rec.collected) continue;
    for (int m = 0; m < d; ++m) total(m) += static_cast<double>(rec.inclusion[static_cast<std::size_t>(m)]);
    denom += static_cast<double>(rec.observations);
  }
  if (denom == 0.0) throw Error(ErrorKind::NoAdaptationSteps, "no adaptation step in the collection interval");
  return total / denom;
}

}  // namespace geode
