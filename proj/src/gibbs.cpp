#include "geode/gibbs.hpp"

#include "geode/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace geode {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void add_path(Counts& counts, int slot, Index delta) {
  counts.stop[static_cast<std::size_t>(slot)] += delta;
  counts.per_scale[static_cast<std::size_t>(scale_of(slot))] += delta;
  int node = slot;
  while (true) {
    counts.pass[static_cast<std::size_t>(node)] += delta;
    if (node == 0) break;
    const int up = parent_of(node);
    if (node == right_child(up)) counts.right[static_cast<std::size_t>(up)] += delta;
    node = up;
  }
}

// Per-node pieces of the fast-path likelihood, rebuilt once per sweep.
struct NodeCache {
  std::vector<double> log_const;  // log pi + log-normaliser + 1/2 sum log u
  RowMatrix one_minus_u;
  std::vector<double> inv_two_sigma2;
};

NodeCache build_cache(const ChainState& state, const SamplerContext& ctx) {
  const int slots = ctx.tree.slot_count();
  const int d = ctx.dict.dim();
  const double D = static_cast<double>(ctx.dict.ambient_dim());
  NodeCache cache;
  cache.log_const.assign(static_cast<std::size_t>(slots), kNegInf);
  cache.inv_two_sigma2.assign(static_cast<std::size_t>(slots), 0.0);
  cache.one_minus_u = RowMatrix::Zero(slots, d);
  for (int k : ctx.tree.nodes()) {
    const NodeParams& p = state.nodes[static_cast<std::size_t>(k)];
    const double s2 = state.scales.sigma2(scale_of(k));
    const double pi = state.stick.pi(k);
    if (!(pi > 0.0)) continue;
    double log_u = 0.0;
    for (int m = 0; m < d; ++m) {
      log_u += std::log(p.u(m));
      cache.one_minus_u(k, m) = 1.0 - p.u(m);
    }
    cache.log_const[static_cast<std::size_t>(k)] =
        std::log(pi) - 0.5 * D * std::log(2.0 * std::numbers::pi * s2) + 0.5 * log_u;
    cache.inv_two_sigma2[static_cast<std::size_t>(k)] = 0.5 / s2;
  }
  return cache;
}

void log_weights_into(const ChainState& state, const SamplerContext& ctx, const NodeCache& cache, Index i,
                      Vector& out) {
  const int slots = ctx.tree.slot_count();
  const int d = ctx.dict.dim();
  out.setConstant(slots, kNegInf);
  const bool partial = ctx.stats.is_partial(i);
  for (int k : ctx.tree.nodes()) {
    const double c = cache.log_const[static_cast<std::size_t>(k)];
    if (c == kNegInf) continue;
    if (partial) {
      const NodeParams& p = state.nodes[static_cast<std::size_t>(k)];
      out(k) = std::log(state.stick.pi(k)) +
               partial_node_loglik(ctx.stats.gram(k, i), ctx.stats.B(k, i), ctx.stats.C(k, i),
                                   {p.u.data(), static_cast<std::size_t>(d)}, state.scales.sigma2(scale_of(k)),
                                   ctx.stats.observed_count(i));
    } else {
      const auto Z = ctx.stats.Z(k, i);
      double explained = 0.0;
      for (int m = 0; m < d; ++m) explained += cache.one_minus_u(k, m) * Z[static_cast<std::size_t>(m)] * Z[static_cast<std::size_t>(m)];
      out(k) = c - cache.inv_two_sigma2[static_cast<std::size_t>(k)] * (ctx.stats.A(k, i) - explained);
    }
  }
}

int draw_categorical_log(const Vector& logw, Rng& rng) {
  const double top = logw.maxCoeff();
  if (!std::isfinite(top)) throw Error(ErrorKind::AllZeroWeights, "every node has zero posterior weight");
  const Vector w = (logw.array() - top).exp();
  const double total = w.sum();
  const double target = rng.uniform() * total;
  double acc = 0.0;
  int last = -1;
  for (Index k = 0; k < w.size(); ++k) {
    if (w(k) <= 0.0) continue;
    acc += w(k);
    last = static_cast<int>(k);
    if (target < acc) return last;
  }
  return last;
}

// Draws the latent factor and the missing coordinates of a partial row at
// node k, and stores the completed (A, Z) in the chain state.
void augment_partial_row(ChainState& state, const SamplerContext& ctx, Index i, int k, Rng& rng) {
  const int d = ctx.dict.dim();
  const NodeParams& p = state.nodes[static_cast<std::size_t>(k)];
  const double s2 = state.scales.sigma2(scale_of(k));
  const LatentPosterior post =
      latent_posterior(ctx.stats.gram(k, i), ctx.stats.C(k, i), {p.u.data(), static_cast<std::size_t>(d)}, s2);
  Vector z(d);
  for (int m = 0; m < d; ++m) z(m) = rng.normal();
  const Vector eta = post.mean + post.factor * z;
  const NodeDictionary& node = ctx.dict.node(k);
  const double sd = std::sqrt(s2);
  double A = ctx.stats.B(k, i);
  Vector Z = ctx.stats.C(k, i);
  for (Index j = 0; j < ctx.data.cols(); ++j) {
    if (ctx.data.observed(i, j)) continue;
    const double centred = node.basis.row(j).dot(eta) + sd * rng.normal();
    A += centred * centred;
    Z.noalias() += centred * node.basis.row(j).transpose();
  }
  state.cur_A(i) = A;
  state.cur_Z.row(i) = Z.transpose();
}

void set_complete_row(ChainState& state, const SamplerContext& ctx, Index i, int k) {
  state.cur_A(i) = ctx.stats.A(k, i);
  const auto Z = ctx.stats.Z(k, i);
  for (int m = 0; m < ctx.dict.dim(); ++m) state.cur_Z(i, m) = Z[static_cast<std::size_t>(m)];
}

void draw_node_from_prior(NodeParams& p, const Hyperparams& hyper, Rng& rng) {
  for (int m = 0; m < p.dim(); ++m) p.tau(m) = sample_trunc_exp(hyper.a_tau, rng);
  for (int m = 0; m < p.dim(); ++m) p.u(m) = sample_trunc_gamma01(p.delta(m), 1.0, rng);
}

}  // namespace

Counts count_memberships(const std::vector<int>& membership, const ClusterTree& tree) {
  Counts counts;
  const auto slots = static_cast<std::size_t>(tree.slot_count());
  counts.stop.assign(slots, 0);
  counts.pass.assign(slots, 0);
  counts.right.assign(slots, 0);
  counts.per_scale.assign(static_cast<std::size_t>(tree.depth() + 1), 0);
  for (int k : membership) {
    if (!tree.exists(k)) throw Error(ErrorKind::InvalidArgument, "membership refers to an absent node");
    add_path(counts, k, 1);
  }
  return counts;
}

Vector compute_weights(const Vector& S, const Vector& R, const ClusterTree& tree) {
  const int slots = tree.slot_count();
  Vector pi = Vector::Zero(slots);
  Vector reach = Vector::Zero(slots);
  if (slots == 0) return pi;
  reach(0) = 1.0;
  for (int k : tree.nodes()) {
    if (tree.is_leaf(k)) {
      pi(k) = reach(k);
      continue;
    }
    pi(k) = reach(k) * S(k);
    const double go_on = reach(k) * (1.0 - S(k));
    reach(left_child(k)) = go_on * (1.0 - R(k));
    reach(right_child(k)) = go_on * R(k);
  }
  return pi;
}

BetaParams stop_posterior(const Counts& counts, int slot, const Hyperparams& hyper) {
  const auto k = static_cast<std::size_t>(slot);
  const auto n = static_cast<double>(counts.stop[k]);
  const auto v = static_cast<double>(counts.pass[k]);
  return {1.0 + n, hyper.a_S + v - n};
}

BetaParams right_posterior(const Counts& counts, int slot, const Hyperparams& hyper) {
  const auto k = static_cast<std::size_t>(slot);
  const auto n = static_cast<double>(counts.stop[k]);
  const auto v = static_cast<double>(counts.pass[k]);
  const auto r = static_cast<double>(counts.right[k]);
  return {hyper.b_R + r, hyper.b_R + v - n - r};
}

GammaParams u_posterior(const NodeParams& node, int m, Index stopped, double z2_sum, double sigma2) {
  return {node.delta(m) + 0.5 * static_cast<double>(stopped), 1.0 + 0.5 * z2_sum / sigma2};
}

double tau_posterior_rate(const NodeParams& node, int m, double a_tau) {
  double rate = a_tau;
  for (int j = m; j < node.dim(); ++j) {
    if (node.retained[static_cast<std::size_t>(j)]) rate -= std::log(node.u(j));
  }
  return rate;
}

GammaParams sigma_posterior(const Hyperparams& hyper, Index D, Index n_scale, double quad_sum) {
  return {hyper.a_sigma + 0.5 * static_cast<double>(D) * static_cast<double>(n_scale), hyper.b_sigma + 0.5 * quad_sum};
}

double scale_quad_sum(const ChainState& state, int scale) {
  double total = 0.0;
  const Index n = static_cast<Index>(state.membership.size());
  for (Index i = 0; i < n; ++i) {
    const int k = state.membership[static_cast<std::size_t>(i)];
    if (scale_of(k) != scale) continue;
    const NodeParams& p = state.nodes[static_cast<std::size_t>(k)];
    const double A = state.cur_A(i);
    double bracket = A;
    for (int m = 0; m < p.dim(); ++m) bracket -= (1.0 - p.u(m)) * state.cur_Z(i, m) * state.cur_Z(i, m);
    if (bracket < 0.0) {
      if (bracket < -1e-9 * std::max(1.0, A)) {
        throw Error(ErrorKind::NegativeQuadForm,
                    "residual quadratic form " + std::to_string(bracket) + " for observation " + std::to_string(i));
      }
      bracket = 0.0;
    }
    total += bracket;
  }
  return total;
}

Vector membership_log_weights(const ChainState& state, const SamplerContext& ctx, Index i) {
  const NodeCache cache = build_cache(state, ctx);
  Vector out;
  log_weights_into(state, ctx, cache, i, out);
  return out;
}

void sample_membership(ChainState& state, const SamplerContext& ctx, Rng& rng) {
  const NodeCache cache = build_cache(state, ctx);
  Vector logw;
  const Index n = ctx.data.rows();
  for (Index i = 0; i < n; ++i) {
    log_weights_into(state, ctx, cache, i, logw);
    const int k = draw_categorical_log(logw, rng);
    int& current = state.membership[static_cast<std::size_t>(i)];
    if (k != current) {
      add_path(state.counts, current, -1);
      add_path(state.counts, k, 1);
      current = k;
    }
    if (ctx.stats.is_partial(i)) {
      augment_partial_row(state, ctx, i, k, rng);
    } else {
      set_complete_row(state, ctx, i, k);
    }
  }
}

void update_sticks(ChainState& state, const ClusterTree& tree, const Hyperparams& hyper, Rng& rng) {
  for (int k : tree.nodes()) {
    if (tree.is_leaf(k)) {
      state.stick.S(k) = 1.0;
      state.stick.R(k) = 0.0;
      continue;
    }
    const BetaParams s = stop_posterior(state.counts, k, hyper);
    const BetaParams r = right_posterior(state.counts, k, hyper);
    state.stick.S(k) = rng.beta(s.a, s.b);
    state.stick.R(k) = rng.beta(r.a, r.b);
  }
  state.stick.pi = compute_weights(state.stick.S, state.stick.R, tree);
}

void update_u(ChainState& state, const SamplerContext& ctx, Rng& rng) {
  const int d = ctx.dict.dim();
  RowMatrix z2 = RowMatrix::Zero(ctx.tree.slot_count(), d);
  for (std::size_t i = 0; i < state.membership.size(); ++i) {
    z2.row(state.membership[i]) += state.cur_Z.row(static_cast<Index>(i)).array().square().matrix();
  }
  for (int k : ctx.tree.nodes()) {
    NodeParams& p = state.nodes[static_cast<std::size_t>(k)];
    const double s2 = state.scales.sigma2(scale_of(k));
    const Index n = state.counts.stop[static_cast<std::size_t>(k)];
    for (int m = 0; m < d; ++m) {
      if (!p.retained[static_cast<std::size_t>(m)]) continue;
      const GammaParams g = u_posterior(p, m, n, z2(k, m), s2);
      p.u(m) = sample_trunc_gamma01(g.shape, g.rate, rng);
    }
  }
}

void update_tau(ChainState& state, const ClusterTree& tree, const Hyperparams& hyper, Rng& rng) {
  for (int k : tree.nodes()) {
    NodeParams& p = state.nodes[static_cast<std::size_t>(k)];
    for (int m = 0; m < p.dim(); ++m) {
      if (!p.retained[static_cast<std::size_t>(m)]) continue;
      p.tau(m) = sample_trunc_exp(tau_posterior_rate(p, m, hyper.a_tau), rng);
    }
  }
}

void update_sigma(ChainState& state, const SamplerContext& ctx, Rng& rng) {
  const Index D = ctx.dict.ambient_dim();
  for (int s = 0; s <= ctx.tree.depth(); ++s) {
    const Index n_s = state.counts.per_scale[static_cast<std::size_t>(s)];
    const double quad = n_s > 0 ? scale_quad_sum(state, s) : 0.0;
    const GammaParams g = sigma_posterior(ctx.hyper, D, n_s, quad);
    state.scales.sigma2(s) = 1.0 / rng.gamma(g.shape, g.rate);
  }
}

AdaptationOutcome adapt_node(NodeParams& node, double sigma2, const Hyperparams& hyper, Rng& rng) {
  AdaptationOutcome outcome;
  const std::vector<int> kept = node.retained_indices();
  if (kept.empty()) return outcome;
  double top = 0.0;
  int top_index = kept.front();
  for (int m : kept) {
    const double a2 = alpha2_from_u(node.u(m), sigma2);
    if (a2 > top) {
      top = a2;
      top_index = m;
    }
  }
  std::vector<int> drop;
  std::vector<double> ratio(kept.size());
  for (std::size_t q = 0; q < kept.size(); ++q) {
    const int m = kept[q];
    ratio[q] = top > 0.0 ? alpha2_from_u(node.u(m), sigma2) / top : 0.0;
    if (ratio[q] < hyper.tol && m != top_index) drop.push_back(m);
  }
  // With every ratio below tol (all alpha^2 zero) the first index survives.
  if (!drop.empty()) {
    for (std::size_t q = 0; q < kept.size(); ++q) {
      const int m = kept[q];
      if (std::find(drop.begin(), drop.end(), m) == drop.end()) continue;
      node.retained[static_cast<std::size_t>(m)] = 0;
      node.u(m) = 1.0;
      node.last_ratio(m) = ratio[q];
    }
    outcome.deleted = static_cast<int>(drop.size());
    return outcome;
  }
  std::vector<int> pool;
  std::vector<double> weight;
  for (int m = 0; m < node.dim(); ++m) {
    if (node.retained[static_cast<std::size_t>(m)]) continue;
    pool.push_back(m);
    weight.push_back(std::max(node.last_ratio(m), 0.0));
  }
  if (pool.empty()) return outcome;
  double total = 0.0;
  for (double w : weight) total += w;
  if (!(total > 0.0)) {
    std::fill(weight.begin(), weight.end(), 1.0);
    total = static_cast<double>(weight.size());
  }
  const double target = rng.uniform() * total;
  double acc = 0.0;
  int chosen = pool.back();
  for (std::size_t q = 0; q < pool.size(); ++q) {
    acc += weight[q];
    if (target < acc) {
      chosen = pool[q];
      break;
    }
  }
  node.retained[static_cast<std::size_t>(chosen)] = 1;
  node.tau(chosen) = sample_trunc_exp(hyper.a_tau, rng);
  node.u(chosen) = sample_trunc_gamma01(node.delta(chosen), 1.0, rng);
  outcome.reinserted = 1;
  return outcome;
}

AdaptationOutcome apply_adaptation(ChainState& state, const ClusterTree& tree, const Hyperparams& hyper, Rng& rng) {
  AdaptationOutcome total;
  for (int k : tree.nodes()) {
    const AdaptationOutcome o =
        adapt_node(state.nodes[static_cast<std::size_t>(k)], state.scales.sigma2(scale_of(k)), hyper, rng);
    total.deleted += o.deleted;
    total.reinserted += o.reinserted;
  }
  return total;
}

bool adapt_dimensions(ChainState& state, const ClusterTree& tree, const Hyperparams& hyper, Rng& rng, int t,
                      AdaptationOutcome* outcome) {
  if (t < 1) throw Error(ErrorKind::InvalidArgument, "adaptation step needs t >= 1");
  const double p = adaptation_probability(hyper.c0, hyper.c1, t);
  if (rng.uniform() > p) return false;
  const AdaptationOutcome o = apply_adaptation(state, tree, hyper, rng);
  if (outcome) *outcome = o;
  return true;
}

ChainState initialize_chain(const SamplerContext& ctx, Rng& rng) {
  const ClusterTree& tree = ctx.tree;
  const Index n = ctx.data.rows();
  const int d = ctx.dict.dim();
  const int slots = tree.slot_count();
  if (n == 0 || slots == 0) throw Error(ErrorKind::EmptyData, "no observations to sample");
  if (ctx.data.cols() != ctx.dict.ambient_dim() || ctx.stats.observations() != n ||
      ctx.stats.slot_count() != slots || ctx.stats.dim() != d) {
    throw Error(ErrorKind::DimensionMismatch, "data, dictionary and statistics disagree in shape");
  }

  ChainState state;
  state.membership.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) state.membership[static_cast<std::size_t>(i)] = tree.leaf_of(i);
  state.counts = count_memberships(state.membership, tree);

  state.nodes.assign(static_cast<std::size_t>(slots), NodeParams{});
  for (int k : tree.nodes()) {
    NodeParams p = make_node_params(d);
    draw_node_from_prior(p, ctx.hyper, rng);
    state.nodes[static_cast<std::size_t>(k)] = std::move(p);
  }

  state.stick.S = Vector::Zero(slots);
  state.stick.R = Vector::Zero(slots);
  for (int k : tree.nodes()) {
    if (tree.is_leaf(k)) {
      state.stick.S(k) = 1.0;
    } else {
      state.stick.S(k) = rng.beta(1.0, ctx.hyper.a_S);
      state.stick.R(k) = rng.beta(ctx.hyper.b_R, ctx.hyper.b_R);
    }
  }
  state.stick.pi = compute_weights(state.stick.S, state.stick.R, tree);

  // Residual variance about each scale's rank-d fit.
  const Index D = ctx.dict.ambient_dim();
  state.scales.sigma2 = Vector::Zero(tree.depth() + 1);
  double overall = 0.0;
  Index overall_count = 0;
  for (int s = 0; s <= tree.depth(); ++s) {
    double sum = 0.0;
    Index count = 0;
    for (int k : tree.frontier(s)) {
      for (Index i : tree.members(k)) {
        double resid = 0.0;
        double dof = 0.0;
        if (ctx.stats.is_partial(i)) {
          resid = ctx.stats.B(k, i) - ctx.stats.C(k, i).squaredNorm();
          dof = static_cast<double>(ctx.stats.observed_count(i) - d);
          if (dof < 1.0) {
            resid = ctx.stats.B(k, i);
            dof = static_cast<double>(ctx.stats.observed_count(i));
          }
        } else {
          double z2 = 0.0;
          for (double z : ctx.stats.Z(k, i)) z2 += z * z;
          resid = ctx.stats.A(k, i) - z2;
          dof = static_cast<double>(D - d);
          if (dof < 1.0) {
            resid = ctx.stats.A(k, i);
            dof = static_cast<double>(D);
          }
        }
        sum += std::max(resid, 0.0) / dof;
        ++count;
      }
    }
    state.scales.sigma2(s) = count > 0 ? sum / static_cast<double>(count) : 0.0;
    overall += sum;
    overall_count += count;
  }
  const double floor = 1e-10 * (1.0 + (overall_count > 0 ? overall / static_cast<double>(overall_count) : 0.0));
  for (int s = 0; s <= tree.depth(); ++s) {
    if (!(state.scales.sigma2(s) > floor)) state.scales.sigma2(s) = std::max(floor, 1e-12);
  }

  state.cur_A = Vector::Zero(n);
  state.cur_Z = RowMatrix::Zero(n, d);
  for (Index i = 0; i < n; ++i) {
    const int k = state.membership[static_cast<std::size_t>(i)];
    if (ctx.stats.is_partial(i)) {
      augment_partial_row(state, ctx, i, k, rng);
    } else {
      set_complete_row(state, ctx, i, k);
    }
  }
  return state;
}

GibbsRun run_gibbs(const SamplerContext& ctx, const IterationObserver& observer) {
  const Hyperparams& hyper = ctx.hyper;
  if (hyper.iters < 0 || hyper.burn_in < 0 || hyper.thin < 1) {
    throw Error(ErrorKind::ConfigError, "iteration settings out of range");
  }
  Rng rng(derive_seed(hyper.seed, 0x6962626a));
  GibbsRun run;
  run.state = initialize_chain(ctx, rng);
  ChainState& state = run.state;
  const Index n = ctx.data.rows();
  const int d = ctx.dict.dim();

  for (int t = 1; t <= hyper.iters; ++t) {
    sample_membership(state, ctx, rng);
    update_sticks(state, ctx.tree, hyper, rng);
    update_u(state, ctx, rng);
    update_tau(state, ctx.tree, hyper, rng);
    update_sigma(state, ctx, rng);
    AdaptationOutcome outcome;
    const bool adapted = adapt_dimensions(state, ctx.tree, hyper, rng, t, &outcome);
    state.iter = t;

    if (adapted) {
      AdaptationRecord rec;
      rec.iter = t;
      rec.collected = t > hyper.burn_in;
      rec.deleted = outcome.deleted;
      rec.reinserted = outcome.reinserted;
      rec.inclusion.assign(static_cast<std::size_t>(d), 0);
      for (int k : state.membership) {
        const NodeParams& p = state.nodes[static_cast<std::size_t>(k)];
        for (int m = 0; m < d; ++m) rec.inclusion[static_cast<std::size_t>(m)] += p.retained[static_cast<std::size_t>(m)] ? 1 : 0;
      }
      rec.observations = n;
      run.draws.adaptation_log.push_back(std::move(rec));
    }

    if (t > hyper.burn_in && (t - hyper.burn_in) % hyper.thin == 0) {
      run.draws.snapshots.push_back(Snapshot{t, state.membership, state.stick, state.nodes, state.scales});
    }

    if (observer) {
      IterationRecord rec;
      rec.iter = t;
      rec.sigma2 = state.scales.sigma2;
      for (int k : ctx.tree.nodes()) rec.retained_total += state.nodes[static_cast<std::size_t>(k)].retained_count();
      rec.adapted = adapted;
      rec.outcome = outcome;
      observer(rec);
    }
  }
  return run;
}

}  // namespace geode
