#include <doctest.h>

#include "geode/gibbs.hpp"
#include "geode/harness/pipeline.hpp"
#include "oracles.hpp"
#include "toy_model.hpp"

#include <set>

using namespace geode;

namespace {

struct SmallFit {
  ClusterTree tree;
  MultiscaleDictionary dict;
  DataSet data;
  SuffStats stats;
  Hyperparams hyper;

  SamplerContext ctx() const { return {tree, dict, stats, data, hyper}; }
};

std::unique_ptr<SmallFit> isotropic_single_node(Index n, Index D, double sigma2, std::uint64_t seed) {
  auto f = std::make_unique<SmallFit>();
  Rng rng(seed);
  RowMatrix m(n, D);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < D; ++j) m(i, j) = std::sqrt(sigma2) * rng.normal();
  }
  f->data = DataSet(m);
  f->tree = oracle::full_tree(0, n);
  DictionaryOptions opt;
  opt.d_upper = 3;
  f->dict = fit_dictionary(f->tree, f->data, opt);
  f->stats = precompute_stats(f->dict, f->tree, f->data);
  f->hyper.L = 0;
  f->hyper.d_upper = 3;
  return f;
}

}  // namespace

TEST_CASE("weights on trivial trees") {
  const ClusterTree root = oracle::full_tree(0, 5);
  CHECK(compute_weights(Vector::Constant(1, 0.3), Vector::Constant(1, 0.6), root)(0) == 1.0);

  const ClusterTree t2 = oracle::full_tree(2, 16);
  Vector S = Vector::Zero(t2.slot_count()), R = Vector::Constant(t2.slot_count(), 0.5);
  const Vector pi = compute_weights(S, R, t2);
  for (int k : t2.nodes_at_scale(2)) CHECK(pi(k) == 0.25);
  CHECK(pi(0) == 0.0);
}

TEST_CASE("weights sum to one and match path enumeration on random ragged trees") {
  Rng rng(40);
  for (int rep = 0; rep < 100; ++rep) {
    const ClusterTree tree = oracle::random_tree(1 + rep % 6, 80, rng);
    Vector S = Vector::Zero(tree.slot_count()), R = Vector::Zero(tree.slot_count());
    for (int k : tree.nodes()) {
      S(k) = rng.uniform();
      R(k) = rng.uniform();
    }
    const Vector pi = compute_weights(S, R, tree);
    CHECK(std::abs(pi.sum() - 1.0) <= 1e-12);
    CHECK(pi == oracle::path_weights(S, R, tree));
  }
}

TEST_CASE("membership counts") {
  const ClusterTree tree = oracle::full_tree(2, 8);
  // Slots: 0 root, 1-2 scale 1, 3-6 scale 2.
  const std::vector<int> mem{0, 1, 2, 4, 4, 6, 3, 5};
  const Counts c = count_memberships(mem, tree);
  CHECK(c.stop[4] == 2);
  CHECK(c.pass[0] == 8);
  CHECK(c.pass[1] == 4);  // 1, 4, 4, 3
  CHECK(c.pass[2] == 3);
  CHECK(c.right[0] == 3);
  CHECK(c.right[1] == 2);
  CHECK(c.right[2] == 1);
  CHECK(c.per_scale == std::vector<Index>{1, 2, 5});
  CHECK_THROWS_AS(count_memberships({9}, oracle::full_tree(1, 1 + 1)), Error);
}

TEST_CASE("stick posteriors follow the count substitution") {
  const ClusterTree tree = oracle::full_tree(1, 10);
  Hyperparams h;
  h.a_S = 2.0;
  h.b_R = 0.7;
  Counts empty = count_memberships(std::vector<int>(10, 1), tree);
  BetaParams s = stop_posterior(empty, 2, h);
  BetaParams r = right_posterior(empty, 2, h);
  CHECK(s.a == 1.0);
  CHECK(s.b == 2.0);
  CHECK(r.a == 0.7);
  CHECK(r.b == 0.7);
  const Counts all_stop = count_memberships(std::vector<int>(10, 0), tree);
  s = stop_posterior(all_stop, 0, h);
  CHECK(s.a == 11.0);
  CHECK(s.b == 2.0);
  const Counts mixed = count_memberships({0, 0, 1, 2, 2, 2, 1, 1, 1, 2}, tree);
  s = stop_posterior(mixed, 0, h);
  r = right_posterior(mixed, 0, h);
  CHECK(s.a == 3.0);
  CHECK(s.b == 2.0 + 8.0);
  CHECK(r.a == doctest::Approx(0.7 + 4.0));
  CHECK(r.b == doctest::Approx(0.7 + 4.0));
}

TEST_CASE("u, tau and sigma posterior parameters") {
  NodeParams p = make_node_params(4);
  p.tau << 2.0, 1.5, 1.0, 1.2;
  const GammaParams prior = u_posterior(p, 1, 0, 0.0, 1.0);
  CHECK(prior.shape == 3.0);
  CHECK(prior.rate == 1.0);
  const GammaParams post = u_posterior(p, 1, 6, 8.0, 2.0);
  CHECK(post.shape == 6.0);
  CHECK(post.rate == 3.0);

  p.u << 0.5, std::exp(-1.0), std::exp(-1.0), std::exp(-1.0);
  CHECK(tau_posterior_rate(p, 1, 0.05) == doctest::Approx(3.05).epsilon(1e-14));
  p.retained[2] = 0;
  p.u(2) = 1.0;
  CHECK(tau_posterior_rate(p, 1, 0.05) == doctest::Approx(2.05).epsilon(1e-14));
  p.u.setConstant(1.0 - 1e-15);
  CHECK(tau_posterior_rate(p, 0, 0.05) == doctest::Approx(0.05).epsilon(1e-10));

  Hyperparams h;
  h.a_sigma = 0.5;
  h.b_sigma = 0.25;
  GammaParams g = sigma_posterior(h, 20, 0, 0.0);
  CHECK(g.shape == 0.5);
  CHECK(g.rate == 0.25);
  g = sigma_posterior(h, 20, 1, 0.0);
  CHECK(g.shape == 10.5);
  CHECK(g.rate == 0.25);
  g = sigma_posterior(h, 20, 3, 4.0);
  CHECK(g.shape == 30.5);
  CHECK(g.rate == 2.25);
}

TEST_CASE("u draws with large data term concentrate near zero") {
  NodeParams p = make_node_params(1);
  p.tau(0) = 1.0;
  const GammaParams g = u_posterior(p, 0, 2, 400.0, 1.0);
  REQUIRE(g.rate > 50.0 * g.shape);
  Rng rng(3);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) sum += sample_trunc_gamma01(g.shape, g.rate, rng);
  CHECK(sum / 10000 < 0.1);
}

TEST_CASE("tau draws at the posterior rate have the shifted-exponential mean") {
  Rng rng(5);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += sample_trunc_exp(3.05, rng);
  CHECK(std::abs(sum / n - (1.0 + 1.0 / 3.05)) < 3.0 / 3.05 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("negative quadratic forms are rejected beyond rounding") {
  auto toy = oracle::make_toy(3);
  ChainState st = toy->state;
  const int s = scale_of(st.membership[0]);
  // Make the bracket of row 0 mildly negative: clamped.
  double explained = 0.0;
  const NodeParams& p = st.nodes[static_cast<std::size_t>(st.membership[0])];
  for (int m = 0; m < p.dim(); ++m) explained += (1.0 - p.u(m)) * st.cur_Z(0, m) * st.cur_Z(0, m);
  st.cur_A(0) = explained - 1e-13;
  CHECK(std::isfinite(scale_quad_sum(st, s)));
  st.cur_A(0) = explained - 1.0;
  try {
    scale_quad_sum(st, s);
    FAIL("expected NegativeQuadForm");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NegativeQuadForm);
  }
}

TEST_CASE("every scalar conditional is proportional to the joint") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const oracle::GridReport rep = oracle::grid_check(seed);
    CHECK(rep.S <= 1e-6);
    CHECK(rep.R <= 1e-6);
    CHECK(rep.u <= 1e-6);
    CHECK(rep.tau <= 1e-6);
    CHECK(rep.sigma <= 1e-6);
  }
}

TEST_CASE("membership log weights match the dense likelihood") {
  auto toy = oracle::make_toy(8);
  const ChainState& st = toy->state;
  for (Index i = 0; i < 5; ++i) {
    const Vector lw = membership_log_weights(st, toy->ctx(), i);
    for (int k : toy->tree.nodes()) {
      ChainState c = st;
      c.membership[static_cast<std::size_t>(i)] = k;
      const double expect = std::log(st.stick.pi(k)) + oracle::log_likelihood_at(*toy, c, i);
      CHECK(lw(k) == doctest::Approx(expect).epsilon(1e-10));
    }
  }
}

TEST_CASE("a single-node tree allocates everything to the root") {
  auto f = isotropic_single_node(20, 5, 1.0, 2);
  Rng rng(1);
  ChainState st = initialize_chain(f->ctx(), rng);
  for (int rep = 0; rep < 5; ++rep) {
    sample_membership(st, f->ctx(), rng);
    for (int k : st.membership) CHECK(k == 0);
  }
}

TEST_CASE("equal likelihoods allocate by weight") {
  auto f = std::make_unique<SmallFit>();
  RowMatrix m(2, 4);
  m << 0.1, 0.2, -0.3, 0.4, 0.0, 0.1, 0.2, 0.3;
  f->data = DataSet(m);
  f->tree = oracle::full_tree(1, 2);
  Rng rng(12);
  NodeDictionary nd;
  nd.mu = Vector::Zero(4);
  nd.basis = oracle::random_orthonormal(4, 2, rng);
  nd.singular_values = Vector::Ones(2);
  f->dict = MultiscaleDictionary(4, 2, {nd, nd, nd});
  f->stats = precompute_stats(f->dict, f->tree, f->data);
  f->hyper.L = 1;
  ChainState st = initialize_chain(f->ctx(), rng);
  for (auto& p : st.nodes) p = st.nodes[0];
  st.scales.sigma2.setConstant(1.0);
  st.stick.S(0) = 0.0;
  st.stick.R(0) = 0.1;
  st.stick.pi = compute_weights(st.stick.S, st.stick.R, f->tree);
  const int draws = 10000;
  int left = 0;
  for (int t = 0; t < draws; ++t) {
    sample_membership(st, f->ctx(), rng);
    left += st.membership[0] == 1 ? 1 : 0;
    CHECK(st.membership[0] != 0);
  }
  const double se = std::sqrt(0.09 / draws);
  CHECK(std::abs(left / static_cast<double>(draws) - 0.9) < 3.0 * se);
}

TEST_CASE("counts and weights stay consistent through Gibbs steps") {
  auto toy = oracle::make_toy(21, 60, 8, 3, 3);
  ChainState& st = toy->state;
  Rng rng(4);
  for (int t = 1; t <= 30; ++t) {
    sample_membership(st, toy->ctx(), rng);
    CHECK(st.counts == count_memberships(st.membership, toy->tree));
    update_sticks(st, toy->tree, toy->hyper, rng);
    CHECK(std::abs(st.stick.pi.sum() - 1.0) <= 1e-12);
    update_u(st, toy->ctx(), rng);
    update_tau(st, toy->tree, toy->hyper, rng);
    update_sigma(st, toy->ctx(), rng);
    adapt_dimensions(st, toy->tree, toy->hyper, rng, t);
    for (int k : toy->tree.nodes()) {
      const NodeParams& p = st.nodes[static_cast<std::size_t>(k)];
      CHECK(p.retained_count() >= 1);
      for (int m = 0; m < p.dim(); ++m) {
        if (!p.retained[static_cast<std::size_t>(m)]) CHECK(p.u(m) == 1.0);
        CHECK(p.u(m) > 0.0);
        CHECK(p.u(m) <= 1.0);
        CHECK(p.tau(m) >= 1.0);
      }
    }
    for (Index s = 0; s < st.scales.sigma2.size(); ++s) CHECK(st.scales.sigma2(s) > 0.0);
  }
}

TEST_CASE("adaptation deletes small ratios") {
  Hyperparams h;
  Rng rng(1);
  NodeParams p = make_node_params(3);
  p.u << u_from_alpha2(1.0, 1.0), u_from_alpha2(0.5, 1.0), u_from_alpha2(1e-6, 1.0);
  const AdaptationOutcome o = adapt_node(p, 1.0, h, rng);
  CHECK(o.deleted == 1);
  CHECK(o.reinserted == 0);
  CHECK(p.retained == std::vector<char>{1, 1, 0});
  CHECK(p.u(2) == 1.0);
  CHECK(p.last_ratio(2) == doctest::Approx(1e-6).epsilon(1e-6));
}

TEST_CASE("adaptation re-inserts the only deleted dimension") {
  Hyperparams h;
  Rng rng(2);
  NodeParams p = make_node_params(4);
  p.u << 0.2, 0.4, 0.6, 1.0;
  p.retained[3] = 0;
  p.last_ratio(3) = 0.2;
  const AdaptationOutcome o = adapt_node(p, 1.0, h, rng);
  CHECK(o.deleted == 0);
  CHECK(o.reinserted == 1);
  CHECK(p.retained[3] == 1);
  CHECK(p.u(3) < 1.0);
  CHECK(p.tau(3) >= 1.0);
}

TEST_CASE("re-insertion follows the last ratios") {
  Hyperparams h;
  Rng rng(3);
  int first = 0;
  const int reps = 20000;
  for (int t = 0; t < reps; ++t) {
    NodeParams p = make_node_params(3);
    p.u << 0.3, 1.0, 1.0;
    p.retained[1] = p.retained[2] = 0;
    p.last_ratio << 0.0, 0.3, 0.1;
    adapt_node(p, 1.0, h, rng);
    first += p.retained[1] ? 1 : 0;
  }
  CHECK(std::abs(first / static_cast<double>(reps) - 0.75) < 4.0 * std::sqrt(0.75 * 0.25 / reps));
}

TEST_CASE("adaptation never empties the retained pool") {
  Hyperparams h;
  Rng rng(4);
  NodeParams p = make_node_params(3);
  p.u << 0.99999999, 0.999999999, 0.9999999999;
  adapt_node(p, 1.0, h, rng);
  CHECK(p.retained_count() >= 1);
  CHECK(p.retained[0] == 1);
  p = make_node_params(2);
  adapt_node(p, 1.0, h, rng);
  CHECK(p.retained_count() >= 1);
}

TEST_CASE("adaptation runs with probability p(t)") {
  auto toy = oracle::make_toy(5);
  Rng rng(6);
  CHECK_THROWS_AS(adapt_dimensions(toy->state, toy->tree, toy->hyper, rng, 0), Error);
  int ran = 0;
  const int reps = 20000;
  for (int i = 0; i < reps; ++i) {
    ChainState st = toy->state;
    ran += adapt_dimensions(st, toy->tree, toy->hyper, rng, 1) ? 1 : 0;
  }
  const double p = std::exp(-1.005);
  CHECK(std::abs(ran / static_cast<double>(reps) - p) < 4.0 * std::sqrt(p * (1 - p) / reps));
}

TEST_CASE("run_gibbs bookkeeping and determinism") {
  auto toy = oracle::make_toy(11, 40, 6, 3, 2);
  toy->hyper.iters = 0;
  toy->hyper.burn_in = 0;
  GibbsRun empty = run_gibbs(toy->ctx());
  CHECK(empty.draws.snapshots.empty());
  CHECK(empty.state.iter == 0);

  toy->hyper.iters = 60;
  toy->hyper.burn_in = 20;
  toy->hyper.thin = 4;
  toy->hyper.seed = 77;
  int seen = 0;
  const GibbsRun a = run_gibbs(toy->ctx(), [&](const IterationRecord& r) {
    ++seen;
    CHECK(r.iter == seen);
    CHECK(r.sigma2.size() == 3);
  });
  CHECK(seen == 60);
  CHECK(a.draws.snapshots.size() == 10);
  CHECK(a.draws.snapshots.front().iter == 24);
  for (const AdaptationRecord& rec : a.draws.adaptation_log) {
    CHECK(rec.collected == (rec.iter > 20));
    CHECK(rec.observations == 40);
  }
  const GibbsRun b = run_gibbs(toy->ctx());
  REQUIRE(b.draws.snapshots.size() == a.draws.snapshots.size());
  for (std::size_t q = 0; q < a.draws.snapshots.size(); ++q) {
    CHECK(a.draws.snapshots[q].membership == b.draws.snapshots[q].membership);
    CHECK(a.draws.snapshots[q].scales.sigma2 == b.draws.snapshots[q].scales.sigma2);
  }
}

TEST_CASE("isotropic data recovers the generating variance") {
  auto f = isotropic_single_node(500, 20, 2.0, 31);
  f->hyper.iters = 400;
  f->hyper.burn_in = 200;
  f->hyper.seed = 3;
  const GibbsRun run = run_gibbs(f->ctx());
  double mean = 0.0;
  for (const Snapshot& s : run.draws.snapshots) mean += s.scales.sigma2(0);
  mean /= static_cast<double>(run.draws.snapshots.size());
  CHECK(std::abs(mean - 2.0) < 0.2);
}

TEST_CASE("partially observed rows are augmented consistently") {
  Rng rng(19);
  RowMatrix m(120, 10);
  const Matrix Lambda = oracle::random_orthonormal(10, 2, rng) * 4.0;
  for (Index i = 0; i < 120; ++i) {
    m.row(i) = (Lambda * oracle::random_vector(2, rng) + oracle::random_vector(10, rng, 0.3)).transpose();
    if (i % 3 == 0) m(i, i % 10) = std::numeric_limits<double>::quiet_NaN();
  }
  RunConfig config;
  config.hyper.L = 2;
  config.hyper.d_upper = 3;
  config.hyper.iters = 40;
  config.hyper.burn_in = 10;
  config.min_cell_size = 10;
  const DataSet data(m);
  const StageOneResult s1 = run_stage_one(data, config);
  const SamplerContext ctx{s1.tree, s1.dict, s1.stats, data, config.hyper};
  const GibbsRun run = run_gibbs(ctx);
  CHECK(run.draws.snapshots.size() == 30);
  for (Index i = 0; i < 120; ++i) {
    const int k = run.state.membership[static_cast<std::size_t>(i)];
    if (s1.stats.is_partial(i)) {
      // Observed part of the completed statistics is fixed.
      CHECK(run.state.cur_A(i) >= s1.stats.B(k, i));
    } else {
      CHECK(run.state.cur_A(i) == s1.stats.A(k, i));
    }
  }
}

TEST_CASE("three separated clusters allocate inside their own subtree") {
  Rng rng(23);
  const Index D = 20, per = 100;
  RowMatrix m(3 * per, D);
  std::vector<int> label(3 * per);
  for (int c = 0; c < 3; ++c) {
    Vector centre = Vector::Zero(D);
    centre(c) = 40.0;
    const Matrix Lambda = oracle::random_orthonormal(D, 2, rng) * 3.0;
    for (Index r = 0; r < per; ++r) {
      const Index i = c * per + r;
      m.row(i) = (centre + Lambda * oracle::random_vector(2, rng) + oracle::random_vector(D, rng, 0.3)).transpose();
      label[static_cast<std::size_t>(i)] = c;
    }
  }
  RunConfig config;
  config.hyper.L = 3;
  config.hyper.d_upper = 4;
  config.hyper.iters = 200;
  config.hyper.burn_in = 100;
  config.min_cell_size = 8;
  const DataSet data(m);
  const StageOneResult s1 = run_stage_one(data, config);
  const SamplerContext ctx{s1.tree, s1.dict, s1.stats, data, config.hyper};
  const GibbsRun run = run_gibbs(ctx);

  // Smallest node whose cell holds every member of the component.
  std::vector<int> home(3, 0);
  for (int c = 0; c < 3; ++c) {
    for (int k : s1.tree.nodes()) {
      const auto mem = s1.tree.members(k);
      bool all = true;
      for (Index i = c * per; i < (c + 1) * per && all; ++i) all = std::binary_search(mem.begin(), mem.end(), i);
      if (all && scale_of(k) >= scale_of(home[static_cast<std::size_t>(c)])) home[static_cast<std::size_t>(c)] = k;
    }
  }
  auto within = [](int k, int root) {
    while (k > root) k = parent_of(k);
    return k == root;
  };
  Index hits = 0, total = 0;
  for (const Snapshot& snap : run.draws.snapshots) {
    for (Index i = 0; i < 3 * per; ++i) {
      const int c = label[static_cast<std::size_t>(i)];
      hits += within(snap.membership[static_cast<std::size_t>(i)], home[static_cast<std::size_t>(c)]) ? 1 : 0;
      ++total;
    }
  }
  for (int c = 0; c < 3; ++c) CHECK(home[static_cast<std::size_t>(c)] != 0);
  CHECK(static_cast<double>(hits) / static_cast<double>(total) >= 0.95);
}
