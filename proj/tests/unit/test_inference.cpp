#include <doctest.h>

#include "geode/inference.hpp"
#include "handmade.hpp"
#include "oracles.hpp"

#include <numbers>

using namespace geode;
using oracle::Component;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::span<const double> view(const Vector& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

Vector u_of(const Component& c) {
  Vector u(c.alpha2.size());
  for (Index m = 0; m < u.size(); ++m) u(m) = u_from_alpha2(c.alpha2(m), c.sigma2);
  return u;
}

Matrix cov_of(const Component& c) { return oracle::low_rank_cov(c.basis, c.alpha2, c.sigma2); }

}  // namespace

TEST_CASE("partial likelihood matches the dense marginal") {
  Rng rng(1);
  for (int rep = 0; rep < 100; ++rep) {
    const Index D = 15;
    const int d = 1 + rep % 5;
    const Component c = oracle::random_component(D, d, rng, 0.2 + rng.uniform());
    Vector y = c.mu + oracle::random_vector(D, rng, 2.0);
    for (Index j = 0; j < 6; ++j) y((j * 7 + rep) % D) = kNaN;
    NodeDictionary nd{c.mu, c.basis, Vector::Ones(d)};
    const PartialStats ps = partial_node_stats(nd, y);
    const Vector u = u_of(c);
    const double got = partial_node_loglik(ps.gram, ps.B, ps.C, view(u), c.sigma2, ps.observed);
    const double want = oracle::dense_marginal(c.mu, cov_of(c), y);
    CHECK(std::abs(got - want) <= 1e-8 * (1.0 + std::abs(want)));
  }
}

TEST_CASE("partial likelihood without missing entries is the fast path") {
  Rng rng(2);
  const Component c = oracle::random_component(12, 4, rng);
  const Vector y = c.mu + oracle::random_vector(12, rng);
  NodeDictionary nd{c.mu, c.basis, Vector::Ones(4)};
  const PartialStats ps = partial_node_stats(nd, y);
  const CompleteStats cs = complete_node_stats(nd, y);
  const Vector u = u_of(c);
  const double fast = node_log_likelihood(cs.A, view(cs.Z), view(u), c.sigma2, 12);
  CHECK(partial_node_loglik(ps, view(u), c.sigma2, 12) == fast);
  CHECK(partial_node_loglik(ps.gram, ps.B, ps.C, view(u), c.sigma2, 12) == doctest::Approx(fast).epsilon(1e-12));
}

TEST_CASE("partial likelihood with zero loadings is isotropic on the observed part") {
  Rng rng(3);
  Component c = oracle::random_component(10, 3, rng, 0.8);
  c.alpha2.setZero();
  Vector y = c.mu + oracle::random_vector(10, rng);
  y(2) = y(5) = kNaN;
  NodeDictionary nd{c.mu, c.basis, Vector::Ones(3)};
  const PartialStats ps = partial_node_stats(nd, y);
  const Vector u = Vector::Ones(3);
  const double expect = -4.0 * std::log(2.0 * std::numbers::pi * 0.8) - 0.5 * ps.B / 0.8;
  CHECK(partial_node_loglik(ps.gram, ps.B, ps.C, view(u), 0.8, 8) == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("partial likelihood errors") {
  const Matrix g = Matrix::Identity(2, 2);
  const Vector C = Vector::Zero(2);
  const Vector u = Vector::Constant(2, 0.5);
  auto kind_of = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::IoError;
  };
  CHECK(kind_of([&] { partial_node_loglik(g, 1.0, C, view(u), 1.0, 0); }) == ErrorKind::NoObservedEntries);
  const Vector bad_u = Vector::Constant(2, 0.0);
  CHECK(kind_of([&] { partial_node_loglik(g, 1.0, C, view(bad_u), 1.0, 3); }) == ErrorKind::SingularSystem);
  CHECK(kind_of([&] { partial_node_loglik(g, kNaN, C, view(u), 1.0, 3); }) == ErrorKind::NonFiniteInput);
}

TEST_CASE("latent posterior matches the closed form") {
  Rng rng(4);
  const Component c = oracle::random_component(14, 3, rng, 0.6);
  Vector y = c.mu + oracle::random_vector(14, rng, 2.0);
  y(0) = y(9) = y(13) = kNaN;
  NodeDictionary nd{c.mu, c.basis, Vector::Ones(3)};
  const PartialStats ps = partial_node_stats(nd, y);
  const LatentPosterior post = latent_posterior(ps.gram, ps.C, view(u_of(c)), c.sigma2);
  const Matrix Sigma = c.alpha2.asDiagonal();
  const Matrix cov = (Sigma * ps.gram / c.sigma2 + Matrix::Identity(3, 3)).inverse() * Sigma;
  const Vector mean = cov * ps.C / c.sigma2;
  CHECK((post.mean - mean).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((post.covariance() - cov).cwiseAbs().maxCoeff() < 1e-10);

  // Centred input gives a zero mean.
  Vector y0 = c.mu;
  y0(3) = kNaN;
  const PartialStats p0 = partial_node_stats(nd, y0);
  CHECK(latent_posterior(p0.gram, p0.C, view(u_of(c)), c.sigma2).mean.cwiseAbs().maxCoeff() < 1e-14);

  // Huge noise: the prior dominates.
  const LatentPosterior loose = latent_posterior(ps.gram, ps.C, view(u_of(Component{c.mu, c.basis, c.alpha2, 1e8})), 1e8);
  CHECK((loose.covariance() - Sigma).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("single-node isotropic density is exact") {
  Rng rng(5);
  Component c = oracle::random_component(6, 2, rng, 1.3);
  c.alpha2.setZero();
  const FittedModel model = oracle::handmade_model({c}, 3);
  const Vector y = oracle::random_vector(6, rng);
  const double expect = -3.0 * std::log(2.0 * std::numbers::pi * 1.3) - 0.5 * (y - c.mu).squaredNorm() / 1.3;
  CHECK(log_density(model, y) == doctest::Approx(expect).epsilon(1e-13));
  CHECK_THROWS_AS(log_density(model, Vector::Zero(5)), Error);
}

TEST_CASE("mixture density matches the dense mixture") {
  Rng rng(6);
  const Component a = oracle::random_component(8, 2, rng);
  const Component b = oracle::random_component(8, 2, rng);
  const FittedModel model = oracle::handmade_model({a, b}, 4, 0.3);
  for (int rep = 0; rep < 10; ++rep) {
    Vector y = a.mu + oracle::random_vector(8, rng, 2.0);
    const double la = std::log(0.7) + oracle::mvn_logpdf(y, a.mu, cov_of(a));
    const double lb = std::log(0.3) + oracle::mvn_logpdf(y, b.mu, cov_of(b));
    const double top = std::max(la, lb);
    const double expect = top + std::log(std::exp(la - top) + std::exp(lb - top));
    CHECK(log_density(model, y) == doctest::Approx(expect).epsilon(1e-10));
    // With missing coordinates the density is the observed marginal.
    y(1) = kNaN;
    const double ma = std::log(0.7) + oracle::dense_marginal(a.mu, cov_of(a), y);
    const double mb = std::log(0.3) + oracle::dense_marginal(b.mu, cov_of(b), y);
    const double mtop = std::max(ma, mb);
    CHECK(log_density(model, y) == doctest::Approx(mtop + std::log(std::exp(ma - mtop) + std::exp(mb - mtop))).epsilon(1e-10));
  }
}

TEST_CASE("the fitted density integrates to one in two dimensions") {
  Rng rng(7);
  Component a{Vector::Zero(2), oracle::random_orthonormal(2, 1, rng), Vector::Constant(1, 2.0), 0.5};
  Component b{Vector::Constant(2, 4.0), oracle::random_orthonormal(2, 1, rng), Vector::Constant(1, 1.0), 0.5};
  const FittedModel model = oracle::handmade_model({a, b}, 2, 0.4);
  // Midpoint rule over a box covering well beyond 6 sd of both components.
  const double lo = -12.0, hi = 16.0;
  const int steps = 400;
  const double h = (hi - lo) / steps;
  double sum = 0.0;
  Vector y(2);
  for (int i = 0; i < steps; ++i) {
    for (int j = 0; j < steps; ++j) {
      y << lo + (i + 0.5) * h, lo + (j + 0.5) * h;
      sum += std::exp(log_density(model, y));
    }
  }
  CHECK(std::abs(sum * h * h - 1.0) < 0.02);
}

TEST_CASE("separated components give a deep density valley") {
  Rng rng(8);
  Component a{Vector::Zero(5), oracle::random_orthonormal(5, 1, rng), Vector::Constant(1, 1.0), 1.0};
  Component b = a;
  b.mu = Vector::Constant(5, 10.0);
  const FittedModel model = oracle::handmade_model({a, b}, 2);
  const Vector mid = 0.5 * (a.mu + b.mu);
  CHECK(log_density(model, a.mu) - log_density(model, mid) > std::log(1e3));
  CHECK(log_density(model, b.mu) - log_density(model, mid) > std::log(1e3));
}

TEST_CASE("imputation at a centred input returns the node mean") {
  Rng rng(9);
  const Component c = oracle::random_component(10, 3, rng);
  const FittedModel model = oracle::handmade_model({c}, 4000);
  Vector y = c.mu;
  y(1) = y(7) = kNaN;
  const ImputationResult r = impute(model, y, rng);
  REQUIRE(r.entries.size() == 2);
  REQUIRE(r.draws.size() == 4000);
  for (const ImputationDraw& d : r.draws) CHECK(d.eta.size() == 3);
  const Matrix cov = cov_of(c);
  for (const ImputedEntry& e : r.entries) {
    const double sd = std::sqrt(oracle::schur_conditional(c.mu, cov, y, {e.column}).cov(0, 0));
    CHECK(std::abs(e.mean - c.mu(e.column)) < 4.0 * sd / std::sqrt(4000.0));
    CHECK(e.lower <= e.mean);
    CHECK(e.upper >= e.mean);
    CHECK(e.sd >= 0.0);
  }
}

TEST_CASE("imputed draws match Schur-complement conditioning") {
  Rng rng(10);
  const Index D = 20;
  const Component c = oracle::random_component(D, 4, rng, 0.4);
  const FittedModel model = oracle::handmade_model({c}, 20000);
  const Matrix cov = cov_of(c);
  Vector y = c.mu + Eigen::LLT<Matrix>(cov).matrixL() * oracle::random_vector(D, rng);
  const std::vector<Index> missing{2, 5, 11, 17};
  for (Index j : missing) y(j) = kNaN;
  const oracle::Conditional truth = oracle::schur_conditional(c.mu, cov, y, missing);
  const ImputationResult r = impute(model, y, rng);
  const auto N = static_cast<double>(r.draws.size());
  Vector mean = Vector::Zero(4);
  for (const ImputationDraw& d : r.draws) mean += d.missing_values;
  mean /= N;
  Matrix S = Matrix::Zero(4, 4);
  for (const ImputationDraw& d : r.draws) S += (d.missing_values - mean) * (d.missing_values - mean).transpose();
  S /= N - 1.0;
  for (Index a = 0; a < 4; ++a) {
    CHECK(std::abs(mean(a) - truth.mean(a)) < 3.5 * std::sqrt(truth.cov(a, a) / N));
    for (Index b = 0; b < 4; ++b) {
      const double se = std::sqrt((truth.cov(a, a) * truth.cov(b, b) + truth.cov(a, b) * truth.cov(a, b)) / N);
      CHECK(std::abs(S(a, b) - truth.cov(a, b)) < 3.5 * se);
    }
  }
}

TEST_CASE("imputation edge cases") {
  Rng rng(11);
  const Component c = oracle::random_component(5, 2, rng);
  const FittedModel model = oracle::handmade_model({c}, 10);
  const Vector full = oracle::random_vector(5, rng);
  CHECK(impute(model, full, rng).entries.empty());
  try {
    impute(model, Vector::Constant(5, kNaN), rng);
    FAIL("expected NoObservedEntries");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoObservedEntries);
  }
  Vector y = full;
  y(0) = y(3) = kNaN;
  Rng r1(5), r2(5);
  const ImputationResult all = impute(model, y, r1);
  const std::vector<Index> resp{0, 3};
  const std::vector<ImputedEntry> pred = predict_response(model, y, resp, r2);
  REQUIRE(pred.size() == 2);
  for (std::size_t q = 0; q < 2; ++q) {
    CHECK(pred[q].mean == all.entries[q].mean);
    CHECK(pred[q].upper == all.entries[q].upper);
  }
  const std::vector<Index> bad{1};
  CHECK_THROWS_AS(predict_response(model, y, bad, r2), Error);
}

TEST_CASE("votes, ties and classification") {
  Matrix ld(4, 3);
  ld << 1, 2, 0, 3, 1, 0, 0, 5, 1, 2, 2, 0;
  ClassVote v = vote(ld);
  CHECK(v.label == 1);
  CHECK(v.distribution[0] == doctest::Approx(0.375));
  CHECK(v.distribution[1] == doctest::Approx(0.625));

  // Vote tie broken by mean log-density.
  Matrix tie(2, 2);
  tie << 0, 1, 5, -10;
  v = vote(tie);
  CHECK(v.distribution[0] == 0.5);
  CHECK(v.label == 1 - static_cast<int>(v.mean_log_density[0] > v.mean_log_density[1]));

  // Shifting a draw's row leaves the votes unchanged.
  Matrix shifted = ld;
  shifted.row(2).array() += 100.0;
  CHECK(vote(shifted).distribution == vote(ld).distribution);

  Rng rng(12);
  Component a{Vector::Zero(4), oracle::random_orthonormal(4, 1, rng), Vector::Constant(1, 0.0), 1.0};
  Component b = a;
  b.mu(0) = 10.0;
  const FittedModel ma = oracle::handmade_model({a}, 6);
  const FittedModel mb = oracle::handmade_model({b}, 6);
  std::vector<const FittedModel*> models{&ma, &mb};
  ClassVote cv = classify(models, a.mu);
  CHECK(cv.label == 0);
  CHECK(cv.distribution[0] == 1.0);
  cv = classify(models, b.mu);
  CHECK(cv.label == 1);

  std::vector<const FittedModel*> same{&ma, &ma};
  cv = classify(same, oracle::random_vector(4, rng));
  CHECK(cv.distribution[0] == 0.5);
  CHECK(cv.label == 0);

  const FittedModel short_model = oracle::handmade_model({a}, 3);
  std::vector<const FittedModel*> uneven{&ma, &short_model};
  try {
    classify(uneven, a.mu);
    FAIL("expected DrawCountMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DrawCountMismatch);
  }
  Component wide{Vector::Zero(5), oracle::random_orthonormal(5, 1, rng), Vector::Ones(1), 1.0};
  const FittedModel mw = oracle::handmade_model({wide}, 6);
  std::vector<const FittedModel*> mixed{&ma, &mw};
  CHECK_THROWS_AS(classify(mixed, a.mu), Error);
}

TEST_CASE("inclusion probabilities average the collected records") {
  Rng rng(13);
  FittedModel model = oracle::handmade_model({oracle::random_component(6, 3, rng)}, 2);
  CHECK_THROWS_AS(inclusion_probabilities(model), Error);
  model.draws.adaptation_log.push_back({5, false, 0, 0, {0, 0, 0}, 10});
  CHECK_THROWS_AS(inclusion_probabilities(model), Error);
  model.draws.adaptation_log.push_back({12, true, 1, 0, {10, 10, 0}, 10});
  model.draws.adaptation_log.push_back({15, true, 0, 1, {10, 5, 0}, 10});
  const Vector p = inclusion_probabilities(model);
  CHECK(p(0) == 1.0);
  CHECK(p(1) == 0.75);
  CHECK(p(2) == 0.0);
}
