#include "geode/harness/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace geode {

namespace {

Matrix loading_matrix(Index D, Index p, Rng& rng) {
  Matrix L(D, p);
  for (Index j = 0; j < p; ++j) {
    for (Index i = 0; i < D; ++i) L(i, j) = 5.0 * rng.normal();
  }
  return L;
}

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(m.cols());
    for (Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

void gaussian_factor(const ScenarioSpec& spec, Rng& rng, ScenarioData& out) {
  const Matrix L = loading_matrix(spec.D, spec.p, rng);
  const double z = rng.normal();
  const double sigma2 = z * z / 10.0;
  const double sd = std::sqrt(sigma2);
  out.latent.resize(spec.n, spec.p);
  out.complete.resize(spec.n, spec.D);
  Vector eta(spec.p);
  for (Index i = 0; i < spec.n; ++i) {
    for (int m = 0; m < spec.p; ++m) eta(m) = rng.normal();
    out.latent.row(i) = eta.transpose();
    Vector y = L * eta;
    for (Index j = 0; j < spec.D; ++j) y(j) += sd * rng.normal();
    out.complete.row(i) = y.transpose();
  }
  out.labels.assign(static_cast<std::size_t>(spec.n), 0);
  out.truth["generator"] = "gaussian_factor";
  out.truth["sigma2"] = sigma2;
  out.truth["Lambda"] = matrix_json(L);
  out.truth["fully_specified"] = true;
}

void swissroll(const ScenarioSpec& spec, Rng& rng, ScenarioData& out) {
  const Matrix L = loading_matrix(spec.D, 3, rng);
  const double noise_sd = std::sqrt(spec.roll_noise);
  out.latent.resize(spec.n, 3);
  out.complete.resize(spec.n, spec.D);
  std::vector<double> ts(static_cast<std::size_t>(spec.n)), ws(static_cast<std::size_t>(spec.n));
  for (Index i = 0; i < spec.n; ++i) {
    const double t = 1.5 * std::numbers::pi + 3.0 * std::numbers::pi * rng.uniform();
    const double w = 21.0 * rng.uniform();
    Vector eta(3);
    eta << t * std::cos(t), w, t * std::sin(t);
    for (int m = 0; m < 3; ++m) eta(m) += noise_sd * rng.normal();
    ts[static_cast<std::size_t>(i)] = t;
    ws[static_cast<std::size_t>(i)] = w;
    out.latent.row(i) = eta.transpose();
    out.complete.row(i) = (L * eta).transpose();
  }
  out.labels.assign(static_cast<std::size_t>(spec.n), 0);
  out.truth["generator"] = "swissroll";
  out.truth["parametrization"] = "eta = (t cos t, w, t sin t), t ~ U[1.5 pi, 4.5 pi], w ~ U[0, 21]";
  out.truth["noise_variance"] = spec.roll_noise;
  out.truth["t"] = ts;
  out.truth["w"] = ws;
  out.truth["Lambda"] = matrix_json(L);
  out.truth["fully_specified"] = true;
}

void threemix(const ScenarioSpec& spec, Rng& rng, ScenarioData& out) {
  constexpr int dims[3] = {3, 5, 7};
  constexpr double sigma2 = 0.1;
  const double c = 50.0 / std::numbers::sqrt2;
  std::vector<Matrix> loads;
  for (int k = 0; k < 3; ++k) loads.push_back(loading_matrix(spec.D, dims[k], rng));
  const double sd = std::sqrt(sigma2);
  out.latent = RowMatrix::Zero(spec.n, 7);
  out.complete.resize(spec.n, spec.D);
  out.labels.resize(static_cast<std::size_t>(spec.n));
  for (Index i = 0; i < spec.n; ++i) {
    const int k = std::min(2, static_cast<int>(3.0 * rng.uniform()));
    out.labels[static_cast<std::size_t>(i)] = k;
    Vector eta(dims[k]);
    for (int m = 0; m < dims[k]; ++m) eta(m) = rng.normal();
    out.latent.row(i).head(dims[k]) = eta.transpose();
    Vector y = loads[static_cast<std::size_t>(k)] * eta;
    y(k) += c;
    for (Index j = 0; j < spec.D; ++j) y(j) += sd * rng.normal();
    out.complete.row(i) = y.transpose();
  }
  out.truth["generator"] = "threemix";
  out.truth["intrinsic_dims"] = {3, 5, 7};
  out.truth["mean_scale"] = c;
  out.truth["pairwise_mean_distance"] = 50.0;
  out.truth["sigma2"] = sigma2;
  out.truth["Lambda"] = {matrix_json(loads[0]), matrix_json(loads[1]), matrix_json(loads[2])};
  out.truth["fully_specified"] = false;
  out.truth["note"] = "component means, weights and noise level chosen here; not given in the original study";
}

void parabola(const ScenarioSpec& spec, Rng& rng, ScenarioData& out) {
  constexpr double sigma2 = 0.01;
  const Matrix L = loading_matrix(spec.D, 2, rng);
  const double sd = std::sqrt(sigma2);
  out.latent.resize(spec.n, 2);
  out.complete.resize(spec.n, spec.D);
  for (Index i = 0; i < spec.n; ++i) {
    const double t = 2.0 * rng.uniform() - 1.0;
    Vector eta(2);
    eta << t, t * t;
    out.latent.row(i) = eta.transpose();
    Vector y = L * eta;
    for (Index j = 0; j < spec.D; ++j) y(j) += sd * rng.normal();
    out.complete.row(i) = y.transpose();
  }
  out.labels.assign(static_cast<std::size_t>(spec.n), 0);
  out.truth["generator"] = "parabola";
  out.truth["sigma2"] = sigma2;
  out.truth["Lambda"] = matrix_json(L);
  out.truth["fully_specified"] = false;
}

// Masks exactly round(fraction * n * D) cells, never a row's last observed cell.
Index apply_mask(RowMatrix& values, double fraction, Rng& rng) {
  const Index n = values.rows();
  const Index D = values.cols();
  const auto target = static_cast<Index>(std::llround(fraction * static_cast<double>(n * D)));
  std::vector<Index> cells(static_cast<std::size_t>(n * D));
  std::iota(cells.begin(), cells.end(), Index{0});
  std::shuffle(cells.begin(), cells.end(), rng.engine());
  std::vector<Index> left(static_cast<std::size_t>(n), D);
  Index masked = 0;
  for (Index cell : cells) {
    if (masked == target) break;
    const Index i = cell / D;
    if (left[static_cast<std::size_t>(i)] <= 1) continue;
    values(i, cell % D) = std::numeric_limits<double>::quiet_NaN();
    --left[static_cast<std::size_t>(i)];
    ++masked;
  }
  return masked;
}

}  // namespace

ScenarioData simulate_scenario(const ScenarioSpec& spec) {
  static const std::vector<std::string> known{"1", "2", "3", "4", "5", "6", "7", "8", "9", "threemix", "parabola"};
  if (std::find(known.begin(), known.end(), spec.id) == known.end()) {
    throw Error(ErrorKind::InvalidScenario, "unknown scenario '" + spec.id + "'");
  }
  if (spec.n < 1 || spec.D < 1) throw Error(ErrorKind::InvalidScenario, "n and D must be positive");
  const bool gaussian = spec.id.size() == 1 && spec.id[0] <= '6';
  const bool roll = spec.id.size() == 1 && spec.id[0] >= '7';
  if (gaussian && (spec.p < 1 || spec.p > spec.D)) throw Error(ErrorKind::InvalidScenario, "need 1 <= p <= D");
  if ((roll || spec.id == "threemix") && spec.D < 3) throw Error(ErrorKind::InvalidScenario, "need D >= 3");
  if (spec.id == "parabola" && spec.D < 2) throw Error(ErrorKind::InvalidScenario, "need D >= 2");
  if (spec.missing && !(spec.missing_fraction >= 0.0 && spec.missing_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidScenario, "missing fraction must be in [0, 1)");
  }

  ScenarioData out;
  out.truth = nlohmann::json::object();
  Rng rng(derive_seed(spec.seed, 7));
  if (gaussian) {
    gaussian_factor(spec, rng, out);
  } else if (roll) {
    swissroll(spec, rng, out);
  } else if (spec.id == "threemix") {
    threemix(spec, rng, out);
  } else {
    parabola(spec, rng, out);
  }
  out.observed = out.complete;
  Index masked = 0;
  if (spec.missing) {
    Rng mask_rng(derive_seed(spec.seed, 8));
    masked = apply_mask(out.observed, spec.missing_fraction, mask_rng);
  }
  out.truth["scenario"] = spec.id;
  out.truth["n"] = spec.n;
  out.truth["D"] = spec.D;
  out.truth["p"] = gaussian ? spec.p : static_cast<int>(out.latent.cols());
  out.truth["seed"] = spec.seed;
  out.truth["missing"] = spec.missing;
  out.truth["missing_fraction"] = static_cast<double>(masked) / static_cast<double>(spec.n * spec.D);
  out.truth["labels"] = out.labels;
  return out;
}

}  // namespace geode
