#include "geode/model_core.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <limits>
#include <string>

namespace geode {

namespace {

constexpr double kUnderflowMass = 1e-280;

// log P(shape, x) through the power series of the lower incomplete gamma
// function; used when the regularised value itself underflows.
double log_gamma_p_series(double shape, double x) {
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 100000; ++k) {
    term *= x / (shape + k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return shape * std::log(x) - x - std::lgamma(shape + 1.0) + std::log(sum);
}

double log_mass_below_one(double shape, double rate) {
  const double p = boost::math::gamma_p(shape, rate);
  if (p > kUnderflowMass) return std::log(p);
  return log_gamma_p_series(shape, rate);
}

}  // namespace

double trunc_exp_quantile(double rate, double U) {
  if (!(rate > 0.0)) throw Error(ErrorKind::InvalidRate, "rate must be positive, got " + std::to_string(rate));
  return 1.0 - std::log1p(-U) / rate;
}

double sample_trunc_exp(double rate, Rng& rng) { return trunc_exp_quantile(rate, rng.uniform()); }

double trunc_gamma01_quantile(double shape, double rate, double U) {
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw Error(ErrorKind::InvalidRate, "truncated gamma needs positive shape and rate");
  }
  const double below_one = boost::math::gamma_p(shape, rate);
  double x = 0.0;
  if (below_one > kUnderflowMass) {
    x = boost::math::gamma_p_inv(shape, U * below_one) / rate;
  } else {
    // All mass sits in a thin layer under 1: x = 1 - y with y exponential.
    double layer_rate = shape - 1.0 - rate;
    if (!(layer_rate > 0.0)) layer_rate = shape;
    x = 1.0 + std::log1p(-U) / layer_rate;
  }
  constexpr double kBelowOne = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  if (!(x < 1.0)) x = kBelowOne;
  if (!(x > 0.0)) x = std::numeric_limits<double>::min();
  return x;
}

double sample_trunc_gamma01(double shape, double rate, Rng& rng) {
  return trunc_gamma01_quantile(shape, rate, rng.uniform());
}

double trunc_gamma01_log_density(double x, double shape, double rate) {
  if (!(x > 0.0 && x < 1.0)) return -std::numeric_limits<double>::infinity();
  return (shape - 1.0) * std::log(x) - rate * x + shape * std::log(rate) - std::lgamma(shape) -
         log_mass_below_one(shape, rate);
}

}  // namespace geode
