#include "geode/common.hpp"

#include <cmath>
#include <limits>

namespace geode {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyData: return "EmptyData";
    case ErrorKind::InvalidRank: return "InvalidRank";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::InvalidRate: return "InvalidRate";
    case ErrorKind::AllZeroWeights: return "AllZeroWeights";
    case ErrorKind::NegativeQuadForm: return "NegativeQuadForm";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::NoObservedEntries: return "NoObservedEntries";
    case ErrorKind::DrawCountMismatch: return "DrawCountMismatch";
    case ErrorKind::NoAdaptationSteps: return "NoAdaptationSteps";
    case ErrorKind::InvalidScenario: return "InvalidScenario";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::FormatError: return "FormatError";
  }
  return "Unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigError:
    case ErrorKind::InvalidArgument:
    case ErrorKind::InvalidScenario:
      return 2;
    case ErrorKind::NotPositiveDefinite:
    case ErrorKind::NonFiniteInput:
    case ErrorKind::AllZeroWeights:
    case ErrorKind::NegativeQuadForm:
    case ErrorKind::SingularSystem:
    case ErrorKind::InvalidRate:
    case ErrorKind::InvalidRank:
      return 4;
    default:
      return 3;
  }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  // 53 random bits mapped to (0, 1); zero is rejected.
  for (;;) {
    const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    if (u > 0.0) return u;
  }
}

double Rng::normal() { return normal_(engine_); }

double Rng::gamma(double shape, double rate) {
  std::gamma_distribution<double> dist(shape, 1.0);
  return dist(engine_) / rate;
}

double Rng::beta(double a, double b) {
  const double x = gamma(a, 1.0);
  const double y = gamma(b, 1.0);
  if (x + y > 0.0) return x / (x + y);
  // Both draws underflowed (tiny shapes); fall back on a Bernoulli with the
  // limiting mass split.
  return uniform() < a / (a + b) ? 1.0 : 0.0;
}

DataSet::DataSet(RowMatrix values) : values_(std::move(values)) {
  missing_.assign(static_cast<std::size_t>(values_.rows()), 0);
  for (Index i = 0; i < values_.rows(); ++i) {
    Index count = 0;
    for (Index j = 0; j < values_.cols(); ++j) {
      if (std::isnan(values_(i, j))) ++count;
    }
    missing_[static_cast<std::size_t>(i)] = count;
    total_missing_ += count;
  }
}

DataSet DataSet::subset(const std::vector<Index>& rows) const {
  RowMatrix out(static_cast<Index>(rows.size()), cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = values_.row(rows[k]);
  return DataSet(std::move(out));
}

}  // namespace geode
