#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace geode {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ErrorKind {
  EmptyData,
  InvalidRank,
  DimensionMismatch,
  NonFiniteInput,
  NotPositiveDefinite,
  InvalidRate,
  AllZeroWeights,
  NegativeQuadForm,
  SingularSystem,
  NoObservedEntries,
  DrawCountMismatch,
  NoAdaptationSteps,
  InvalidScenario,
  InvalidArgument,
  ConfigError,
  IoError,
  FormatError,
};

const char* to_string(ErrorKind kind);

// Process exit code for a failure of this kind: 2 config, 3 data, 4 numeric.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// splitmix64 finalizer; used to derive independent per-stream seeds from a
// single user seed so results do not depend on scheduling.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  // Gamma with the given shape and rate (mean shape / rate).
  double gamma(double shape, double rate);
  double beta(double a, double b);
  std::uint64_t bits() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// Observations in rows, coordinates in columns. Missing entries are NaN.
class DataSet {
 public:
  DataSet() = default;
  explicit DataSet(RowMatrix values);

  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }
  const RowMatrix& values() const { return values_; }
  auto row(Index i) const { return values_.row(i); }

  bool has_missing() const { return total_missing_ > 0; }
  Index missing_count(Index i) const { return missing_[static_cast<std::size_t>(i)]; }
  Index total_missing() const { return total_missing_; }
  bool observed(Index i, Index j) const { return !std::isnan(values_(i, j)); }

  DataSet subset(const std::vector<Index>& rows) const;

 private:
  RowMatrix values_;
  std::vector<Index> missing_;
  Index total_missing_ = 0;
};

// Binary tree nodes are addressed by scale s >= 0 and 1-based position h in
// [1, 2^s]. They are stored in heap order: slot(s, h) = 2^s - 1 + (h - 1),
// so the children of slot k are 2k + 1 (left, h' = 2h - 1) and 2k + 2.
struct NodeId {
  int scale = 0;
  int position = 1;

  friend bool operator==(const NodeId&, const NodeId&) = default;
};

constexpr int slot_of(NodeId id) { return (1 << id.scale) - 1 + (id.position - 1); }
constexpr int slot_count_for_depth(int depth) { return (1 << (depth + 1)) - 1; }
constexpr int left_child(int slot) { return 2 * slot + 1; }
constexpr int right_child(int slot) { return 2 * slot + 2; }
constexpr int parent_of(int slot) { return (slot - 1) / 2; }

constexpr int scale_of(int slot) {
  int s = 0;
  while (slot >= (1 << (s + 1)) - 1) ++s;
  return s;
}

constexpr NodeId node_of(int slot) {
  const int s = scale_of(slot);
  return NodeId{s, slot - ((1 << s) - 1) + 1};
}

}  // namespace geode
