#pragma once

// Row-major class-probability matrix shared by every classifier.

#include <cstddef>
#include <span>
#include <vector>

namespace cavenet {

// Values within this distance of the maximum count as tied.
inline constexpr double kTieTolerance = 1e-12;

// Index of the largest value; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> v);

struct ProbMatrix {
  std::size_t classes = 0;
  std::vector<double> values;  // rows * classes

  ProbMatrix() = default;
  ProbMatrix(std::size_t rows, std::size_t classes) : classes(classes), values(rows * classes, 0.0) {}

  std::size_t rows() const { return classes == 0 ? 0 : values.size() / classes; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * classes, classes}; }
  std::span<double> row(std::size_t i) { return {values.data() + i * classes, classes}; }
  std::vector<int> predictions() const;
  // Throws NumericError unless every row is finite, nonnegative and sums to 1 within `tol`.
  void check_distribution(double tol = 1e-6) const;
};

}  // namespace cavenet

namespace cavenet {

// Element-wise (optionally weighted) mean of member rows. Weights must be
// nonnegative with a positive sum; empty means equal weights. Members with
// zero weight are ignored. Members must agree in shape.
ProbMatrix soft_vote(std::span<const ProbMatrix> members, std::span<const double> weights = {});
// Per row, the fraction of members whose argmax is each class.
ProbMatrix hard_vote(std::span<const ProbMatrix> members);

}  // namespace cavenet
