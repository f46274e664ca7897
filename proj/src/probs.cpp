#include "cavenet/probs.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cavenet/error.hpp"

namespace cavenet {

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) return 0;
  double top = v[0];
  for (double x : v) top = std::max(top, x);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] >= top - kTieTolerance) return i;
  }
  return 0;
}

std::vector<int> ProbMatrix::predictions() const {
  std::vector<int> out(rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(argmax(row(i)));
  return out;
}

void ProbMatrix::check_distribution(double tol) const {
  for (std::size_t i = 0; i < rows(); ++i) {
    double total = 0.0;
    for (double p : row(i)) {
      if (!std::isfinite(p) || p < 0.0) throw NumericError("row " + std::to_string(i) + " has an invalid probability");
      total += p;
    }
    if (std::abs(total - 1.0) > tol) {
      throw NumericError("row " + std::to_string(i) + " sums to " + std::to_string(total));
    }
  }
}

}  // namespace cavenet

namespace cavenet {
namespace {

void check_members(std::span<const ProbMatrix> members) {
  if (members.empty()) throw ConfigError("voting needs at least one member");
  for (const auto& m : members) {
    if (m.classes != members[0].classes || m.rows() != members[0].rows()) {
      throw ShapeError("voting members disagree in rows or classes");
    }
  }
}

}  // namespace

ProbMatrix soft_vote(std::span<const ProbMatrix> members, std::span<const double> weights) {
  check_members(members);
  if (!weights.empty() && weights.size() != members.size()) throw ConfigError("one weight per member required");
  // Zero-weight members are dropped so a single remaining member is returned
  // unchanged.
  std::vector<std::size_t> active;
  std::vector<double> sorted_weights;
  for (std::size_t m = 0; m < members.size(); ++m) {
    const double w = weights.empty() ? 1.0 : weights[m];
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("member weights must be finite and nonnegative");
    if (w == 0.0) continue;
    active.push_back(m);
    sorted_weights.push_back(w);
  }
  if (active.empty()) throw ConfigError("at least one member weight must be positive");
  std::sort(sorted_weights.begin(), sorted_weights.end());
  double total = 0.0;
  for (double w : sorted_weights) total += w;
  // Summing offsets from the smallest value, in sorted order, makes the
  // result independent of member order and exact for identical members.
  std::vector<std::pair<double, double>> terms(active.size());
  ProbMatrix out(members[0].rows(), members[0].classes);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    for (std::size_t k = 0; k < active.size(); ++k) {
      const std::size_t m = active[k];
      terms[k] = {members[m].values[i], weights.empty() ? 1.0 : weights[m]};
    }
    std::sort(terms.begin(), terms.end());
    const double base = terms[0].first;
    double acc = 0.0;
    for (const auto& [p, w] : terms) acc += w * (p - base);
    out.values[i] = base + acc / total;
  }
  return out;
}

ProbMatrix hard_vote(std::span<const ProbMatrix> members) {
  check_members(members);
  ProbMatrix out(members[0].rows(), members[0].classes);
  for (const auto& m : members) {
    for (std::size_t i = 0; i < out.rows(); ++i) out.row(i)[argmax(m.row(i))] += 1.0;
  }
  for (auto& v : out.values) v /= static_cast<double>(members.size());
  return out;
}

}  // namespace cavenet
