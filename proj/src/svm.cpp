#include <cmath>
#include <numeric>

#include "cavenet/error.hpp"
#include "cavenet/synxrf.hpp"

namespace cavenet::synxrf {

std::vector<double> SvmModel::scores(std::span<const float> x) const {
  if (x.size() != dim) throw ShapeError("svm input width mismatch");
  std::vector<double> s(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    double acc = bias[c];
    for (std::size_t j = 0; j < dim; ++j) acc += weights[c * dim + j] * ((x[j] - mean[j]) * inv_scale[j]);
    s[c] = acc;
  }
  return s;
}

SvmModel svm_fit(const LatentSet& x, std::size_t classes, const SvmConfig& config, std::uint64_t seed) {
  if (!(config.lambda > 0.0)) throw ConfigError("svm lambda must be positive");
  if (config.epochs < 1) throw ConfigError("svm epochs must be >= 1");
  if (!(config.temperature > 0.0)) throw ConfigError("svm temperature must be positive");
  std::vector<std::size_t> seen(classes, 0);
  for (int l : x.labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) throw DataError("svm label out of range");
    ++seen[static_cast<std::size_t>(l)];
  }
  if (std::count_if(seen.begin(), seen.end(), [](std::size_t n) { return n > 0; }) < 2) {
    throw DataError("svm needs at least two classes present");
  }

  const std::size_t n = x.rows(), d = x.dim;
  SvmModel m;
  m.classes = classes;
  m.dim = d;
  m.temperature = config.temperature;
  m.mean.assign(d, 0.0);
  m.inv_scale.assign(d, 1.0);
  for (std::size_t j = 0; j < d; ++j) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += x.row(i)[j];
      s2 += static_cast<double>(x.row(i)[j]) * x.row(i)[j];
    }
    const double mu = s / static_cast<double>(n);
    const double var = std::max(0.0, s2 / static_cast<double>(n) - mu * mu);
    m.mean[j] = static_cast<float>(mu);
    m.inv_scale[j] = static_cast<float>(1.0 / std::sqrt(var + 1e-8));
  }
  std::vector<double> z(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) z[i * d + j] = (x.row(i)[j] - m.mean[j]) * m.inv_scale[j];
  }

  m.weights.assign(classes * d, 0.0);
  m.bias.assign(classes, 0.0);
  const double lambda = config.lambda;
  const double radius = 1.0 / std::sqrt(lambda);
  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t c = 0; c < classes; ++c) {
    double* w = m.weights.data() + c * d;
    double& b = m.bias[c];
    std::size_t t = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      rng.shuffle(order);
      for (std::size_t i : order) {
        ++t;
        const double eta = 1.0 / (lambda * static_cast<double>(t));
        const double y = x.labels[i] == static_cast<int>(c) ? 1.0 : -1.0;
        const double* zi = z.data() + i * d;
        double f = b;
        for (std::size_t j = 0; j < d; ++j) f += w[j] * zi[j];
        const double shrink = 1.0 - eta * lambda;
        for (std::size_t j = 0; j < d; ++j) w[j] *= shrink;
        b *= shrink;
        if (y * f < 1.0) {
          for (std::size_t j = 0; j < d; ++j) w[j] += eta * y * zi[j];
          b += eta * y;
        }
        // Project onto the ball that contains the optimum.
        double norm2 = b * b;
        for (std::size_t j = 0; j < d; ++j) norm2 += w[j] * w[j];
        if (norm2 > radius * radius) {
          const double s = radius / std::sqrt(norm2);
          for (std::size_t j = 0; j < d; ++j) w[j] *= s;
          b *= s;
        }
      }
    }
  }
  // Float precision so a serialized model scores identically.
  for (auto& v : m.weights) v = static_cast<float>(v);
  for (auto& v : m.bias) v = static_cast<float>(v);
  return m;
}

ProbMatrix svm_predict_proba(const SvmModel& model, const LatentSet& x) {
  if (!model.trained()) throw StateError("svm is not trained");
  ProbMatrix out(x.rows(), model.classes);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto s = model.scores(x.row(i));
    const double top = *std::max_element(s.begin(), s.end());
    double total = 0.0;
    auto row = out.row(i);
    for (std::size_t c = 0; c < s.size(); ++c) total += row[c] = std::exp((s[c] - top) / model.temperature);
    for (auto& p : row) p /= total;
  }
  return out;
}

}  // namespace cavenet::synxrf
