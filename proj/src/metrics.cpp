#include "cavenet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "cavenet/error.hpp"

namespace cavenet::metrics {

namespace {

Ratio ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return {};
  return {static_cast<double>(num) / static_cast<double>(den), true};
}

double defined_mean(std::span<const ClassMetrics> rows, Ratio ClassMetrics::*field) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if ((r.*field).defined) {
      sum += (r.*field).value;
      ++n;
    }
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

void require_nonempty(const ConfusionMatrix& cm) {
  if (cm.classes == 0 || cm.total() == 0) throw DataError("confusion matrix is empty");
}

std::string flag(const Ratio& r) { return r.defined ? "1" : "0"; }

}  // namespace

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

std::uint64_t ConfusionMatrix::support(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t p = 0; p < classes; ++p) s += at(c, p);
  return s;
}

std::uint64_t ConfusionMatrix::predicted(std::size_t c) const {
  std::uint64_t s = 0;
  for (std::size_t t = 0; t < classes; ++t) s += at(t, c);
  return s;
}

CsvTable ConfusionMatrix::to_csv() const {
  std::vector<std::string> header{"true_class"};
  for (std::size_t c = 0; c < classes; ++c) header.push_back("pred_" + std::to_string(c));
  CsvTable table(std::move(header));
  for (std::size_t t = 0; t < classes; ++t) {
    std::vector<std::string> row{std::to_string(t)};
    for (std::size_t p = 0; p < classes; ++p) row.push_back(std::to_string(at(t, p)));
    table.add_row(std::move(row));
  }
  return table;
}

ConfusionMatrix ConfusionMatrix::from_csv(const CsvTable& table) {
  if (table.cols() < 2 || table.header()[0] != "true_class") throw DataError("not a confusion matrix table");
  const std::size_t classes = table.cols() - 1;
  if (table.rows() != classes) throw DataError("confusion matrix table is not square");
  ConfusionMatrix cm(classes);
  for (std::size_t t = 0; t < classes; ++t) {
    if (table.row(t)[0] != std::to_string(t)) throw DataError("confusion matrix rows out of order");
    for (std::size_t p = 0; p < classes; ++p) {
      const std::string& cell = table.row(t)[p + 1];
      std::size_t used = 0;
      unsigned long long v = 0;
      try {
        v = std::stoull(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cell.size() || cell[0] == '-') throw DataError("bad count '" + cell + "'");
      cm.at(t, p) = v;
    }
  }
  return cm;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred, std::size_t classes) {
  if (truth.size() != pred.size()) throw DataError("label vectors differ in length");
  ConfusionMatrix cm(classes);
  const int limit = static_cast<int>(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= limit || pred[i] < 0 || pred[i] >= limit) {
      throw DataError("label out of range at index " + std::to_string(i));
    }
    ++cm.at(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(pred[i]));
  }
  return cm;
}

std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  std::vector<ClassMetrics> out(cm.classes);
  for (std::size_t c = 0; c < cm.classes; ++c) {
    ClassMetrics& m = out[c];
    m.tp = cm.at(c, c);
    m.fn = cm.support(c) - m.tp;
    m.fp = cm.predicted(c) - m.tp;
    m.tn = total - m.tp - m.fn - m.fp;
    m.sensitivity = ratio(m.tp, m.tp + m.fn);
    m.specificity = ratio(m.tn, m.tn + m.fp);
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.f1 = ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn);
  }
  return out;
}

MacroMetrics macro(std::span<const ClassMetrics> per_class) {
  return {defined_mean(per_class, &ClassMetrics::sensitivity), defined_mean(per_class, &ClassMetrics::specificity),
          defined_mean(per_class, &ClassMetrics::precision), defined_mean(per_class, &ClassMetrics::f1)};
}

double accuracy(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  std::uint64_t trace = 0;
  for (std::size_t c = 0; c < cm.classes; ++c) trace += cm.at(c, c);
  return static_cast<double>(trace) / static_cast<double>(cm.total());
}

double balanced_accuracy(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  return defined_mean(per_class_metrics(cm), &ClassMetrics::sensitivity);
}

double binary_auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw DataError("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Ranks are 1-based; a tie group spanning ranks [lo, hi] gets (lo + hi) / 2.
  // Doubling keeps every quantity an exact integer until the final division.
  std::uint64_t pos = 0;
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t twice_mid = static_cast<std::uint64_t>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) {
        ++pos;
        twice_rank_sum += twice_mid;
      }
    }
    i = j;
  }
  const std::uint64_t neg = n - pos;
  if (pos == 0 || neg == 0) throw DataError("AUC needs both positive and negative samples");
  const std::uint64_t twice_u = twice_rank_sum - pos * (pos + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

std::size_t AucResult::defined_count() const {
  return static_cast<std::size_t>(std::count(defined.begin(), defined.end(), true));
}

AucResult macro_auc(const ProbMatrix& probs, std::span<const int> truth) {
  if (probs.rows() != truth.size()) throw DataError("probability rows and labels differ in length");
  AucResult out;
  out.per_class.assign(probs.classes, 0.0);
  out.defined.assign(probs.classes, false);
  std::vector<double> scores(truth.size());
  std::vector<std::uint8_t> positive(truth.size());
  double sum = 0.0;
  for (std::size_t c = 0; c < probs.classes; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      scores[i] = probs.row(i)[c];
      positive[i] = truth[i] == static_cast<int>(c);
      pos += positive[i];
    }
    if (pos == 0 || pos == truth.size()) continue;
    out.per_class[c] = binary_auc(scores, positive);
    out.defined[c] = true;
    sum += out.per_class[c];
  }
  const std::size_t n = out.defined_count();
  out.macro = n == 0 ? 0.0 : sum / static_cast<double>(n);
  return out;
}

double combined_metric(double auc, double balanced_acc) {
  if (!(auc >= 0.0 && auc <= 1.0 && balanced_acc >= 0.0 && balanced_acc <= 1.0)) {
    throw NumericError("combined metric inputs must lie in [0, 1]");
  }
  return (auc + balanced_acc) / 2.0;
}

MetricsReport evaluate(std::string model, const ProbMatrix& probs, std::span<const int> truth) {
  MetricsReport r;
  r.model = std::move(model);
  const std::vector<int> pred = probs.predictions();
  r.cm = confusion(truth, pred, probs.classes);
  r.per_class = per_class_metrics(r.cm);
  r.macro = metrics::macro(r.per_class);
  r.accuracy = accuracy(r.cm);
  r.balanced_accuracy = balanced_accuracy(r.cm);
  r.auc = macro_auc(probs, truth);
  r.combined = combined_metric(r.auc.macro, r.balanced_accuracy);
  return r;
}

CsvTable report_table(std::span<const MetricsReport> reports) {
  CsvTable t({"model", "avg_acc", "avg_specificity", "avg_sensitivity", "avg_f1", "avg_precision", "balanced_acc",
              "macro_auc", "combined"});
  for (const auto& r : reports) {
    t.add_row({r.model, format_number(r.accuracy), format_number(r.macro.specificity),
               format_number(r.macro.sensitivity), format_number(r.macro.f1), format_number(r.macro.precision),
               format_number(r.balanced_accuracy), format_number(r.auc.macro), format_number(r.combined)});
  }
  return t;
}

CsvTable per_class_table(const MetricsReport& report) {
  CsvTable t({"class", "support", "tp", "fn", "fp", "tn", "sensitivity", "sensitivity_defined", "specificity",
              "specificity_defined", "precision", "precision_defined", "f1", "f1_defined", "auc", "auc_defined"});
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    const ClassMetrics& m = report.per_class[c];
    const bool auc_ok = c < report.auc.defined.size() && report.auc.defined[c];
    t.add_row({std::to_string(c), std::to_string(m.tp + m.fn), std::to_string(m.tp), std::to_string(m.fn),
               std::to_string(m.fp), std::to_string(m.tn), format_number(m.sensitivity.value), flag(m.sensitivity),
               format_number(m.specificity.value), flag(m.specificity), format_number(m.precision.value),
               flag(m.precision), format_number(m.f1.value), flag(m.f1),
               format_number(auc_ok ? report.auc.per_class[c] : 0.0), auc_ok ? "1" : "0"});
  }
  return t;
}

void write_heatmap(const ConfusionMatrix& cm, const std::filesystem::path& path, std::size_t cell) {
  if (cm.classes == 0 || cell == 0) throw DataError("heatmap needs at least one class and a positive cell size");
  const std::size_t side = cm.classes * cell;
  std::vector<unsigned char> pixels(side * side * 3, 0);
  for (std::size_t t = 0; t < cm.classes; ++t) {
    const std::uint64_t row_total = cm.support(t);
    for (std::size_t p = 0; p < cm.classes; ++p) {
      const double frac = row_total == 0 ? 0.0 : static_cast<double>(cm.at(t, p)) / static_cast<double>(row_total);
      const long level = std::lround(frac * 765.0);
      const unsigned char rgb[3] = {static_cast<unsigned char>(std::clamp(level, 0L, 255L)),
                                    static_cast<unsigned char>(std::clamp(level - 255, 0L, 255L)),
                                    static_cast<unsigned char>(std::clamp(level - 510, 0L, 255L))};
      for (std::size_t y = t * cell; y < (t + 1) * cell; ++y) {
        for (std::size_t x = p * cell; x < (p + 1) * cell; ++x) {
          std::copy(rgb, rgb + 3, pixels.begin() + static_cast<std::ptrdiff_t>((y * side + x) * 3));
        }
      }
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << side << ' ' << side << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

void export_heatmap(const ConfusionMatrix& cm, const std::filesystem::path& image_path,
                    const std::filesystem::path& csv_path) {
  write_heatmap(cm, image_path);
  cm.to_csv().save(csv_path);
}

}  // namespace cavenet::metrics
