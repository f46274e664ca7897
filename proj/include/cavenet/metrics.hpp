#pragma once

// Classification metrics: confusion matrices, per-class and macro rates,
// accuracy, balanced accuracy, one-vs-rest AUC, the combined score and
// confusion heatmaps.
//
// Ratios whose denominator is zero are reported as 0 and flagged undefined.
// Macro averages are unweighted means over the defined per-class values.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cavenet/csv.hpp"
#include "cavenet/probs.hpp"

namespace cavenet::metrics {

// Rows are true classes, columns predicted classes.
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::uint64_t> counts;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t classes) : classes(classes), counts(classes * classes, 0) {}

  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts[truth * classes + pred]; }
  std::uint64_t& at(std::size_t truth, std::size_t pred) { return counts[truth * classes + pred]; }
  std::uint64_t total() const;
  std::uint64_t support(std::size_t c) const;    // row sum
  std::uint64_t predicted(std::size_t c) const;  // column sum

  bool operator==(const ConfusionMatrix&) const = default;

  CsvTable to_csv() const;
  static ConfusionMatrix from_csv(const CsvTable& table);
};

// Throws DataError on length mismatch or a label outside [0, classes).
ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred, std::size_t classes);

struct Ratio {
  double value = 0.0;
  bool defined = false;
};

struct ClassMetrics {
  std::uint64_t tp = 0, fn = 0, fp = 0, tn = 0;
  Ratio sensitivity, specificity, precision, f1;
};

// F1 is 2TP / (2TP + FP + FN), which equals 2PR / (P + R) whenever both are
// defined and is 0 (defined) when the class is present but never hit.
std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm);

struct MacroMetrics {
  double sensitivity = 0.0, specificity = 0.0, precision = 0.0, f1 = 0.0;
};

MacroMetrics macro(std::span<const ClassMetrics> per_class);

// Both throw DataError on an empty matrix.
double accuracy(const ConfusionMatrix& cm);
double balanced_accuracy(const ConfusionMatrix& cm);  // over classes with support

// Mann-Whitney AUC with midranks for tied scores. Throws DataError unless
// both positives and negatives are present.
double binary_auc(std::span<const double> scores, std::span<const std::uint8_t> positive);

struct AucResult {
  double macro = 0.0;  // 0 when no class is defined
  std::vector<double> per_class;
  std::vector<bool> defined;  // false: class lacked positives or negatives
  std::size_t defined_count() const;
};

AucResult macro_auc(const ProbMatrix& probs, std::span<const int> truth);

// Arithmetic mean; throws NumericError for inputs outside [0, 1].
double combined_metric(double auc, double balanced_acc);

struct MetricsReport {
  std::string model;
  ConfusionMatrix cm;
  std::vector<ClassMetrics> per_class;
  MacroMetrics macro;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  AucResult auc;
  double combined = 0.0;
};

MetricsReport evaluate(std::string model, const ProbMatrix& probs, std::span<const int> truth);

// One row per report. The first six columns follow the usual summary
// table layout; balanced accuracy, AUC and the combined score follow.
CsvTable report_table(std::span<const MetricsReport> reports);

// Per-class table: class, support, tp, fn, fp, tn and each rate with its flag.
CsvTable per_class_table(const MetricsReport& report);

// Row-normalized heatmap as binary PPM with `cell` pixels per entry. Colour
// ramps black, red, yellow, white as the row fraction goes 0 to 1. Rows with
// no samples render black.
void write_heatmap(const ConfusionMatrix& cm, const std::filesystem::path& path, std::size_t cell = 16);

// Writes the heatmap and the raw-count CSV.
void export_heatmap(const ConfusionMatrix& cm, const std::filesystem::path& image_path,
                    const std::filesystem::path& csv_path);

}  // namespace cavenet::metrics
