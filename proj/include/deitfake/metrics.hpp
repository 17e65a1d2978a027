#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "deitfake/label.hpp"

namespace deitfake {

// Positive class is Fake.
struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

struct MetricsReport {
  ConfusionMatrix confusion;
  double threshold = 0.5;
  double loss = 0.0;
  double accuracy = 0.0;
  double f1_macro = 0.0;
  double auroc = 0.0;
  std::vector<RocPoint> roc_points;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// Predicts Fake when score >= threshold. Scores are fake-probabilities.
ConfusionMatrix confusion(std::span<const double> scores, std::span<const Label> labels, double threshold = 0.5);

double accuracy(const ConfusionMatrix& cm);
// Unweighted mean of the Fake-positive and Real-positive F1 scores. A class
// with precision + recall == 0 contributes 0.
double macro_f1(const ConfusionMatrix& cm);
// Fakes classified as real, over all fakes.
double false_negative_rate(const ConfusionMatrix& cm);

// Area under the ROC by threshold sweep with trapezoids; tied scores form a
// single step. Equal to the Mann-Whitney U statistic with ties counted 1/2.
double auroc(std::span<const double> scores, std::span<const Label> labels);
// Sweep points from (0,0) to (1,1) with duplicate and collinear interior
// points removed.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const Label> labels);
double trapezoid_area(std::span<const RocPoint> points);

MetricsReport make_report(std::span<const double> scores, std::span<const Label> labels, double loss,
                          double threshold = 0.5);

// Structured text form; round-trips exactly.
void write_report(std::ostream& os, const MetricsReport& report);
MetricsReport read_report(std::istream& is);
// Header `fpr,tpr`, 12 significant digits.
void write_roc_csv(std::ostream& os, std::span<const RocPoint> points);

// Writes <stem>.report and <stem>_roc.csv into dir.
void emit_report(const MetricsReport& report, const std::filesystem::path& dir, const std::string& stem);

// Two-column stage comparison (loss, accuracy, macro-F1, AUROC).
std::string render_stage_comparison(const MetricsReport& stage1, const MetricsReport& stage2);

struct AblationRow {
  std::string test_case;
  std::string description;
  std::string total_epochs;
  bool affine = false;
  MetricsReport metrics;
};

std::string render_ablation_table(std::span<const AblationRow> rows);

}  // namespace deitfake
