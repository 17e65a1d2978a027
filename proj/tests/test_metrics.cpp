#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "deitfake/errors.hpp"
#include "deitfake/metrics.hpp"
#include "deitfake/rng.hpp"

namespace deitfake {
namespace {

constexpr Label F = Label::Fake;
constexpr Label R = Label::Real;

// Probability a random fake outscores a random real, ties counted half.
double pairwise_auroc(const std::vector<double>& s, const std::vector<Label>& l) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (l[i] != F) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[j] != R) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

struct Instance {
  std::vector<double> scores;
  std::vector<Label> labels;
};

// Random instance with both classes and, when coarse, many tied scores.
Instance random_instance(RngStream& rng, bool coarse) {
  const std::size_t n = 2 + rng.below(499);
  Instance out;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = rng.uniform();
    out.scores.push_back(coarse ? std::round(s * 10.0) / 10.0 : s);
    out.labels.push_back(rng.uniform() < 0.5 ? F : R);
  }
  out.labels[0] = F;
  out.labels[1] = R;
  return out;
}

TEST(ConfusionTest, Basic) {
  const std::vector<double> s{0.9, 0.1};
  const std::vector<Label> l{F, R};
  EXPECT_EQ(confusion(s, l), (ConfusionMatrix{1, 0, 1, 0}));
}

TEST(ConfusionTest, AllZeroScoresPredictReal) {
  const std::vector<double> s(6, 0.0);
  const std::vector<Label> l{F, F, R, R, F, R};
  const ConfusionMatrix cm = confusion(s, l);
  EXPECT_EQ(cm.tp + cm.fp, 0u);
  EXPECT_EQ(cm.fn, 3u);
  EXPECT_EQ(cm.tn, 3u);
}

TEST(ConfusionTest, MatchesPerSampleLoop) {
  RngStream rng(1);
  std::vector<double> s(1000);
  std::vector<Label> l(1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    s[i] = rng.uniform();
    l[i] = rng.uniform() < 0.4 ? F : R;
  }
  ConfusionMatrix oracle;
  for (std::size_t i = 0; i < 1000; ++i) {
    const bool predicted_fake = s[i] >= 0.5;
    if (l[i] == F) {
      predicted_fake ? ++oracle.tp : ++oracle.fn;
    } else {
      predicted_fake ? ++oracle.fp : ++oracle.tn;
    }
  }
  EXPECT_EQ(confusion(s, l), oracle);
}

TEST(ConfusionTest, LengthMismatchIsContractError) {
  const std::vector<double> s{0.1, 0.2};
  const std::vector<Label> l{F};
  EXPECT_THROW(confusion(s, l), ContractError);
}

TEST(AccuracyTest, HandOracles) {
  EXPECT_EQ(accuracy(ConfusionMatrix{50, 0, 50, 0}), 1.0);
  EXPECT_DOUBLE_EQ(accuracy(ConfusionMatrix{3, 1, 2, 2}), 0.625);
  EXPECT_THROW(accuracy(ConfusionMatrix{}), ContractError);
}

TEST(AccuracyTest, FalseNegativeRateOfFullScaleTest) {
  // 9,520 fakes in a 19,041 image test set; 143 fakes missed, nothing else wrong.
  const ConfusionMatrix cm{9520 - 143, 0, 19041 - 9520, 143};
  EXPECT_EQ(cm.total(), 19041u);
  EXPECT_EQ(false_negative_rate(cm), 143.0 / 9520.0);
  EXPECT_NEAR(false_negative_rate(cm), 0.0150, 5e-5);
}

TEST(MacroF1Test, HandOracles) {
  EXPECT_EQ(macro_f1(ConfusionMatrix{10, 0, 7, 0}), 1.0);
  EXPECT_NEAR(macro_f1(ConfusionMatrix{2, 1, 2, 1}), 2.0 / 3.0, 1e-15);
}

TEST(MacroF1Test, RandomMatricesMatchPerClassOracle) {
  RngStream rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const ConfusionMatrix cm{rng.below(200), rng.below(200), rng.below(200), 1 + rng.below(200)};
    auto f1 = [](double tp, double fp, double fn) {
      const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
      const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
      return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    };
    const double tp = static_cast<double>(cm.tp);
    const double fp = static_cast<double>(cm.fp);
    const double tn = static_cast<double>(cm.tn);
    const double fn = static_cast<double>(cm.fn);
    const double oracle = 0.5 * (f1(tp, fp, fn) + f1(tn, fn, fp));
    EXPECT_NEAR(macro_f1(cm), oracle, 1e-12);
    EXPECT_NEAR(accuracy(cm), (tp + tn) / (tp + tn + fp + fn), 1e-15);
    EXPECT_GE(macro_f1(cm), 0.0);
    EXPECT_LE(macro_f1(cm), 1.0);
  }
}

TEST(MacroF1Test, SymmetricErrorsOnBalancedClassesEqualAccuracy) {
  RngStream rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::uint64_t per_class = 10 + rng.below(500);
    const std::uint64_t errors = rng.below(per_class);
    const ConfusionMatrix cm{per_class - errors, errors, per_class - errors, errors};
    EXPECT_EQ(macro_f1(cm), accuracy(cm));
  }
}

TEST(AurocTest, Oracles) {
  const std::vector<double> sep{0.9, 0.8, 0.2, 0.1};
  const std::vector<Label> sep_l{F, F, R, R};
  EXPECT_EQ(auroc(sep, sep_l), 1.0);
  const std::vector<double> flat(4, 0.3);
  EXPECT_EQ(auroc(flat, sep_l), 0.5);
  const std::vector<double> s{0.9, 0.6, 0.4, 0.1};
  const std::vector<Label> l{F, R, F, R};
  EXPECT_EQ(auroc(s, l), 0.75);
}

TEST(AurocTest, SingleClassIsContractError) {
  const std::vector<double> s{0.1, 0.2};
  const std::vector<Label> l{F, F};
  EXPECT_THROW(auroc(s, l), ContractError);
  EXPECT_THROW(roc_curve(s, l), ContractError);
}

TEST(AurocTest, TrapezoidEqualsPairwiseOnRandomInstances) {
  RngStream rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance in = random_instance(rng, trial % 2 == 0);
    const double a = auroc(in.scores, in.labels);
    EXPECT_NEAR(a, pairwise_auroc(in.scores, in.labels), 1e-12);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
    const auto curve = roc_curve(in.scores, in.labels);
    EXPECT_NEAR(trapezoid_area(curve), a, 1e-12);
  }
}

TEST(AurocTest, FlippedLabelsComplement) {
  RngStream rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Instance in = random_instance(rng, false);
    const double a = auroc(in.scores, in.labels);
    for (auto& l : in.labels) l = l == F ? R : F;
    EXPECT_NEAR(auroc(in.scores, in.labels), 1.0 - a, 1e-12);
  }
}

TEST(AurocTest, InvariantUnderMonotoneTransform) {
  RngStream rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    Instance in = random_instance(rng, trial % 2 == 1);
    const double a = auroc(in.scores, in.labels);
    for (double& s : in.scores) s = std::exp(3.0 * s) - 7.0;
    EXPECT_EQ(auroc(in.scores, in.labels), a);
  }
}

TEST(RocCurveTest, PerfectSeparation) {
  const std::vector<double> s{0.9, 0.8, 0.2, 0.1};
  const std::vector<Label> l{F, F, R, R};
  EXPECT_EQ(roc_curve(s, l), (std::vector<RocPoint>{{0, 0}, {0, 1}, {1, 1}}));
}

TEST(RocCurveTest, AllEqualScores) {
  const std::vector<double> s(5, 0.5);
  const std::vector<Label> l{F, R, R, F, R};
  EXPECT_EQ(roc_curve(s, l), (std::vector<RocPoint>{{0, 0}, {1, 1}}));
}

TEST(ReportTest, RoundTripsExactly) {
  RngStream rng(7);
  const Instance in = random_instance(rng, false);
  const MetricsReport report = make_report(in.scores, in.labels, 0.123456789012345678);
  std::ostringstream out;
  write_report(out, report);
  std::istringstream back(out.str());
  EXPECT_EQ(read_report(back), report);
  EXPECT_NE(out.str().find("positive"), std::string::npos);
}

TEST(ReportTest, RocCsvFormat) {
  const std::vector<RocPoint> pts{{0, 0}, {1.0 / 3.0, 0.5}, {1, 1}};
  std::ostringstream out;
  write_roc_csv(out, pts);
  EXPECT_EQ(out.str(), "fpr,tpr\n0,0\n0.333333333333,0.5\n1,1\n");
}

TEST(ReportTest, EmitWritesBothFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "deitfake_report_test";
  std::filesystem::remove_all(dir);
  const std::vector<double> s{0.9, 0.2};
  const std::vector<Label> l{F, R};
  emit_report(make_report(s, l, 0.1), dir, "test");
  EXPECT_TRUE(std::filesystem::exists(dir / "test.report"));
  EXPECT_TRUE(std::filesystem::exists(dir / "test_roc.csv"));
  std::filesystem::remove_all(dir);
}

TEST(ReportTest, StageComparisonHasBothColumns) {
  const std::vector<double> s{0.9, 0.2, 0.6};
  const std::vector<Label> l{F, R, R};
  const std::string table = render_stage_comparison(make_report(s, l, 0.3), make_report(s, l, 0.2));
  for (const char* needle : {"Stage-I", "Stage-II", "Loss", "Accuracy", "F1", "AUROC"}) {
    EXPECT_NE(table.find(needle), std::string::npos) << needle << "\n" << table;
  }
}

TEST(ReportTest, AblationTableHasThreeRows) {
  const std::vector<double> s{0.9, 0.2};
  const std::vector<Label> l{F, R};
  std::vector<AblationRow> rows;
  for (const char* name : {"T1", "T2", "T3"}) {
    rows.push_back({name, "recipe", "5", std::string(name) == "T3", make_report(s, l, 0.1)});
  }
  const std::string table = render_ablation_table(rows);
  for (const char* needle : {"T1", "T2", "T3", "Affine Transform Used?", "Accuracy", "F1 Macro", "AUC-ROC"}) {
    EXPECT_NE(table.find(needle), std::string::npos) << needle << "\n" << table;
  }
}

}  // namespace
}  // namespace deitfake
