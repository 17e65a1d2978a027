#include "deitfake/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "deitfake/errors.hpp"

namespace deitfake {

std::optional<Label> parse_label(std::string_view text) {
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "fake") return Label::Fake;
  if (t == "real") return Label::Real;
  return std::nullopt;
}

namespace {

void require_lengths(std::span<const double> scores, std::span<const Label> labels, const char* op) {
  if (scores.size() != labels.size()) {
    throw ContractError(std::string(op) + ": " + std::to_string(scores.size()) + " scores vs " +
                        std::to_string(labels.size()) + " labels");
  }
}

struct SweepCounts {
  std::uint64_t fp;
  std::uint64_t tp;
};

// Cumulative (fp, tp) after each distinct score, highest score first,
// starting at (0, 0).
std::vector<SweepCounts> sweep(std::span<const double> scores, std::span<const Label> labels, std::uint64_t& pos,
                               std::uint64_t& neg, const char* op) {
  require_lengths(scores, labels, op);
  pos = static_cast<std::uint64_t>(std::count(labels.begin(), labels.end(), Label::Fake));
  neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw ContractError(std::string(op) + ": both classes must be present");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<SweepCounts> pts{{0, 0}};
  std::uint64_t fp = 0;
  std::uint64_t tp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == Label::Fake ? tp : fp) += 1;
      ++i;
    }
    pts.push_back({fp, tp});
  }
  return pts;
}

std::string fmt(double v, int precision) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

}  // namespace

ConfusionMatrix confusion(std::span<const double> scores, std::span<const Label> labels, double threshold) {
  require_lengths(scores, labels, "confusion");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted_fake = scores[i] >= threshold;
    if (labels[i] == Label::Fake) {
      (predicted_fake ? cm.tp : cm.fn) += 1;
    } else {
      (predicted_fake ? cm.fp : cm.tn) += 1;
    }
  }
  return cm;
}

double accuracy(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ContractError("accuracy: empty confusion matrix");
  return static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
}

double macro_f1(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ContractError("macro_f1: empty confusion matrix");
  // 2PR/(P+R) reduces to 2tp/(2tp+fp+fn); the count form avoids dividing twice.
  auto f1 = [](std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
    const std::uint64_t den = 2 * tp + fp + fn;
    return tp == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(den);
  };
  return (f1(cm.tp, cm.fp, cm.fn) + f1(cm.tn, cm.fn, cm.fp)) / 2.0;
}

double false_negative_rate(const ConfusionMatrix& cm) {
  const std::uint64_t fakes = cm.tp + cm.fn;
  if (fakes == 0) throw ContractError("false_negative_rate: no fake samples");
  return static_cast<double>(cm.fn) / static_cast<double>(fakes);
}

double auroc(std::span<const double> scores, std::span<const Label> labels) {
  std::uint64_t pos = 0;
  std::uint64_t neg = 0;
  const auto pts = sweep(scores, labels, pos, neg, "auroc");
  // Twice the trapezoid area in count units; exact in integers.
  unsigned __int128 twice_area = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    twice_area += static_cast<unsigned __int128>(pts[i].fp - pts[i - 1].fp) * (pts[i].tp + pts[i - 1].tp);
  }
  return static_cast<double>(twice_area) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const Label> labels) {
  std::uint64_t pos = 0;
  std::uint64_t neg = 0;
  const auto pts = sweep(scores, labels, pos, neg, "roc_curve");
  std::vector<SweepCounts> kept;
  for (const auto& p : pts) {
    if (!kept.empty() && kept.back().fp == p.fp && kept.back().tp == p.tp) continue;
    while (kept.size() >= 2) {
      const auto& a = kept[kept.size() - 2];
      const auto& b = kept.back();
      const auto cross = static_cast<__int128>(b.fp - a.fp) * static_cast<__int128>(p.tp - b.tp) -
                         static_cast<__int128>(b.tp - a.tp) * static_cast<__int128>(p.fp - b.fp);
      if (cross != 0) break;
      kept.pop_back();
    }
    kept.push_back(p);
  }
  std::vector<RocPoint> out;
  out.reserve(kept.size());
  for (const auto& p : kept) {
    out.push_back({static_cast<double>(p.fp) / static_cast<double>(neg), static_cast<double>(p.tp) / static_cast<double>(pos)});
  }
  return out;
}

double trapezoid_area(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  }
  return area;
}

MetricsReport make_report(std::span<const double> scores, std::span<const Label> labels, double loss,
                          double threshold) {
  MetricsReport r;
  r.threshold = threshold;
  r.loss = loss;
  r.confusion = confusion(scores, labels, threshold);
  r.accuracy = accuracy(r.confusion);
  r.f1_macro = macro_f1(r.confusion);
  r.auroc = auroc(scores, labels);
  r.roc_points = roc_curve(scores, labels);
  return r;
}

void write_report(std::ostream& os, const MetricsReport& r) {
  os << "# deitfake metrics report v1\n";
  os << "positive_class: fake\n";
  os << "threshold: " << fmt(r.threshold, 17) << '\n';
  os << "samples: " << r.confusion.total() << '\n';
  os << "loss: " << fmt(r.loss, 17) << '\n';
  os << "accuracy: " << fmt(r.accuracy, 17) << '\n';
  os << "f1_macro: " << fmt(r.f1_macro, 17) << '\n';
  os << "auroc: " << fmt(r.auroc, 17) << '\n';
  os << "confusion:\n";
  os << "  tp: " << r.confusion.tp << '\n';
  os << "  fp: " << r.confusion.fp << '\n';
  os << "  tn: " << r.confusion.tn << '\n';
  os << "  fn: " << r.confusion.fn << '\n';
  os << "roc_points: " << r.roc_points.size() << '\n';
  for (const auto& p : r.roc_points) os << "  " << fmt(p.fpr, 17) << ' ' << fmt(p.tpr, 17) << '\n';
}

MetricsReport read_report(std::istream& is) {
  MetricsReport r;
  std::string line;
  std::size_t lineno = 0;
  std::size_t roc_remaining = 0;
  bool in_confusion = false;
  auto number = [&](const std::string& text) {
    try {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ParseError("bad number '" + text + "'", lineno);
    }
  };
  auto count = [&](const std::string& text) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing");
      return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
      throw ParseError("bad count '" + text + "'", lineno);
    }
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (roc_remaining > 0) {
      std::istringstream ss(line);
      std::string a;
      std::string b;
      if (!(ss >> a >> b)) throw ParseError("expected 'fpr tpr'", lineno);
      r.roc_points.push_back({number(a), number(b)});
      --roc_remaining;
      continue;
    }
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw ParseError("expected 'key: value'", lineno);
    const bool nested = line.rfind("  ", 0) == 0;
    std::string key = line.substr(0, colon);
    key.erase(0, key.find_first_not_of(' '));
    std::string value = line.substr(colon + 1);
    value.erase(0, value.find_first_not_of(' '));
    if (nested && in_confusion) {
      if (key == "tp") r.confusion.tp = count(value);
      else if (key == "fp") r.confusion.fp = count(value);
      else if (key == "tn") r.confusion.tn = count(value);
      else if (key == "fn") r.confusion.fn = count(value);
      else throw ParseError("unknown confusion field '" + key + "'", lineno);
      continue;
    }
    in_confusion = false;
    if (key == "positive_class") {
      if (value != "fake") throw ParseError("unsupported positive class '" + value + "'", lineno);
    } else if (key == "threshold") {
      r.threshold = number(value);
    } else if (key == "samples") {
      count(value);
    } else if (key == "loss") {
      r.loss = number(value);
    } else if (key == "accuracy") {
      r.accuracy = number(value);
    } else if (key == "f1_macro") {
      r.f1_macro = number(value);
    } else if (key == "auroc") {
      r.auroc = number(value);
    } else if (key == "confusion") {
      in_confusion = true;
    } else if (key == "roc_points") {
      roc_remaining = count(value);
    } else {
      throw ParseError("unknown field '" + key + "'", lineno);
    }
  }
  if (roc_remaining != 0) throw ParseError("truncated roc_points block", lineno);
  return r;
}

void write_roc_csv(std::ostream& os, std::span<const RocPoint> points) {
  os << "fpr,tpr\n";
  for (const auto& p : points) os << fmt(p.fpr, 12) << ',' << fmt(p.tpr, 12) << '\n';
}

void emit_report(const MetricsReport& report, const std::filesystem::path& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  const auto report_path = dir / (stem + ".report");
  std::ofstream rep(report_path);
  if (!rep) throw IoError("cannot write " + report_path.string());
  write_report(rep, report);
  const auto roc_path = dir / (stem + "_roc.csv");
  std::ofstream roc(roc_path);
  if (!roc) throw IoError("cannot write " + roc_path.string());
  write_roc_csv(roc, report.roc_points);
  if (!rep || !roc) throw IoError("write failed under " + dir.string());
}

std::string render_stage_comparison(const MetricsReport& s1, const MetricsReport& s2) {
  char buf[128];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-16s %10s %10s\n", "Metric", "Stage-I", "Stage-II");
  out += buf;
  auto row = [&](const char* name, double a, double b) {
    std::snprintf(buf, sizeof buf, "%-16s %10.5f %10.5f\n", name, a, b);
    out += buf;
  };
  row("Test Loss", s1.loss, s2.loss);
  row("Test Accuracy", s1.accuracy, s2.accuracy);
  row("Test F1 Macro", s1.f1_macro, s2.f1_macro);
  row("Test AUROC", s1.auroc, s2.auroc);
  return out;
}

std::string render_ablation_table(std::span<const AblationRow> rows) {
  std::string out =
      "| Test Case | Description | Total Epochs | Affine Transform Used? | Final Accuracy (%) | Final F1 Macro | "
      "Final AUC-ROC |\n|---|---|---|---|---|---|---|\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "| %s | %s | %s | %s | %.2f | %.4f | %.4f |\n", r.test_case.c_str(),
                  r.description.c_str(), r.total_epochs.c_str(), r.affine ? "Yes" : "No", 100.0 * r.metrics.accuracy,
                  r.metrics.f1_macro, r.metrics.auroc);
    out += buf;
  }
  return out;
}

}  // namespace deitfake
