#include "gdpr/nn/metrics.hpp"

#include <cstdio>
#include <sstream>

#include "gdpr/errors.hpp"

namespace gdpr::nn {

MetricsReport compute_metrics(const std::vector<int>& predictions, const std::vector<int>& golds,
                              int n_classes) {
  if (predictions.size() != golds.size()) {
    throw ShapeError("compute_metrics: " + std::to_string(predictions.size()) +
                     " predictions vs " + std::to_string(golds.size()) + " golds");
  }
  if (n_classes <= 0) throw ShapeError("compute_metrics: n_classes must be positive");
  const auto n = static_cast<std::size_t>(n_classes);
  std::vector<std::size_t> tp(n, 0), fp(n, 0), fn(n, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const int p = predictions[i];
    const int g = golds[i];
    if (p < 0 || p >= n_classes || g < 0 || g >= n_classes) {
      throw IndexError("compute_metrics: class id out of range at position " + std::to_string(i));
    }
    if (p == g) {
      ++tp[static_cast<std::size_t>(g)];
      ++correct;
    } else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(g)];
    }
  }

  MetricsReport report;
  report.per_class.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    auto& m = report.per_class[c];
    m.support = tp[c] + fn[c];
    const auto predicted = tp[c] + fp[c];
    m.precision = predicted ? static_cast<double>(tp[c]) / static_cast<double>(predicted) : 0.0;
    m.recall = m.support ? static_cast<double>(tp[c]) / static_cast<double>(m.support) : 0.0;
    const double denom = m.precision + m.recall;
    m.f1 = denom > 0.0 ? 2.0 * m.precision * m.recall / denom : 0.0;
    report.macro_precision += m.precision;
    report.macro_recall += m.recall;
    report.macro_f1 += m.f1;
  }
  report.macro_precision /= static_cast<double>(n);
  report.macro_recall /= static_cast<double>(n);
  report.macro_f1 /= static_cast<double>(n);
  report.accuracy = golds.empty() ? 0.0
                                  : static_cast<double>(correct) / static_cast<double>(golds.size());
  return report;
}

namespace {

std::string name_of(const std::vector<std::string>& names, std::size_t i) {
  return i < names.size() ? names[i] : std::to_string(i);
}

}  // namespace

std::string format_report_table(const MetricsReport& report,
                                const std::vector<std::string>& class_names) {
  std::size_t width = 7;  // "Classes"
  for (std::size_t i = 0; i < report.per_class.size(); ++i) {
    width = std::max(width, name_of(class_names, i).size());
  }
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s  %6s  %6s  %6s  %7s\n", static_cast<int>(width),
                "Classes", "Prec.", "Recall", "F1", "Support");
  out << line;
  for (std::size_t i = 0; i < report.per_class.size(); ++i) {
    const auto& m = report.per_class[i];
    std::snprintf(line, sizeof line, "%-*s  %6.2f  %6.2f  %6.2f  %7zu\n", static_cast<int>(width),
                  name_of(class_names, i).c_str(), m.precision, m.recall, m.f1, m.support);
    out << line;
  }
  std::snprintf(line, sizeof line, "%-*s  %6.2f  %6.2f  %6.2f\n", static_cast<int>(width),
                "Average", report.macro_precision, report.macro_recall, report.macro_f1);
  out << line;
  std::snprintf(line, sizeof line, "Accuracy: %.4f\n", report.accuracy);
  out << line;
  return out.str();
}

std::string format_report_csv(const MetricsReport& report,
                              const std::vector<std::string>& class_names) {
  std::ostringstream out;
  out << "class,precision,recall,f1,support\n";
  char line[256];
  for (std::size_t i = 0; i < report.per_class.size(); ++i) {
    const auto& m = report.per_class[i];
    std::string name = name_of(class_names, i);
    if (name.find_first_of(",\"") != std::string::npos) name = "\"" + name + "\"";
    std::snprintf(line, sizeof line, "%s,%.6f,%.6f,%.6f,%zu\n", name.c_str(), m.precision,
                  m.recall, m.f1, m.support);
    out << line;
  }
  std::snprintf(line, sizeof line, "average,%.6f,%.6f,%.6f,\n", report.macro_precision,
                report.macro_recall, report.macro_f1);
  out << line;
  return out.str();
}

}  // namespace gdpr::nn
