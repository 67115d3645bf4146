#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace gdpr::nn {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // number of gold instances
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
};

// Per-class precision/recall/F1 (0 when undefined), their unweighted macro
// means, and exact-match accuracy. Class ids must lie in [0, n_classes).
MetricsReport compute_metrics(const std::vector<int>& predictions, const std::vector<int>& golds,
                              int n_classes = 18);

// Fixed-width table: one row per class ("Prec. Recall F1 Support") followed by
// an "Average" row. class_names[i] labels row i; missing names fall back to
// the class index.
std::string format_report_table(const MetricsReport& report,
                                const std::vector<std::string>& class_names);

// CSV with header "class,precision,recall,f1,support" and a final "average" row.
std::string format_report_csv(const MetricsReport& report,
                              const std::vector<std::string>& class_names);

}  // namespace gdpr::nn
