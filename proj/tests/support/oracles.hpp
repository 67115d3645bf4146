#pragma once

// Brute-force reference implementations shared by the unit tests and the
// acceptance binary. Written independently of the library code they check.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <map>
#include <vector>

#include "gdpr/active_learning.hpp"
#include "gdpr/annotation.hpp"
#include "gdpr/nn/metrics.hpp"

namespace gdpr::oracle {

// Full confusion matrix, then every metric from its rows and columns.
inline nn::MetricsReport metrics(const std::vector<int>& pred, const std::vector<int>& gold,
                                 int n_classes) {
  std::vector<std::vector<long>> cm(n_classes, std::vector<long>(n_classes, 0));
  for (std::size_t i = 0; i < gold.size(); ++i) ++cm[gold[i]][pred[i]];
  nn::MetricsReport r;
  long diag = 0;
  for (int c = 0; c < n_classes; ++c) {
    long row = 0, col = 0;
    for (int k = 0; k < n_classes; ++k) {
      row += cm[c][k];
      col += cm[k][c];
    }
    diag += cm[c][c];
    nn::ClassMetrics m;
    m.support = static_cast<std::size_t>(row);
    m.precision = col == 0 ? 0.0 : double(cm[c][c]) / double(col);
    m.recall = row == 0 ? 0.0 : double(cm[c][c]) / double(row);
    m.f1 = (m.precision + m.recall) == 0 ? 0.0
                                          : 2 * m.precision * m.recall / (m.precision + m.recall);
    r.per_class.push_back(m);
  }
  for (const auto& m : r.per_class) {
    r.macro_precision += m.precision / n_classes;
    r.macro_recall += m.recall / n_classes;
    r.macro_f1 += m.f1 / n_classes;
  }
  r.accuracy = gold.empty() ? 0.0 : double(diag) / double(gold.size());
  return r;
}

inline bool metrics_equal(const nn::MetricsReport& a, const nn::MetricsReport& b, double tol = 1e-12) {
  auto close = [&](double x, double y) { return std::abs(x - y) <= tol; };
  if (a.per_class.size() != b.per_class.size()) return false;
  for (std::size_t i = 0; i < a.per_class.size(); ++i) {
    const auto &x = a.per_class[i], &y = b.per_class[i];
    if (x.support != y.support || !close(x.precision, y.precision) || !close(x.recall, y.recall) ||
        !close(x.f1, y.f1)) {
      return false;
    }
  }
  return close(a.macro_precision, b.macro_precision) && close(a.macro_recall, b.macro_recall) &&
         close(a.macro_f1, b.macro_f1) && close(a.accuracy, b.accuracy);
}

// Filter on the max probability, full sort by (margin, ref), take a prefix.
inline std::vector<QueryCandidate> select_queries(const std::vector<QueryCandidate>& all,
                                                  int budget, double threshold) {
  std::vector<QueryCandidate> kept;
  for (const auto& c : all) {
    const float top = *std::max_element(c.probs.begin(), c.probs.end());
    if (top > threshold) kept.push_back(c);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.margin != b.margin) return a.margin < b.margin;
    return a.segment < b.segment;
  });
  if (static_cast<int>(kept.size()) > budget) kept.resize(static_cast<std::size_t>(std::max(budget, 0)));
  return kept;
}

struct Decision {
  ConsolidationStatus status;
  std::optional<int> gold;
  double agreement;
};

// Count labels, find the most frequent one, and compare its share with the
// fixed 3-of-4 / 2-of-4 rule.
inline Decision consolidate4(const std::array<int, 4>& labels) {
  std::map<int, int> freq;
  for (const int l : labels) ++freq[l];
  int best = 0, best_label = -1;
  for (const auto& [label, n] : freq) {
    if (n > best) {
      best = n;
      best_label = label;
    }
  }
  const double agreement = best / 4.0;
  if (best >= 3) return {ConsolidationStatus::Accepted, best_label, agreement};
  if (best == 2) return {ConsolidationStatus::Discuss, std::nullopt, agreement};
  return {ConsolidationStatus::Rejected, std::nullopt, agreement};
}

}  // namespace gdpr::oracle
