#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gdpr/classifier.hpp"
#include "gdpr/corpus.hpp"
#include "gdpr/embeddings.hpp"
#include "gdpr/labels.hpp"

namespace gdpr {

struct Evidence {
  int seg_id = 0;
  double probability = 0.0;
  friend bool operator==(const Evidence&, const Evidence&) = default;
};

// Which requirements a policy discloses. Index i is code i + 1.
struct ComplianceVector {
  std::string doc_id;
  std::array<bool, kNumRequirements> covered{};
  // Segments predicted as the requirement above tau, most probable first.
  std::array<std::vector<Evidence>, kNumRequirements> evidence;

  int count() const noexcept;
  friend bool operator==(const ComplianceVector&, const ComplianceVector&) = default;
};

// Requirement c is covered iff some segment's top class is c with P(c) > tau.
// predictions[i] belongs to segments[i]. Throws EmptyPolicy on no segments,
// ShapeError on a length mismatch.
ComplianceVector compliance_from_predictions(const std::string& doc_id,
                                             std::span<const Segment> segments,
                                             std::span<const Prediction> predictions,
                                             double tau = 0.5);

ComplianceVector measure_policy(const CnnClassifier& model, const EmbeddingModel& embeddings,
                                const PolicyDocument& policy, double tau = 0.5, int threads = 1);

// Every policy with at least one segment, in input order; empty policies are
// skipped.
std::vector<ComplianceVector> measure_corpus(const CnnClassifier& model,
                                             const EmbeddingModel& embeddings,
                                             const std::vector<PolicyDocument>& corpus,
                                             double tau = 0.5, int threads = 1);

struct ComplianceSummary {
  std::size_t n_policies = 0;
  std::array<std::size_t, kNumRequirements> counts{};
  std::array<double, kNumRequirements> fractions{};
  std::array<std::size_t, kNumRequirements + 1> histogram{};  // policies by #covered
  double full_compliance = 0.0;                               // histogram[18] / n
  friend bool operator==(const ComplianceSummary&, const ComplianceSummary&) = default;
};

// Throws EmptyDataset on an empty list.
ComplianceSummary aggregate(std::span<const ComplianceVector> vectors);

enum class ReportFormat { Csv, Json, All };
ReportFormat parse_report_format(std::string_view text);  // ConfigError

// report_policies.csv, report_summary.csv and/or report.json in `dir`, with
// requirement columns in code order. Throws IoError.
void export_report(const ComplianceSummary& summary, std::span<const ComplianceVector> vectors,
                   const std::filesystem::path& dir, ReportFormat format = ReportFormat::All);

// The report.json document.
std::string report_json(const ComplianceSummary& summary,
                        std::span<const ComplianceVector> vectors);

// One vector per line, evidence included.
void save_compliance(std::span<const ComplianceVector> vectors, const std::filesystem::path& file);
std::vector<ComplianceVector> load_compliance(const std::filesystem::path& file);  // ParseError

}  // namespace gdpr
