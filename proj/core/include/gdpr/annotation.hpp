#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gdpr/classifier.hpp"
#include "gdpr/corpus.hpp"

namespace gdpr {

enum class ConsolidationStatus { Accepted, Discuss, Rejected };

std::string_view to_string(ConsolidationStatus status) noexcept;
ConsolidationStatus parse_consolidation_status(std::string_view text);  // FormatError

struct AnnotationRecord {
  SegmentRef segment;
  std::string annotator_id;
  int label = 0;  // 0..18, 0 = Other
  Timestamp submitted_at{};
  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

struct ConsolidationResult {
  SegmentRef segment;
  ConsolidationStatus status = ConsolidationStatus::Rejected;
  std::optional<int> gold_label;  // present iff Accepted
  double agreement = 0.0;         // max label frequency / annotators
  std::optional<std::string> resolved_by;  // set by resolve_discussion
  std::optional<Timestamp> resolved_at;
  friend bool operator==(const ConsolidationResult&, const ConsolidationResult&) = default;
};

// Inclusive agreement thresholds.
struct ConsolidationPolicy {
  double accept = 0.75;
  double discuss = 0.5;
};

// Decides one segment from its annotators' labels. Depends only on the
// highest label frequency; a tie at the top can never be accepted.
// Throws ArityError unless labels.size() == n_annotators, InvalidLabel on a
// code outside 0..18.
ConsolidationResult consolidate(std::span<const int> labels, int n_annotators = 4,
                                const ConsolidationPolicy& policy = {});

struct Resolution {
  std::optional<int> label;  // nullopt = reject
  static Resolution accept(int code) { return {code}; }
  static Resolution reject() { return {std::nullopt}; }
};

// Per-(segment, annotator) live labels with an append-only audit trail and
// the consolidation state of each segment. Thread-safe: many readers, one
// writer at a time.
class LabelStore {
 public:
  explicit LabelStore(int n_annotators = 4, ConsolidationPolicy policy = {});

  int n_annotators() const noexcept { return n_annotators_; }

  void add_segment(const Segment& segment);
  void add_documents(const std::vector<PolicyDocument>& documents);
  bool has_segment(const SegmentRef& ref) const;
  Segment segment(const SegmentRef& ref) const;  // NotFound

  // Supersedes the annotator's previous label. Consolidates automatically
  // once n_annotators live labels exist, unless a discussion outcome has
  // already been recorded. Throws NotFound / InvalidLabel.
  AnnotationRecord record_label(const SegmentRef& ref, const std::string& annotator_id, int label,
                                Timestamp at = now_seconds());

  std::optional<AnnotationRecord> live_label(const SegmentRef& ref,
                                             const std::string& annotator_id) const;
  std::vector<AnnotationRecord> live_labels(const SegmentRef& ref) const;  // by annotator id
  // Every submission for the segment in arrival order.
  std::vector<AnnotationRecord> audit_log(const SegmentRef& ref) const;
  std::vector<AnnotationRecord> audit_log(const SegmentRef& ref,
                                          const std::string& annotator_id) const;

  std::optional<ConsolidationResult> consolidation(const SegmentRef& ref) const;
  std::vector<ConsolidationResult> consolidations() const;  // ordered by segment

  // Records a human decision for a segment in Discuss. Throws StateError for
  // any other state and InvalidLabel for a bad code.
  ConsolidationResult resolve_discussion(const SegmentRef& ref, const Resolution& outcome,
                                         const std::string& resolver,
                                         Timestamp at = now_seconds());

  // Accepted segments whose gold label is a requirement (never Other).
  std::vector<LabeledSegment> gold_dataset() const;

  // labels.jsonl (full audit trail, replayed on load) + consolidations.jsonl.
  void save(const std::filesystem::path& dir) const;
  // Segments must be registered before loading. Throws ParseError / NotFound.
  void load(const std::filesystem::path& dir);

 private:
  struct SegmentState {
    Segment segment;
    std::map<std::string, AnnotationRecord> live;
    std::vector<AnnotationRecord> audit;
    std::optional<ConsolidationResult> result;
  };

  SegmentState& state_for(const SegmentRef& ref);
  const SegmentState& state_for(const SegmentRef& ref) const;
  void apply_label(SegmentState& state, const AnnotationRecord& record);

  int n_annotators_;
  ConsolidationPolicy policy_;
  mutable std::shared_mutex mutex_;
  std::map<SegmentRef, SegmentState> segments_;
  std::vector<AnnotationRecord> journal_;  // every submission in arrival order
};

// gold.jsonl: one {"doc_id","seg_id","label_code"} object per line.
void save_gold(const std::vector<LabeledSegment>& gold, const std::filesystem::path& file);
// Resolves every line against `corpus`. Lines labeled Other are skipped.
// Throws ParseError (with the offending line) on malformed lines, unknown
// segments and codes outside 0..18.
std::vector<LabeledSegment> load_gold(const std::filesystem::path& file,
                                      const std::vector<PolicyDocument>& corpus);

}  // namespace gdpr
