#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gdpr/annotation.hpp"
#include "gdpr/classifier.hpp"
#include "gdpr/corpus.hpp"
#include "gdpr/embeddings.hpp"
#include "gdpr/nn/metrics.hpp"

namespace gdpr {

struct QueryCandidate {
  SegmentRef segment;
  std::vector<float> probs;  // index i -> code i + 1
  int top1 = 0;              // codes
  int top2 = 0;
  double margin = 0.0;       // P(top1) - P(top2)
  friend bool operator==(const QueryCandidate&, const QueryCandidate&) = default;
};

QueryCandidate make_candidate(const SegmentRef& ref, const Prediction& prediction);

enum class QueryStrategy { Margin, Random };

struct ActiveLearningConfig {
  int pool_policies = 100;
  int budget = 250;
  double discard_threshold = 0.5;
  double epsilon = 0.002;
  int patience = 2;
  int max_iters = 20;
  int n_annotators = 4;
  QueryStrategy strategy = QueryStrategy::Margin;
  // How long run_iteration waits for human labels before IterationStalled.
  std::chrono::milliseconds annotation_timeout{0};
  std::chrono::milliseconds poll_interval{200};
  int threads = 1;
  std::uint64_t seed = 1;

  void validate() const;  // ConfigError
  friend bool operator==(const ActiveLearningConfig&, const ActiveLearningConfig&) = default;
};

std::string_view to_string(QueryStrategy strategy) noexcept;
QueryStrategy parse_query_strategy(std::string_view text);  // ConfigError

struct PoolSample {
  std::vector<std::string> doc_ids;  // sampled documents, sorted
  std::vector<Segment> segments;     // their eligible segments, in (doc_id, seg_id) order
};

// Uniform sample of up to n_policies documents without replacement, drawn
// from documents outside `labeled_docs` that still have a segment outside
// `excluded`. Throws EmptyPool when no such document exists.
PoolSample sample_pool(const std::vector<PolicyDocument>& corpus,
                       const std::set<std::string>& labeled_docs,
                       const std::set<SegmentRef>& excluded, int n_policies, std::uint64_t seed);

// Drops candidates whose top probability is <= discard_threshold, orders the
// rest by ascending margin (ties by segment ref) and keeps the first `budget`.
std::vector<QueryCandidate> select_queries(std::vector<QueryCandidate> candidates, int budget = 250,
                                           double discard_threshold = 0.5);

// Baseline: `budget` candidates chosen uniformly at random, no discarding.
// The result is ordered by segment ref.
std::vector<QueryCandidate> select_random(std::vector<QueryCandidate> candidates, int budget,
                                          std::uint64_t seed);

// True once history has max_iters entries, or when each of the last
// `patience` improvements is below epsilon.
bool should_stop(std::span<const double> val_macro_f1, double epsilon = 0.002, int patience = 2,
                 int max_iters = 20);

struct IterationRecord {
  int iteration = 0;  // 1-based
  std::vector<std::string> policies_sampled;
  std::size_t candidates_scored = 0;
  std::size_t candidates_qualified = 0;  // above the discard threshold
  std::vector<QueryCandidate> queries;
  std::size_t labels_received = 0;       // queries accepted with a requirement label
  std::size_t training_size = 0;
  nn::MetricsReport metrics;             // after retraining, on the held-out set
};

// Everything needed to resume the loop after a restart.
struct ActiveLearningState {
  std::set<SegmentRef> ledger;  // every segment ever queried
  std::optional<IterationRecord> pending;  // issued batch awaiting labels
  std::vector<IterationRecord> history;

  int next_iteration() const noexcept { return static_cast<int>(history.size()) + 1; }
  std::vector<double> macro_f1_history() const;
  std::size_t labels_used(std::size_t seed_size) const;
};

void save_state(const ActiveLearningState& state, const std::filesystem::path& file);
ActiveLearningState load_state(const std::filesystem::path& file);  // ParseError / FormatError

struct ActiveLearningContext {
  const EmbeddingModel& embeddings;
  const std::vector<PolicyDocument>& pool;  // the unlabeled corpus
  std::vector<LabeledSegment> seed_train;   // initial gold data
  std::vector<LabeledSegment> validation;   // fixed held-out set
  std::set<std::string> labeled_docs;       // documents behind seed_train and validation
  ClassifierConfig classifier;
  ActiveLearningConfig al;
};

// Supplies labels for an issued batch by writing them into the store.
using AnnotationDriver = std::function<void(const std::vector<QueryCandidate>&, LabelStore&)>;

// A driver in which `n_annotators` programmatic annotators all give the
// oracle's label, so every query is Accepted.
AnnotationDriver oracle_annotator(std::function<int(const SegmentRef&)> oracle, int n_annotators);

// Step 1: sample the pool, score it with `model`, select and record the
// batch as pending. Queried segments are registered in the store.
const IterationRecord& issue_queries(const CnnClassifier& model, const ActiveLearningContext& ctx,
                                     LabelStore& store, ActiveLearningState& state);

// Every pending query has reached Accepted or Rejected.
bool queries_settled(const LabelStore& store, const ActiveLearningState& state);

struct IterationResult {
  CnnClassifier model;
  IterationRecord record;
};

// Step 2: retrain from scratch on seed_train plus the store's gold data,
// evaluate on the validation set and move the pending record into history.
IterationResult finish_iteration(const ActiveLearningContext& ctx, const LabelStore& store,
                                 ActiveLearningState& state);

// Both steps. A pending batch from an earlier call is resumed instead of
// re-sampled. With a driver, labels are supplied synchronously; otherwise
// this waits up to al.annotation_timeout for them and throws
// IterationStalled, leaving the state resumable.
IterationResult run_iteration(const CnnClassifier& model, const ActiveLearningContext& ctx,
                              LabelStore& store, ActiveLearningState& state,
                              const AnnotationDriver& driver = {});

}  // namespace gdpr
