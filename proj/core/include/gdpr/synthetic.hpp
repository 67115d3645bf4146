#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gdpr/active_learning.hpp"
#include "gdpr/classifier.hpp"
#include "gdpr/corpus.hpp"
#include "gdpr/rng.hpp"

// Keyword-planted synthetic policies for tests, benchmarks and the
// programmatic annotation oracle. Every word is a made-up lowercase string
// that survives normalization unchanged.
namespace gdpr::synthetic {

struct Spec {
  int n_classes = 18;
  int keywords_per_class = 3;
  int filler_words = 240;
  int min_filler = 6;
  int max_filler = 12;
  int planted_per_segment = 2;
  // Class-specific topic words make up `topic_share` of the filler, giving
  // the embeddings real co-occurrence structure.
  int topic_words_per_class = 8;
  double topic_share = 0.5;
  // Each pair shares its keyword and topic sets; its classes are told apart
  // only by marker words drawn from a per-class set. Markers are planted
  // together so that they co-occur and get their own embedding cluster.
  std::vector<std::pair<int, int>> confusable_pairs;
  int markers_per_class = 6;
  int markers_per_segment = 2;
  std::uint64_t vocabulary_seed = 7;  // fixes the made-up words
};

// Word lists derived from a Spec. Class codes are 1-based.
class Vocabulary {
 public:
  explicit Vocabulary(const Spec& spec);

  const Spec& spec() const noexcept { return spec_; }
  const std::vector<std::string>& filler() const noexcept { return filler_; }
  const std::vector<std::string>& keywords(int code) const;
  const std::vector<std::string>& topic_words(int code) const;
  const std::vector<std::string>& markers(int code) const;  // empty outside a pair

  // Sentence planted with `code`'s keywords (and a marker for paired classes).
  std::string sentence(int code, Rng& rng) const;

 private:
  Spec spec_;
  std::vector<std::string> filler_;
  std::map<int, std::vector<std::string>> keywords_;
  std::map<int, std::vector<std::string>> topics_;
  std::map<int, std::vector<std::string>> markers_;
};

struct Corpus {
  std::vector<PolicyDocument> documents;
  std::vector<LabeledSegment> labeled;  // every segment with its planted class
  std::map<SegmentRef, int> labels;
};

// `per_class` segments of every class shuffled into documents of
// `segments_per_doc` segments. doc ids are "<prefix>-NNNN".
Corpus make_corpus(const Vocabulary& vocab, int per_class, int segments_per_doc,
                   const std::string& doc_prefix, std::uint64_t seed);
// Same with a count per class, indexed by code - 1.
Corpus make_corpus(const Vocabulary& vocab, const std::vector<int>& per_class,
                   int segments_per_doc, const std::string& doc_prefix, std::uint64_t seed);

// Token lists of every segment, for embedding training.
std::vector<std::vector<std::string>> sentences_of(const Corpus& corpus);

// Small embedding / classifier settings that train in seconds on one core.
EmbeddingConfig small_embedding_config(std::uint64_t seed = 1);
ClassifierConfig small_classifier_config(std::uint64_t seed = 1);

// --- active-learning experiment ----------------------------------------------

// Seed, pool and validation corpora over a vocabulary with confusable pairs,
// plus embeddings trained on all of their text.
struct ExperimentSpec {
  Spec vocabulary;  // defaults add two confusable pairs
  int seed_per_class = 1;
  int pool_per_class = 60;
  int pool_per_paired_class = 60;
  int validation_per_class = 10;
  int segments_per_doc = 6;
  int pool_policies = 30;
  int budget = 10;
  int iterations = 10;
  EmbeddingConfig embedding = small_embedding_config();
  ClassifierConfig classifier = small_classifier_config();

  ExperimentSpec();
};

struct ExperimentData {
  Vocabulary vocab;
  Corpus seed;
  Corpus pool;
  Corpus validation;
  EmbeddingModel embeddings;
};

ExperimentData make_experiment_data(const ExperimentSpec& spec, std::uint64_t seed);

struct ExperimentTrace {
  std::vector<std::size_t> labels;  // labeled segments used; entry 0 is the seed model
  std::vector<double> macro_f1;     // validation macro-F1 after each retrain
  ActiveLearningState state;

  // Fewest labels at which macro_f1 first reaches target.
  std::optional<std::size_t> labels_to_reach(double target) const;
};

// Seed model plus spec.iterations rounds with the planted labels as oracle.
ExperimentTrace run_experiment(const ExperimentSpec& spec, const ExperimentData& data,
                               QueryStrategy strategy, std::uint64_t seed);

}  // namespace gdpr::synthetic
