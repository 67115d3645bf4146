#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gdpr/cnn.hpp"
#include "gdpr/corpus.hpp"
#include "gdpr/embeddings.hpp"
#include "gdpr/nn/metrics.hpp"
#include "gdpr/nn/tensor.hpp"
#include "gdpr/rng.hpp"

namespace gdpr {

struct ClassifierConfig {
  int n_filters = 400;
  int kernel_size = 4;
  int fc_units = 256;
  int n_classes = 18;
  double dropout_conv = 0.1;
  double dropout_fc = 0.5;
  int max_len = 128;
  int epochs = 50;
  double learning_rate = 0.001;
  int batch_size = 32;
  std::uint64_t seed = 1;

  void validate() const;  // ConfigError
  DropoutRates dropout() const noexcept { return {dropout_conv, dropout_fc}; }
  friend bool operator==(const ClassifierConfig&, const ClassifierConfig&) = default;
};

// Output class i corresponds to requirement code i + 1.
class CnnClassifier {
 public:
  CnnClassifier(ClassifierConfig config, std::string embedding_checksum, std::size_t embedding_dim,
                CnnParams<float> params);

  // Glorot-uniform weights, zero biases, drawn from config.seed.
  static CnnClassifier initialize(const ClassifierConfig& config,
                                  const EmbeddingModel& embeddings);

  const ClassifierConfig& config() const noexcept { return config_; }
  const std::string& embedding_checksum() const noexcept { return embedding_checksum_; }
  std::size_t embedding_dim() const noexcept { return embedding_dim_; }
  const CnnParams<float>& params() const noexcept { return params_; }
  CnnParams<float>& mutable_params() noexcept { return params_; }

  // Class probabilities for an encoded segment (max_len x dim). Eval mode
  // ignores rng and is deterministic.
  std::vector<float> forward(const nn::Tensor2& encoded, bool train_mode, Rng& rng) const;

  friend bool operator==(const CnnClassifier&, const CnnClassifier&) = default;

 private:
  ClassifierConfig config_;
  std::string embedding_checksum_;
  std::size_t embedding_dim_ = 0;
  CnnParams<float> params_;
};

// Row t holds word_vector(tokens[t]) for t < min(|tokens|, max_len); the
// remaining rows are zero.
nn::Tensor2 encode_segment(const EmbeddingModel& embeddings, std::span<const std::string> tokens,
                           std::size_t max_len);

struct LabeledSegment {
  Segment segment;
  int label = 0;  // requirement code 1..18
};

struct EpochStats {
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_macro_f1;
};
using TrainHistory = std::vector<EpochStats>;

struct TrainResult {
  CnnClassifier model;
  TrainHistory history;
};

// Mini-batch Adam on cross-entropy; embeddings stay frozen. Deterministic for
// a fixed config.seed. Throws EmptyDataset / InvalidLabel.
TrainResult train_classifier(const std::vector<LabeledSegment>& train,
                             const std::vector<LabeledSegment>& validation,
                             const EmbeddingModel& embeddings, const ClassifierConfig& config);

struct Prediction {
  std::vector<float> probs;  // index i -> code i + 1
  int top_class = 0;         // code
  int second_class = 0;      // code
  double margin = 0.0;       // P(top) - P(second)
};

// Top-two selection over a probability vector; ties go to the lowest code.
Prediction prediction_from_probs(std::vector<float> probs);

// Throws ModelMismatch if the embeddings differ from those used in training.
Prediction predict(const CnnClassifier& model, const EmbeddingModel& embeddings,
                   std::span<const std::string> tokens);
inline Prediction predict(const CnnClassifier& model, const EmbeddingModel& embeddings,
                          const Segment& segment) {
  return predict(model, embeddings, std::span<const std::string>(segment.tokens));
}

// Predictions for many segments, fanned out over `threads` workers. Order
// follows the input.
std::vector<Prediction> predict_all(const CnnClassifier& model, const EmbeddingModel& embeddings,
                                    const std::vector<Segment>& segments, int threads = 1);

// Throws EmptyDataset on an empty test set.
nn::MetricsReport evaluate(const CnnClassifier& model, const EmbeddingModel& embeddings,
                           const std::vector<LabeledSegment>& test, int threads = 1);

// Requirement names in code order, for report tables.
std::vector<std::string> requirement_class_names();

struct DatasetSplit {
  std::vector<LabeledSegment> train;
  std::vector<LabeledSegment> test;
  std::vector<std::string> train_docs;  // sorted
  std::vector<std::string> test_docs;   // sorted
};

// Partitions documents (not segments): floor(ratio * n) documents train, the
// rest test, chosen by a seeded shuffle. Throws CannotSplit below 2 documents.
DatasetSplit split_by_document(const std::vector<LabeledSegment>& segments, double ratio = 0.8,
                               std::uint64_t seed = 1);

// Model directory: manifest.json + weights.f32 (little-endian float32, tensors
// concatenated in the order listed by the manifest).
inline constexpr int kClassifierFormatVersion = 1;
void save_model(const CnnClassifier& model, const std::filesystem::path& dir);
CnnClassifier load_model(const std::filesystem::path& dir);

}  // namespace gdpr
