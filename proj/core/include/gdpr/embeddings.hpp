#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gdpr/nn/tensor.hpp"

namespace gdpr {

struct EmbeddingConfig {
  int dim = 300;
  int n_min = 3;
  int n_max = 6;
  int epochs = 5;
  double learning_rate = 0.05;
  int window = 5;
  int negatives = 5;
  int min_count = 1;
  std::int64_t bucket_count = 2'000'000;
  double subsample_t = 1e-4;
  std::uint64_t seed = 1;
  // 1 = deterministic single-threaded training; >1 = lock-free workers
  // (Hogwild-style, not reproducible).
  int threads = 1;

  // Throws ConfigError when an invariant is violated.
  void validate() const;
  friend bool operator==(const EmbeddingConfig&, const EmbeddingConfig&) = default;
};

// 32-bit FNV-1a; the n-gram bucket of g is fnv1a32(g) % bucket_count.
std::uint32_t fnv1a32(std::string_view text) noexcept;

// Character n-grams of "<word>" with lengths n_min..n_max, shortest first and
// left to right within a length. The full "<word>" is left out (the word row
// represents it) unless it would be the word's only n-gram.
std::vector<std::string> char_ngrams(std::string_view word, int n_min, int n_max);

struct VocabEntry {
  std::string word;
  std::int64_t count = 0;
  friend bool operator==(const VocabEntry&, const VocabEntry&) = default;
};

// Subword skip-gram model. input_vectors has one row per vocabulary word
// followed by bucket_count n-gram rows; output_vectors has one row per word.
// Immutable once built and safe to share across threads.
class EmbeddingModel {
 public:
  EmbeddingModel(EmbeddingConfig config, std::vector<VocabEntry> vocab,
                 nn::Matrix<float> input_vectors, nn::Matrix<float> output_vectors);

  const EmbeddingConfig& config() const noexcept { return config_; }
  const std::vector<VocabEntry>& vocab() const noexcept { return vocab_; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(config_.dim); }
  std::optional<std::size_t> word_index(std::string_view word) const;

  // Input rows averaged to represent `word`: its own row when in vocabulary,
  // then one bucket row per character n-gram.
  std::vector<std::size_t> subword_rows(std::string_view word) const;

  // Mean of the word's subword rows; out-of-vocabulary words use their
  // n-gram rows alone. Pure function of (model, word).
  std::vector<float> word_vector(std::string_view word) const;
  void word_vector_into(std::string_view word, std::span<float> out) const;

  const nn::Matrix<float>& input_vectors() const noexcept { return input_; }
  const nn::Matrix<float>& output_vectors() const noexcept { return output_; }

  // SHA-256 (hex) over vocabulary and both matrices. Computed once.
  const std::string& checksum() const;

  friend bool operator==(const EmbeddingModel& a, const EmbeddingModel& b) {
    return a.config_ == b.config_ && a.vocab_ == b.vocab_ && a.input_ == b.input_ &&
           a.output_ == b.output_;
  }

 private:
  struct ChecksumCache;

  EmbeddingConfig config_;
  std::vector<VocabEntry> vocab_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> vocab_rows_;
  nn::Matrix<float> input_;
  nn::Matrix<float> output_;
  std::shared_ptr<ChecksumCache> checksum_;
};

struct EmbeddingTraining {
  EmbeddingModel model;
  std::vector<double> epoch_loss;  // mean negative-sampling loss per epoch
};

// Skip-gram with negative sampling over subword-composed input vectors.
// Throws EmptyCorpus when no tokens are supplied and EmptyVocab when
// min_count filtering removes every word.
EmbeddingTraining train_skipgram(const std::vector<std::vector<std::string>>& sentences,
                                 const EmbeddingConfig& config);

struct Neighbor {
  std::string word;
  double cosine = 0.0;
};

// The k vocabulary words most cosine-similar to word_vector(word), excluding
// the word itself; ties go to the lower vocabulary index.
std::vector<Neighbor> nearest_neighbors(const EmbeddingModel& model, std::string_view word,
                                        std::size_t k);

double cosine_similarity(std::span<const float> a, std::span<const float> b);

// Model directory: manifest.json + input.f32 + output.f32 (little-endian,
// row-major). Loading throws FormatError on version, size or checksum mismatch.
inline constexpr int kEmbeddingFormatVersion = 1;
void save_embeddings(const EmbeddingModel& model, const std::filesystem::path& dir);
EmbeddingModel load_embeddings(const std::filesystem::path& dir);

// --- single-example objective --------------------------------------------------

// One (center, context, negatives) training example. input_rows are the
// center word's subword rows; target and negatives index output rows.
struct SkipgramExample {
  std::vector<std::size_t> input_rows;
  std::size_t target = 0;
  std::vector<std::size_t> negatives;
};

namespace skipgram {

inline double log_sigmoid(double x) noexcept {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}
inline double sigmoid(double x) noexcept {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// h = mean of input rows;
// loss = -log s(u_target . h) - sum_n log s(-u_n . h).
template <typename T>
double loss(const nn::Matrix<T>& input, const nn::Matrix<T>& output, const SkipgramExample& ex) {
  const std::size_t dim = input.cols();
  std::vector<double> hidden(dim, 0.0);
  for (const auto r : ex.input_rows) {
    for (std::size_t d = 0; d < dim; ++d) hidden[d] += input(r, d);
  }
  for (auto& h : hidden) h /= static_cast<double>(ex.input_rows.size());
  auto score = [&](std::size_t o) { return nn::dot(output.row(o).data(), hidden.data(), dim); };
  double total = -log_sigmoid(score(ex.target));
  for (const auto n : ex.negatives) total -= log_sigmoid(-score(n));
  return total;
}

// Loss plus its exact gradient, accumulated into grad_input / grad_output
// (same shapes as input / output).
template <typename T>
double loss_and_gradient(const nn::Matrix<T>& input, const nn::Matrix<T>& output,
                         const SkipgramExample& ex, nn::Matrix<T>& grad_input,
                         nn::Matrix<T>& grad_output) {
  const std::size_t dim = input.cols();
  const double inv_n = 1.0 / static_cast<double>(ex.input_rows.size());
  std::vector<double> hidden(dim, 0.0);
  for (const auto r : ex.input_rows) {
    for (std::size_t d = 0; d < dim; ++d) hidden[d] += input(r, d);
  }
  for (auto& h : hidden) h *= inv_n;

  std::vector<double> grad_hidden(dim, 0.0);
  double total = 0.0;
  auto visit = [&](std::size_t o, double label) {
    const double s = nn::dot(output.row(o).data(), hidden.data(), dim);
    total -= log_sigmoid(label > 0 ? s : -s);
    const double g = sigmoid(s) - label;  // dL/ds
    for (std::size_t d = 0; d < dim; ++d) {
      grad_hidden[d] += g * output(o, d);
      grad_output(o, d) += static_cast<T>(g * hidden[d]);
    }
  };
  visit(ex.target, 1.0);
  for (const auto n : ex.negatives) visit(n, 0.0);
  for (const auto r : ex.input_rows) {
    for (std::size_t d = 0; d < dim; ++d) grad_input(r, d) += static_cast<T>(grad_hidden[d] * inv_n);
  }
  return total;
}

// One SGD step, applied in place, with the reference skip-gram trainer's
// update rule: output rows follow the gradient above as they are visited, and
// every input row receives the full hidden-vector gradient (the gradient
// above times the number of rows). Returns the example's loss before the
// update.
double sgd_step(nn::Matrix<float>& input, nn::Matrix<float>& output, const SkipgramExample& ex,
                double learning_rate);

}  // namespace skipgram

}  // namespace gdpr
