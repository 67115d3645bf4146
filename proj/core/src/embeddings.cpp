#include "gdpr/embeddings.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <numeric>
#include <thread>

#include "gdpr/errors.hpp"
#include "gdpr/rng.hpp"
#include "internal/binary_io.hpp"
#include "internal/digest.hpp"
#include "json.hpp"

namespace gdpr {

using nlohmann::ordered_json;

void EmbeddingConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("embedding config: " + what); };
  if (dim <= 0) fail("dim must be positive");
  if (n_min < 1 || n_min > n_max) fail("require 1 <= n_min <= n_max");
  if (epochs < 0) fail("epochs must be non-negative");
  if (!(learning_rate > 0)) fail("learning_rate must be positive");
  if (window < 1) fail("window must be >= 1");
  if (negatives < 0) fail("negatives must be non-negative");
  if (min_count < 1) fail("min_count must be >= 1");
  if (bucket_count < 1) fail("bucket_count must be >= 1");
  if (!(subsample_t > 0)) fail("subsample_t must be positive");
  if (threads < 1) fail("threads must be >= 1");
}

std::uint32_t fnv1a32(std::string_view text) noexcept {
  std::uint32_t h = 2166136261u;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 16777619u;
  }
  return h;
}

std::vector<std::string> char_ngrams(std::string_view word, int n_min, int n_max) {
  std::vector<std::string> out;
  if (word.empty() || n_min < 1 || n_max < n_min) return out;
  const std::string wrapped = "<" + std::string(word) + ">";
  const auto len = wrapped.size();
  for (auto n = static_cast<std::size_t>(n_min); n <= static_cast<std::size_t>(n_max) && n <= len; ++n) {
    for (std::size_t i = 0; i + n <= len; ++i) {
      if (n == len) continue;  // the whole wrapped word
      out.push_back(wrapped.substr(i, n));
    }
  }
  if (out.empty() && len >= static_cast<std::size_t>(n_min) && len <= static_cast<std::size_t>(n_max)) {
    out.push_back(wrapped);
  }
  return out;
}

namespace {

void append_ngram_rows(std::string_view word, std::size_t n_words, const EmbeddingConfig& config,
                       std::vector<std::size_t>& rows) {
  const auto buckets = static_cast<std::uint64_t>(config.bucket_count);
  for (const auto& gram : char_ngrams(word, config.n_min, config.n_max)) {
    rows.push_back(n_words + static_cast<std::size_t>(fnv1a32(gram) % buckets));
  }
}

}  // namespace

// --- model ---------------------------------------------------------------------

struct EmbeddingModel::ChecksumCache {
  std::once_flag once;
  std::string value;
};

EmbeddingModel::EmbeddingModel(EmbeddingConfig config, std::vector<VocabEntry> vocab,
                               nn::Matrix<float> input_vectors, nn::Matrix<float> output_vectors)
    : config_(config),
      vocab_(std::move(vocab)),
      input_(std::move(input_vectors)),
      output_(std::move(output_vectors)),
      checksum_(std::make_shared<ChecksumCache>()) {
  config_.validate();
  const auto n_words = vocab_.size();
  if (input_.cols() != dim() || output_.cols() != dim()) {
    throw ShapeError("embedding matrices must have dim columns");
  }
  if (input_.rows() != n_words + static_cast<std::size_t>(config_.bucket_count) ||
      output_.rows() != n_words) {
    throw ShapeError("embedding matrix rows inconsistent with vocabulary and bucket count");
  }
  index_.reserve(n_words);
  for (std::size_t i = 0; i < n_words; ++i) {
    if (!index_.emplace(vocab_[i].word, i).second) {
      throw FormatError("duplicate vocabulary word '" + vocab_[i].word + "'");
    }
  }
  vocab_rows_.reserve(n_words);
  for (const auto& entry : vocab_) vocab_rows_.push_back(subword_rows(entry.word));
}

std::optional<std::size_t> EmbeddingModel::word_index(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> EmbeddingModel::subword_rows(std::string_view word) const {
  std::vector<std::size_t> rows;
  if (const auto idx = word_index(word)) {
    if (*idx < vocab_rows_.size()) return vocab_rows_[*idx];
    rows.push_back(*idx);
  }
  append_ngram_rows(word, vocab_.size(), config_, rows);
  return rows;
}

void EmbeddingModel::word_vector_into(std::string_view word, std::span<float> out) const {
  if (out.size() != dim()) throw ShapeError("word_vector_into: output length != dim");
  std::vector<std::size_t> scratch;
  const std::vector<std::size_t>* rows = nullptr;
  if (const auto idx = word_index(word)) {
    rows = &vocab_rows_[*idx];
  } else {
    scratch = subword_rows(word);
    rows = &scratch;
  }
  std::vector<double> acc(dim(), 0.0);
  for (const auto r : *rows) {
    const auto row = input_.row(r);
    for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += row[d];
  }
  const double scale = rows->empty() ? 0.0 : 1.0 / static_cast<double>(rows->size());
  for (std::size_t d = 0; d < acc.size(); ++d) out[d] = static_cast<float>(acc[d] * scale);
}

std::vector<float> EmbeddingModel::word_vector(std::string_view word) const {
  std::vector<float> out(dim());
  word_vector_into(word, out);
  return out;
}

const std::string& EmbeddingModel::checksum() const {
  std::call_once(checksum_->once, [this] {
    internal::Sha256 h;
    h.update("gdpr-embeddings-v1\n");
    for (const auto& e : vocab_) h.update(e.word + "\t" + std::to_string(e.count) + "\n");
    h.update(input_.flat());
    h.update(output_.flat());
    checksum_->value = h.hex_digest();
  });
  return checksum_->value;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  const double ab = nn::dot(a.data(), b.data(), a.size());
  const double aa = nn::dot(a.data(), a.data(), a.size());
  const double bb = nn::dot(b.data(), b.data(), b.size());
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

std::vector<Neighbor> nearest_neighbors(const EmbeddingModel& model, std::string_view word,
                                        std::size_t k) {
  if (k < 1) throw ShapeError("nearest_neighbors: k must be >= 1");
  const auto query = model.word_vector(word);
  const auto& vocab = model.vocab();
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(vocab.size());
  std::vector<float> v(model.dim());
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (vocab[i].word == word) continue;
    model.word_vector_into(vocab[i].word, v);
    scored.emplace_back(cosine_similarity(query, v), i);
  }
  const auto take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                    [](const auto& a, const auto& b) {
                      return a.first != b.first ? a.first > b.first : a.second < b.second;
                    });
  std::vector<Neighbor> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back({vocab[scored[i].second].word, scored[i].first});
  return out;
}

// --- training --------------------------------------------------------------------

namespace skipgram {

namespace {

// Relaxed atomic access for the multi-worker mode; plain access otherwise.
template <bool Shared>
struct Access {
  static float load(const float& x) noexcept {
    if constexpr (Shared) {
      return std::atomic_ref<float>(const_cast<float&>(x)).load(std::memory_order_relaxed);
    } else {
      return x;
    }
  }
  static void add(float& x, double delta) noexcept {
    if constexpr (Shared) {
      std::atomic_ref<float> ref(x);
      ref.store(static_cast<float>(ref.load(std::memory_order_relaxed) + delta),
                std::memory_order_relaxed);
    } else {
      x = static_cast<float>(x + delta);
    }
  }
};

template <bool Shared>
double sgd_step_impl(nn::Matrix<float>& input, nn::Matrix<float>& output,
                     std::span<const std::size_t> input_rows, std::size_t target,
                     std::span<const std::size_t> negatives, double lr, std::vector<double>& hidden,
                     std::vector<double>& grad_hidden) {
  using A = Access<Shared>;
  const std::size_t dim = input.cols();
  const double inv_n = 1.0 / static_cast<double>(input_rows.size());
  std::fill(hidden.begin(), hidden.end(), 0.0);
  std::fill(grad_hidden.begin(), grad_hidden.end(), 0.0);
  for (const auto r : input_rows) {
    const float* row = input.row(r).data();
    for (std::size_t d = 0; d < dim; ++d) hidden[d] += A::load(row[d]);
  }
  for (auto& h : hidden) h *= inv_n;

  double total = 0.0;
  auto visit = [&](std::size_t o, double label) {
    float* out_row = output.row(o).data();
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d) s += static_cast<double>(A::load(out_row[d])) * hidden[d];
    total -= log_sigmoid(label > 0 ? s : -s);
    const double g = sigmoid(s) - label;
    for (std::size_t d = 0; d < dim; ++d) {
      grad_hidden[d] += g * A::load(out_row[d]);
      A::add(out_row[d], -lr * g * hidden[d]);
    }
  };
  visit(target, 1.0);
  for (const auto n : negatives) visit(n, 0.0);
  for (const auto r : input_rows) {
    float* row = input.row(r).data();
    for (std::size_t d = 0; d < dim; ++d) A::add(row[d], -lr * grad_hidden[d]);
  }
  return total;
}

}  // namespace

double sgd_step(nn::Matrix<float>& input, nn::Matrix<float>& output, const SkipgramExample& ex,
                double learning_rate) {
  std::vector<double> hidden(input.cols()), grad_hidden(input.cols());
  return sgd_step_impl<false>(input, output, ex.input_rows, ex.target, ex.negatives, learning_rate,
                              hidden, grad_hidden);
}

}  // namespace skipgram

namespace {

std::vector<VocabEntry> build_vocab(const std::vector<std::vector<std::string>>& sentences,
                                    int min_count) {
  std::unordered_map<std::string, std::int64_t> counts;
  for (const auto& s : sentences) {
    for (const auto& w : s) {
      if (!w.empty()) ++counts[w];
    }
  }
  if (counts.empty()) throw EmptyCorpus("skip-gram training corpus has no tokens");
  std::vector<VocabEntry> vocab;
  for (auto& [word, count] : counts) {
    if (count >= min_count) vocab.push_back({word, count});
  }
  if (vocab.empty()) {
    throw EmptyVocab("no word reaches min_count=" + std::to_string(min_count));
  }
  std::sort(vocab.begin(), vocab.end(), [](const VocabEntry& a, const VocabEntry& b) {
    return a.count != b.count ? a.count > b.count : a.word < b.word;
  });
  return vocab;
}

// Cumulative unigram^(3/4) distribution for negative sampling.
class NegativeSampler {
 public:
  explicit NegativeSampler(const std::vector<VocabEntry>& vocab) {
    cumulative_.reserve(vocab.size());
    double total = 0.0;
    for (const auto& e : vocab) {
      total += std::pow(static_cast<double>(e.count), 0.75);
      cumulative_.push_back(total);
    }
    for (auto& c : cumulative_) c /= total;
  }

  std::size_t sample(Rng& rng) const {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()),
                                 cumulative_.size() - 1);
  }

 private:
  std::vector<double> cumulative_;
};

struct TrainState {
  const EmbeddingConfig& config;
  const std::vector<std::vector<std::size_t>>& corpus;  // sentences as vocab ids
  const std::vector<std::vector<std::size_t>>& rows;    // subword rows per vocab id
  const std::vector<double>& keep_prob;
  const NegativeSampler& sampler;
  nn::Matrix<float>& input;
  nn::Matrix<float>& output;
  double total_work = 0.0;  // epochs * corpus tokens
};

struct ShardResult {
  double loss = 0.0;
  std::int64_t examples = 0;
};

template <bool Shared>
ShardResult train_shard(TrainState& st, std::size_t begin, std::size_t end, Rng& rng,
                        std::atomic<std::int64_t>& processed) {
  const auto& cfg = st.config;
  const std::size_t n_vocab = st.rows.size();
  std::vector<double> hidden(st.input.cols()), grad_hidden(st.input.cols());
  std::vector<std::size_t> kept;
  std::vector<std::size_t> negatives;
  ShardResult result;
  for (std::size_t s = begin; s < end; ++s) {
    const auto& sentence = st.corpus[s];
    const auto done = processed.fetch_add(static_cast<std::int64_t>(sentence.size()),
                                          std::memory_order_relaxed);
    const double progress = std::min(1.0, static_cast<double>(done) / st.total_work);
    const double lr = cfg.learning_rate * (1.0 - progress);
    kept.clear();
    for (const auto id : sentence) {
      if (rng.uniform() < st.keep_prob[id]) kept.push_back(id);
    }
    for (std::size_t i = 0; i < kept.size(); ++i) {
      const auto reach = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(cfg.window))) + 1;
      const std::size_t lo = i >= reach ? i - reach : 0;
      const std::size_t hi = std::min(kept.size() - 1, i + reach);
      for (std::size_t c = lo; c <= hi; ++c) {
        if (c == i) continue;
        const std::size_t target = kept[c];
        negatives.clear();
        if (n_vocab > 1) {
          while (negatives.size() < static_cast<std::size_t>(cfg.negatives)) {
            const auto n = st.sampler.sample(rng);
            if (n != target) negatives.push_back(n);
          }
        }
        result.loss += skipgram::sgd_step_impl<Shared>(st.input, st.output, st.rows[kept[i]], target,
                                                       negatives, lr, hidden, grad_hidden);
        ++result.examples;
      }
    }
  }
  return result;
}

}  // namespace

EmbeddingTraining train_skipgram(const std::vector<std::vector<std::string>>& sentences,
                                 const EmbeddingConfig& config) {
  config.validate();
  auto vocab = build_vocab(sentences, config.min_count);
  const std::size_t n_words = vocab.size();
  const auto dim = static_cast<std::size_t>(config.dim);

  Rng rng(config.seed, 0);
  nn::Matrix<float> input(n_words + static_cast<std::size_t>(config.bucket_count), dim);
  const double bound = 1.0 / static_cast<double>(dim);
  for (auto& v : input.flat()) v = static_cast<float>(rng.uniform(-bound, bound));
  nn::Matrix<float> output(n_words, dim, 0.0f);

  std::vector<std::vector<std::size_t>> rows(n_words);
  for (std::size_t i = 0; i < n_words; ++i) {
    rows[i].push_back(i);
    append_ngram_rows(vocab[i].word, n_words, config, rows[i]);
  }

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < n_words; ++i) index.emplace(vocab[i].word, i);
  std::vector<std::vector<std::size_t>> corpus;
  corpus.reserve(sentences.size());
  std::int64_t corpus_tokens = 0;
  for (const auto& s : sentences) {
    std::vector<std::size_t> ids;
    for (const auto& w : s) {
      if (const auto it = index.find(w); it != index.end()) ids.push_back(it->second);
    }
    corpus_tokens += static_cast<std::int64_t>(ids.size());
    if (!ids.empty()) corpus.push_back(std::move(ids));
  }

  std::vector<double> keep_prob(n_words);
  for (std::size_t i = 0; i < n_words; ++i) {
    const double f = static_cast<double>(vocab[i].count) / static_cast<double>(corpus_tokens);
    const double r = config.subsample_t / f;
    keep_prob[i] = std::min(1.0, std::sqrt(r) + r);
  }

  NegativeSampler sampler(vocab);
  TrainState state{config, corpus, rows, keep_prob, sampler, input, output,
                   static_cast<double>(config.epochs) * static_cast<double>(corpus_tokens)};
  std::atomic<std::int64_t> processed{0};
  std::vector<double> epoch_loss;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    ShardResult total;
    if (config.threads <= 1) {
      Rng epoch_rng = rng.fork(static_cast<std::uint64_t>(epoch) + 1);
      total = train_shard<false>(state, 0, corpus.size(), epoch_rng, processed);
    } else {
      const auto n_threads = static_cast<std::size_t>(config.threads);
      std::vector<ShardResult> shards(n_threads);
      {
        std::vector<std::jthread> workers;
        for (std::size_t t = 0; t < n_threads; ++t) {
          workers.emplace_back([&, t] {
            Rng worker_rng = rng.fork((static_cast<std::uint64_t>(epoch) + 1) * 1000 + t);
            const auto begin = corpus.size() * t / n_threads;
            const auto end = corpus.size() * (t + 1) / n_threads;
            shards[t] = train_shard<true>(state, begin, end, worker_rng, processed);
          });
        }
      }
      for (const auto& s : shards) {
        total.loss += s.loss;
        total.examples += s.examples;
      }
    }
    epoch_loss.push_back(total.examples ? total.loss / static_cast<double>(total.examples) : 0.0);
  }

  return {EmbeddingModel(config, std::move(vocab), std::move(input), std::move(output)),
          std::move(epoch_loss)};
}

// --- persistence -------------------------------------------------------------------

namespace {

ordered_json config_to_json(const EmbeddingConfig& c) {
  ordered_json j;
  j["dim"] = c.dim;
  j["n_min"] = c.n_min;
  j["n_max"] = c.n_max;
  j["epochs"] = c.epochs;
  j["learning_rate"] = c.learning_rate;
  j["window"] = c.window;
  j["negatives"] = c.negatives;
  j["min_count"] = c.min_count;
  j["bucket_count"] = c.bucket_count;
  j["subsample_t"] = c.subsample_t;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  return j;
}

EmbeddingConfig config_from_json(const nlohmann::json& j) {
  EmbeddingConfig c;
  c.dim = j.at("dim").get<int>();
  c.n_min = j.at("n_min").get<int>();
  c.n_max = j.at("n_max").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.window = j.at("window").get<int>();
  c.negatives = j.at("negatives").get<int>();
  c.min_count = j.at("min_count").get<int>();
  c.bucket_count = j.at("bucket_count").get<std::int64_t>();
  c.subsample_t = j.at("subsample_t").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.threads = j.value("threads", 1);
  return c;
}

}  // namespace

void save_embeddings(const EmbeddingModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  ordered_json manifest;
  manifest["format_version"] = kEmbeddingFormatVersion;
  manifest["hash_function"] = "fnv1a32";
  manifest["config"] = config_to_json(model.config());
  auto vocab = ordered_json::array();
  for (const auto& e : model.vocab()) vocab.push_back(ordered_json::array({e.word, e.count}));
  manifest["vocab"] = std::move(vocab);
  manifest["input_shape"] = {model.input_vectors().rows(), model.input_vectors().cols()};
  manifest["output_shape"] = {model.output_vectors().rows(), model.output_vectors().cols()};
  manifest["checksum"] = model.checksum();
  internal::write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
  internal::write_f32_file(dir / "input.f32", model.input_vectors().flat());
  internal::write_f32_file(dir / "output.f32", model.output_vectors().flat());
}

EmbeddingModel load_embeddings(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(internal::read_text_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("embedding manifest: ") + e.what());
  } catch (const IoError& e) {
    throw FormatError(std::string("embedding manifest: ") + e.what());
  }
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kEmbeddingFormatVersion) {
      throw FormatError("unsupported embedding format_version " + std::to_string(version));
    }
    if (manifest.at("hash_function").get<std::string>() != "fnv1a32") {
      throw FormatError("unsupported n-gram hash function");
    }
    const auto config = config_from_json(manifest.at("config"));
    std::vector<VocabEntry> vocab;
    for (const auto& e : manifest.at("vocab")) {
      vocab.push_back({e.at(0).get<std::string>(), e.at(1).get<std::int64_t>()});
    }
    const auto in_shape = manifest.at("input_shape").get<std::vector<std::size_t>>();
    const auto out_shape = manifest.at("output_shape").get<std::vector<std::size_t>>();
    const auto dim = static_cast<std::size_t>(config.dim);
    if (in_shape.size() != 2 || out_shape.size() != 2 || in_shape[1] != dim || out_shape[1] != dim ||
        in_shape[0] != vocab.size() + static_cast<std::size_t>(config.bucket_count) ||
        out_shape[0] != vocab.size()) {
      throw FormatError("embedding manifest shapes disagree with config and vocabulary");
    }
    auto input = internal::read_f32_file(dir / "input.f32", in_shape[0] * in_shape[1]);
    auto output = internal::read_f32_file(dir / "output.f32", out_shape[0] * out_shape[1]);
    EmbeddingModel model(config, std::move(vocab),
                         nn::Matrix<float>(in_shape[0], in_shape[1], std::move(input)),
                         nn::Matrix<float>(out_shape[0], out_shape[1], std::move(output)));
    if (model.checksum() != manifest.at("checksum").get<std::string>()) {
      throw FormatError("embedding checksum mismatch");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("embedding manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("embedding manifest: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("embedding manifest: ") + e.what());
  }
}

}  // namespace gdpr
