#include "gdpr/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <thread>

#include "gdpr/errors.hpp"
#include "gdpr/labels.hpp"
#include "gdpr/nn/adam.hpp"
#include "internal/binary_io.hpp"
#include "internal/digest.hpp"
#include "json.hpp"

namespace gdpr {

using nlohmann::ordered_json;

void ClassifierConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("classifier config: " + what); };
  if (n_filters <= 0) fail("n_filters must be positive");
  if (kernel_size <= 0) fail("kernel_size must be positive");
  if (fc_units <= 0) fail("fc_units must be positive");
  if (n_classes < 2) fail("n_classes must be >= 2");
  if (!(dropout_conv >= 0 && dropout_conv < 1)) fail("dropout_conv must be in [0, 1)");
  if (!(dropout_fc >= 0 && dropout_fc < 1)) fail("dropout_fc must be in [0, 1)");
  if (max_len <= 0) fail("max_len must be positive");
  if (epochs < 0) fail("epochs must be non-negative");
  if (!(learning_rate > 0)) fail("learning_rate must be positive");
  if (batch_size <= 0) fail("batch_size must be positive");
}

// --- model -------------------------------------------------------------------------

CnnClassifier::CnnClassifier(ClassifierConfig config, std::string embedding_checksum,
                             std::size_t embedding_dim, CnnParams<float> params)
    : config_(config),
      embedding_checksum_(std::move(embedding_checksum)),
      embedding_dim_(embedding_dim),
      params_(std::move(params)) {
  config_.validate();
  const auto f = static_cast<std::size_t>(config_.n_filters);
  const auto k = static_cast<std::size_t>(config_.kernel_size);
  const auto h = static_cast<std::size_t>(config_.fc_units);
  const auto c = static_cast<std::size_t>(config_.n_classes);
  const auto& p = params_;
  if (p.conv_filters.rows() != f || p.conv_filters.cols() != k * embedding_dim_ ||
      p.conv_bias.size() != f || p.fc1_weights.rows() != h || p.fc1_weights.cols() != f ||
      p.fc1_bias.size() != h || p.fc2_weights.rows() != c || p.fc2_weights.cols() != h ||
      p.fc2_bias.size() != c) {
    throw ShapeError("classifier weights do not match the configured architecture");
  }
}

CnnClassifier CnnClassifier::initialize(const ClassifierConfig& config,
                                        const EmbeddingModel& embeddings) {
  config.validate();
  const auto f = static_cast<std::size_t>(config.n_filters);
  const auto k = static_cast<std::size_t>(config.kernel_size);
  const auto h = static_cast<std::size_t>(config.fc_units);
  const auto c = static_cast<std::size_t>(config.n_classes);
  const std::size_t d = embeddings.dim();
  auto params = CnnParams<float>::zeros(f, k, d, h, c);

  Rng rng = Rng(config.seed).fork(0);
  auto glorot = [&rng](std::span<float> w, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (float& v : w) v = static_cast<float>(rng.uniform(-limit, limit));
  };
  glorot(params.conv_filters.flat(), static_cast<double>(k * d), static_cast<double>(k * f));
  glorot(params.fc1_weights.flat(), static_cast<double>(f), static_cast<double>(h));
  glorot(params.fc2_weights.flat(), static_cast<double>(h), static_cast<double>(c));
  return CnnClassifier(config, embeddings.checksum(), d, std::move(params));
}

std::vector<float> CnnClassifier::forward(const nn::Tensor2& encoded, bool train_mode,
                                          Rng& rng) const {
  if (encoded.rows() != static_cast<std::size_t>(config_.max_len) ||
      encoded.cols() != embedding_dim_) {
    throw ShapeError("encoded segment must be " + std::to_string(config_.max_len) + "x" +
                     std::to_string(embedding_dim_));
  }
  return cnn_forward(params_, static_cast<std::size_t>(config_.kernel_size), encoded, train_mode,
                     config_.dropout(), rng);
}

nn::Tensor2 encode_segment(const EmbeddingModel& embeddings, std::span<const std::string> tokens,
                           std::size_t max_len) {
  nn::Tensor2 out(max_len, embeddings.dim());
  const std::size_t n = std::min(tokens.size(), max_len);
  for (std::size_t t = 0; t < n; ++t) embeddings.word_vector_into(tokens[t], out.row(t));
  return out;
}

std::vector<std::string> requirement_class_names() {
  std::vector<std::string> names;
  for (const auto& label : requirement_labels()) names.emplace_back(label.name);
  return names;
}

// --- prediction --------------------------------------------------------------------

Prediction prediction_from_probs(std::vector<float> probs) {
  if (probs.size() < 2) throw ShapeError("prediction needs at least two classes");
  std::size_t top = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[top]) top = i;
  }
  std::size_t second = top == 0 ? 1 : 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (i != top && probs[i] > probs[second]) second = i;
  }
  Prediction p;
  p.top_class = static_cast<int>(top) + 1;
  p.second_class = static_cast<int>(second) + 1;
  p.margin = std::clamp(static_cast<double>(probs[top]) - static_cast<double>(probs[second]), 0.0, 1.0);
  p.probs = std::move(probs);
  return p;
}

namespace {

void require_compatible(const CnnClassifier& model, const EmbeddingModel& embeddings) {
  if (model.embedding_dim() != embeddings.dim() ||
      model.embedding_checksum() != embeddings.checksum()) {
    throw ModelMismatch("classifier was trained against embeddings " + model.embedding_checksum() +
                        ", got " + embeddings.checksum());
  }
}

Prediction predict_unchecked(const CnnClassifier& model, const EmbeddingModel& embeddings,
                             std::span<const std::string> tokens) {
  const auto encoded =
      encode_segment(embeddings, tokens, static_cast<std::size_t>(model.config().max_len));
  Rng unused;
  return prediction_from_probs(model.forward(encoded, false, unused));
}

}  // namespace

Prediction predict(const CnnClassifier& model, const EmbeddingModel& embeddings,
                   std::span<const std::string> tokens) {
  require_compatible(model, embeddings);
  return predict_unchecked(model, embeddings, tokens);
}

std::vector<Prediction> predict_all(const CnnClassifier& model, const EmbeddingModel& embeddings,
                                    const std::vector<Segment>& segments, int threads) {
  require_compatible(model, embeddings);
  std::vector<Prediction> out(segments.size());
  const auto workers = static_cast<std::size_t>(
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1,
                              std::max<std::size_t>(segments.size(), 1)));
  auto run = [&](std::size_t w) {
    for (std::size_t i = w; i < segments.size(); i += workers) {
      out[i] = predict_unchecked(model, embeddings, segments[i].tokens);
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
  }
  return out;
}

nn::MetricsReport evaluate(const CnnClassifier& model, const EmbeddingModel& embeddings,
                           const std::vector<LabeledSegment>& test, int threads) {
  if (test.empty()) throw EmptyDataset("evaluate: empty test set");
  std::vector<Segment> segments;
  std::vector<int> golds;
  segments.reserve(test.size());
  for (const auto& ex : test) {
    if (ex.label < 1 || ex.label > model.config().n_classes) {
      throw InvalidLabel("evaluate: label " + std::to_string(ex.label) + " outside 1.." +
                         std::to_string(model.config().n_classes));
    }
    segments.push_back(ex.segment);
    golds.push_back(ex.label - 1);
  }
  const auto preds = predict_all(model, embeddings, segments, threads);
  std::vector<int> predicted;
  predicted.reserve(preds.size());
  for (const auto& p : preds) predicted.push_back(p.top_class - 1);
  return nn::compute_metrics(predicted, golds, model.config().n_classes);
}

// --- training ----------------------------------------------------------------------

namespace {

// Token rows of one example, without the zero tail.
struct Encoded {
  nn::Tensor2 rows;
  std::size_t gold = 0;
};

void expand_into(const nn::Tensor2& compact, nn::Tensor2& full, std::size_t& dirty_rows) {
  for (std::size_t r = compact.rows(); r < dirty_rows; ++r) {
    auto row = full.row(r);
    std::fill(row.begin(), row.end(), 0.0f);
  }
  std::copy(compact.flat().begin(), compact.flat().end(), full.flat().begin());
  dirty_rows = compact.rows();
}

void scale(CnnParams<float>& grads, float factor) {
  for (auto t : grads.tensors()) {
    for (float& v : t) v *= factor;
  }
}

void zero(CnnParams<float>& grads) {
  for (auto t : grads.tensors()) std::fill(t.begin(), t.end(), 0.0f);
}

}  // namespace

TrainResult train_classifier(const std::vector<LabeledSegment>& train,
                             const std::vector<LabeledSegment>& validation,
                             const EmbeddingModel& embeddings, const ClassifierConfig& config) {
  config.validate();
  if (train.empty()) throw EmptyDataset("train_classifier: empty training set");
  auto check_label = [&](int label) {
    if (label < 1 || label > config.n_classes) {
      throw InvalidLabel("train_classifier: label " + std::to_string(label) + " outside 1.." +
                         std::to_string(config.n_classes));
    }
  };
  for (const auto& ex : train) check_label(ex.label);
  for (const auto& ex : validation) check_label(ex.label);

  auto model = CnnClassifier::initialize(config, embeddings);
  const auto max_len = static_cast<std::size_t>(config.max_len);
  const auto kernel = static_cast<std::size_t>(config.kernel_size);
  const std::size_t dim = embeddings.dim();

  std::vector<Encoded> data;
  data.reserve(train.size());
  for (const auto& ex : train) {
    const std::size_t n = std::min(ex.segment.tokens.size(), max_len);
    nn::Tensor2 rows(n, dim);
    for (std::size_t t = 0; t < n; ++t) embeddings.word_vector_into(ex.segment.tokens[t], rows.row(t));
    data.push_back({std::move(rows), static_cast<std::size_t>(ex.label - 1)});
  }

  Rng shuffle_rng = Rng(config.seed).fork(1);
  Rng dropout_rng = Rng(config.seed).fork(2);
  nn::Adam<float> adam(nn::AdamConfig{config.learning_rate});
  auto& params = model.mutable_params();
  auto grads = params.zeros_like();
  const auto rates = config.dropout();

  nn::Tensor2 input(max_len, dim);
  std::size_t dirty_rows = max_len;
  ForwardCache<float> cache;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);

  TrainHistory history;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      zero(grads);
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = data[order[i]];
        expand_into(ex.rows, input, dirty_rows);
        cnn_forward(params, kernel, input, true, rates, dropout_rng, &cache);
        const auto argmax = static_cast<std::size_t>(
            std::max_element(cache.probs.begin(), cache.probs.end()) - cache.probs.begin());
        correct += argmax == ex.gold ? 1 : 0;
        loss_sum += cnn_backward(params, kernel, cache, ex.gold, grads);
      }
      scale(grads, 1.0f / static_cast<float>(end - start));
      const auto& g = grads;
      adam.step(params.tensors(), g.tensors());
    }
    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(data.size());
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    if (!validation.empty()) stats.val_macro_f1 = evaluate(model, embeddings, validation).macro_f1;
    history.push_back(stats);
  }
  return {std::move(model), std::move(history)};
}

// --- splitting ---------------------------------------------------------------------

DatasetSplit split_by_document(const std::vector<LabeledSegment>& segments, double ratio,
                               std::uint64_t seed) {
  std::set<std::string> doc_set;
  for (const auto& s : segments) doc_set.insert(s.segment.doc_id);
  if (doc_set.size() < 2) {
    throw CannotSplit("split_by_document needs at least 2 documents, got " +
                      std::to_string(doc_set.size()));
  }
  if (!(ratio > 0 && ratio < 1)) throw ConfigError("split ratio must be in (0, 1)");
  std::vector<std::string> docs(doc_set.begin(), doc_set.end());
  Rng rng(seed, 0x5b11);
  shuffle(docs.begin(), docs.end(), rng);
  const std::size_t n = docs.size();
  // Small slack so that e.g. 0.8 * 1080 is not floored to 863.
  auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

  DatasetSplit out;
  out.train_docs.assign(docs.begin(), docs.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test_docs.assign(docs.begin() + static_cast<std::ptrdiff_t>(n_train), docs.end());
  std::sort(out.train_docs.begin(), out.train_docs.end());
  std::sort(out.test_docs.begin(), out.test_docs.end());
  const std::set<std::string> train_set(out.train_docs.begin(), out.train_docs.end());
  for (const auto& s : segments) {
    (train_set.count(s.segment.doc_id) ? out.train : out.test).push_back(s);
  }
  return out;
}

// --- persistence -------------------------------------------------------------------

namespace {

ordered_json config_to_json(const ClassifierConfig& c) {
  ordered_json j;
  j["n_filters"] = c.n_filters;
  j["kernel_size"] = c.kernel_size;
  j["fc_units"] = c.fc_units;
  j["n_classes"] = c.n_classes;
  j["dropout_conv"] = c.dropout_conv;
  j["dropout_fc"] = c.dropout_fc;
  j["max_len"] = c.max_len;
  j["epochs"] = c.epochs;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  return j;
}

ClassifierConfig config_from_json(const nlohmann::json& j) {
  ClassifierConfig c;
  c.n_filters = j.at("n_filters").get<int>();
  c.kernel_size = j.at("kernel_size").get<int>();
  c.fc_units = j.at("fc_units").get<int>();
  c.n_classes = j.at("n_classes").get<int>();
  c.dropout_conv = j.at("dropout_conv").get<double>();
  c.dropout_fc = j.at("dropout_fc").get<double>();
  c.max_len = j.at("max_len").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

constexpr const char* kTensorNames[] = {"conv_filters", "conv_bias", "fc1_weights",
                                        "fc1_bias",     "fc2_weights", "fc2_bias"};

std::vector<std::vector<std::size_t>> tensor_shapes(const CnnParams<float>& p) {
  return {{p.conv_filters.rows(), p.conv_filters.cols()}, {p.conv_bias.size()},
          {p.fc1_weights.rows(), p.fc1_weights.cols()},   {p.fc1_bias.size()},
          {p.fc2_weights.rows(), p.fc2_weights.cols()},   {p.fc2_bias.size()}};
}

}  // namespace

void save_model(const CnnClassifier& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& params = model.params();
  std::vector<float> weights;
  for (const auto t : params.tensors()) weights.insert(weights.end(), t.begin(), t.end());
  internal::Sha256 digest;
  digest.update(std::span<const float>(weights));

  ordered_json manifest;
  manifest["format_version"] = kClassifierFormatVersion;
  manifest["config"] = config_to_json(model.config());
  manifest["embedding_checksum"] = model.embedding_checksum();
  manifest["embedding_dim"] = model.embedding_dim();
  auto tensors = ordered_json::array();
  const auto shapes = tensor_shapes(params);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    tensors.push_back({{"name", kTensorNames[i]}, {"shape", shapes[i]}});
  }
  manifest["tensors"] = std::move(tensors);
  manifest["weights_sha256"] = digest.hex_digest();
  internal::write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
  internal::write_f32_file(dir / "weights.f32", weights);
}

CnnClassifier load_model(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(internal::read_text_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model manifest: ") + e.what());
  } catch (const IoError& e) {
    throw FormatError(std::string("model manifest: ") + e.what());
  }
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kClassifierFormatVersion) {
      throw FormatError("unsupported model format_version " + std::to_string(version));
    }
    const auto config = config_from_json(manifest.at("config"));
    config.validate();
    const auto dim = manifest.at("embedding_dim").get<std::size_t>();
    auto params = CnnParams<float>::zeros(
        static_cast<std::size_t>(config.n_filters), static_cast<std::size_t>(config.kernel_size),
        dim, static_cast<std::size_t>(config.fc_units), static_cast<std::size_t>(config.n_classes));

    const auto expected = tensor_shapes(params);
    const auto& listed = manifest.at("tensors");
    if (listed.size() != expected.size()) throw FormatError("model manifest: wrong tensor count");
    std::size_t total = 0;
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (listed[i].at("name").get<std::string>() != kTensorNames[i] ||
          listed[i].at("shape").get<std::vector<std::size_t>>() != expected[i]) {
        throw FormatError(std::string("model manifest: tensor ") + kTensorNames[i] +
                          " does not match the configured architecture");
      }
      std::size_t n = 1;
      for (const auto d : expected[i]) n *= d;
      total += n;
    }
    const auto weights = internal::read_f32_file(dir / "weights.f32", total);
    internal::Sha256 digest;
    digest.update(std::span<const float>(weights));
    if (digest.hex_digest() != manifest.at("weights_sha256").get<std::string>()) {
      throw FormatError("model weights digest mismatch");
    }
    std::size_t offset = 0;
    for (auto t : params.tensors()) {
      std::copy_n(weights.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.begin());
      offset += t.size();
    }
    return CnnClassifier(config, manifest.at("embedding_checksum").get<std::string>(), dim,
                         std::move(params));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model manifest: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("model manifest: ") + e.what());
  }
}

}  // namespace gdpr
