#include <gtest/gtest.h>

#include <algorithm>
#include <nlohmann/json.hpp>

#include "gdpr/embeddings.hpp"
#include "gdpr/errors.hpp"
#include "test_support.hpp"

namespace gdpr {
namespace {

using testing::TempDir;

std::string word(std::uint64_t n) {
  std::string w = "zq";
  do {
    w.push_back(static_cast<char>('a' + n % 26));
    n /= 26;
  } while (n);
  return w;
}

// 200 sentences; each draws from one of 8 topical groups of 20 words, and the
// word "confidentiality" appears in group 0.
std::vector<std::vector<std::string>> toy_corpus() {
  Rng rng(3);
  std::vector<std::vector<std::string>> out;
  for (int s = 0; s < 200; ++s) {
    const auto group = rng.below(8);
    std::vector<std::string> sentence;
    for (int w = 0; w < 10; ++w) sentence.push_back(word(group * 20 + rng.below(20)));
    if (group == 0) sentence[rng.below(sentence.size())] = "confidentiality";
    out.push_back(std::move(sentence));
  }
  return out;
}

EmbeddingConfig toy_config() {
  EmbeddingConfig c;
  c.dim = 16;
  c.bucket_count = 2048;
  c.epochs = 5;
  c.subsample_t = 1e-2;
  c.seed = 9;
  return c;
}

const EmbeddingTraining& trained_toy() {
  static const EmbeddingTraining t = train_skipgram(toy_corpus(), toy_config());
  return t;
}

// --- char_ngrams ----------------------------------------------------------------

TEST(CharNgrams, PrivacyTrigrams) {
  const std::vector<std::string> expected{"<pr", "pri", "riv", "iva", "vac", "acy", "cy>"};
  EXPECT_EQ(char_ngrams("privacy", 3, 3), expected);
}

TEST(CharNgrams, SingleLetterKeepsWrappedWord) {
  EXPECT_EQ(char_ngrams("a", 3, 6), std::vector<std::string>{"<a>"});
}

TEST(CharNgrams, DataThreeToFour) {
  // Sliding windows over "<data>".
  const std::vector<std::string> expected{"<da", "dat", "ata", "ta>", "<dat", "data", "ata>"};
  EXPECT_EQ(char_ngrams("data", 3, 4), expected);
}

TEST(CharNgrams, PropertyLengthsAndCount) {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    std::string w(1 + rng.below(12), 'a');
    for (auto& c : w) c = static_cast<char>('a' + rng.below(26));
    const int n_min = 1 + static_cast<int>(rng.below(5));
    const int n_max = n_min + static_cast<int>(rng.below(5));
    const auto grams = char_ngrams(w, n_min, n_max);
    const int wrapped = static_cast<int>(w.size()) + 2;
    std::size_t expected = 0;
    for (int n = n_min; n <= n_max; ++n) expected += static_cast<std::size_t>(std::max(0, wrapped - n + 1));
    const bool full_in_range = wrapped >= n_min && wrapped <= n_max;
    if (full_in_range && expected > 1) --expected;
    ASSERT_EQ(grams.size(), expected) << w << " " << n_min << ".." << n_max;
    for (const auto& g : grams) {
      ASSERT_GE(static_cast<int>(g.size()), n_min);
      ASSERT_LE(static_cast<int>(g.size()), n_max);
      ASSERT_NE(("<" + w + ">").find(g), std::string::npos);
    }
  }
}

TEST(Fnv1a, KnownValues) {
  // Reference values of 32-bit FNV-1a.
  EXPECT_EQ(fnv1a32(""), 0x811c9dc5u);
  EXPECT_EQ(fnv1a32("a"), 0xe40c292cu);
  EXPECT_EQ(fnv1a32("foobar"), 0xbf9cf968u);
}

// --- config ------------------------------------------------------------------------

TEST(EmbeddingConfig, Defaults) {
  const EmbeddingConfig c;
  EXPECT_EQ(c.dim, 300);
  EXPECT_EQ(c.n_min, 3);
  EXPECT_EQ(c.n_max, 6);
  EXPECT_EQ(c.epochs, 5);
  EXPECT_DOUBLE_EQ(c.learning_rate, 0.05);
  EXPECT_EQ(c.window, 5);
  EXPECT_EQ(c.negatives, 5);
  EXPECT_NO_THROW(c.validate());
}

TEST(EmbeddingConfig, InvalidRejected) {
  auto c = toy_config();
  c.n_min = 4;
  c.n_max = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = toy_config();
  c.dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = toy_config();
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

// --- training ------------------------------------------------------------------------

TEST(SkipGram, LossDecreasesEveryEpoch) {
  const auto& loss = trained_toy().epoch_loss;
  ASSERT_EQ(loss.size(), 5u);
  for (std::size_t i = 0; i < loss.size(); ++i) ASSERT_TRUE(std::isfinite(loss[i]));
  for (std::size_t i = 1; i < loss.size(); ++i) EXPECT_LT(loss[i], loss[i - 1] + 1e-6) << i;
  EXPECT_LT(loss.back(), loss.front());
}

TEST(SkipGram, EmptyCorpusAndEmptyVocab) {
  EXPECT_THROW(train_skipgram({}, toy_config()), EmptyCorpus);
  EXPECT_THROW(train_skipgram({{}, {}}, toy_config()), EmptyCorpus);
  auto c = toy_config();
  c.min_count = 5;
  EXPECT_THROW(train_skipgram({{"one", "two", "three"}}, c), EmptyVocab);
}

TEST(SkipGram, DeterministicSingleThreaded) {
  const auto again = train_skipgram(toy_corpus(), toy_config());
  EXPECT_EQ(again.model, trained_toy().model);
  EXPECT_EQ(again.model.checksum(), trained_toy().model.checksum());
  EXPECT_EQ(again.epoch_loss, trained_toy().epoch_loss);
}

TEST(SkipGram, VocabRespectsMinCount) {
  auto c = toy_config();
  c.min_count = 20;
  const auto t = train_skipgram(toy_corpus(), c);
  for (const auto& e : t.model.vocab()) EXPECT_GE(e.count, 20);
  for (const float v : t.model.input_vectors().flat()) ASSERT_TRUE(std::isfinite(v));
}

TEST(SkipGram, MultiThreadedTrainingProducesFiniteVectors) {
  auto c = toy_config();
  c.threads = 3;
  const auto t = train_skipgram(toy_corpus(), c);
  for (const float v : t.model.input_vectors().flat()) ASSERT_TRUE(std::isfinite(v));
}

// --- word vectors ------------------------------------------------------------------

TEST(WordVector, DeterministicAndFinite) {
  const auto& m = trained_toy().model;
  EXPECT_EQ(m.word_vector("confidentiality"), m.word_vector("confidentiality"));
  const auto oov = m.word_vector("neverseenbefore");
  ASSERT_EQ(oov.size(), 16u);
  for (const float v : oov) EXPECT_TRUE(std::isfinite(v));
}

TEST(WordVector, DefaultDimOovVectorIsFinite) {
  auto c = toy_config();
  c.dim = 300;
  c.epochs = 1;
  const auto t = train_skipgram({{"alpha", "bravo", "charlie"}}, c);
  const auto v = t.model.word_vector("unseenword");
  ASSERT_EQ(v.size(), 300u);
  for (const float x : v) EXPECT_TRUE(std::isfinite(x));
}

TEST(WordVector, InVocabIsMeanOfWordAndNgramRows) {
  const auto& m = trained_toy().model;
  const auto idx = m.word_index("confidentiality");
  ASSERT_TRUE(idx.has_value());
  const auto rows = m.subword_rows("confidentiality");
  ASSERT_EQ(rows.front(), *idx);
  EXPECT_EQ(rows.size(), 1 + char_ngrams("confidentiality", 3, 6).size());
  std::vector<double> mean(m.dim(), 0.0);
  for (const auto r : rows) {
    for (std::size_t d = 0; d < m.dim(); ++d) mean[d] += m.input_vectors()(r, d);
  }
  const auto v = m.word_vector("confidentiality");
  for (std::size_t d = 0; d < m.dim(); ++d) {
    EXPECT_NEAR(v[d], mean[d] / static_cast<double>(rows.size()), 1e-6);
  }
  // OOV rows are only n-gram buckets.
  const auto oov_rows = m.subword_rows("qqqqzz");
  for (const auto r : oov_rows) EXPECT_GE(r, m.vocab().size());
}

TEST(WordVector, MisspellingCloserThanMedianRandomWord) {
  const auto& m = trained_toy().model;
  ASSERT_FALSE(m.word_index("confidentialty").has_value());
  const auto typo = m.word_vector("confidentialty");
  const double target = cosine_similarity(typo, m.word_vector("confidentiality"));
  Rng rng(4);
  std::vector<double> sims;
  for (int i = 0; i < 100; ++i) {
    const auto& w = m.vocab()[rng.below(m.vocab().size())].word;
    sims.push_back(cosine_similarity(typo, m.word_vector(w)));
  }
  std::nth_element(sims.begin(), sims.begin() + 50, sims.end());
  EXPECT_GT(target, sims[50]);
}

// --- nearest neighbours -------------------------------------------------------------

// Three words with hand-set word rows. The zero n-gram rows only shrink each
// vector, which leaves cosines unchanged.
EmbeddingModel three_word_model() {
  EmbeddingConfig c = toy_config();
  c.dim = 2;
  c.bucket_count = 8;
  std::vector<VocabEntry> vocab{{"alpha", 3}, {"bravo", 2}, {"charlie", 1}};
  nn::Matrix<float> input(3 + 8, 2);
  input(0, 0) = 1.0f;
  input(1, 0) = 0.9f;
  input(1, 1) = 0.4f;
  input(2, 0) = -1.0f;
  input(2, 1) = 0.2f;
  return EmbeddingModel(c, vocab, input, nn::Matrix<float>(3, 2));
}

TEST(NearestNeighbors, BruteForceOnThreeWords) {
  const auto m = three_word_model();
  const auto q = m.word_vector("alpha");
  std::string best;
  double best_cos = -2;
  for (const auto& e : m.vocab()) {
    if (e.word == "alpha") continue;
    const double c = cosine_similarity(q, m.word_vector(e.word));
    if (c > best_cos) {
      best_cos = c;
      best = e.word;
    }
  }
  const auto nn = nearest_neighbors(m, "alpha", 1);
  ASSERT_EQ(nn.size(), 1u);
  EXPECT_EQ(nn[0].word, best);
  EXPECT_NEAR(nn[0].cosine, best_cos, 1e-9);
}

TEST(NearestNeighbors, ExcludesQueryAndClampsK) {
  const auto m = three_word_model();
  const auto nn = nearest_neighbors(m, "bravo", 10);
  ASSERT_EQ(nn.size(), 2u);
  for (const auto& n : nn) EXPECT_NE(n.word, "bravo");
  EXPECT_GE(nn[0].cosine, nn[1].cosine);
}

TEST(NearestNeighbors, TiesGoToLowerIndex) {
  EmbeddingConfig c = toy_config();
  c.dim = 2;
  c.bucket_count = 8;
  nn::Matrix<float> input(3 + 8, 2);
  input(0, 0) = 1.0f;
  input(1, 0) = 1.0f;
  input(2, 0) = 1.0f;
  const EmbeddingModel m(c, {{"alpha", 1}, {"bravo", 1}, {"charlie", 1}}, input,
                         nn::Matrix<float>(3, 2));
  const auto nn = nearest_neighbors(m, "charlie", 2);
  ASSERT_EQ(nn.size(), 2u);
  EXPECT_EQ(nn[0].word, "alpha");
  EXPECT_EQ(nn[1].word, "bravo");
}

// --- persistence ---------------------------------------------------------------------

TEST(EmbeddingFiles, RoundTripIsBitExact) {
  TempDir dir;
  save_embeddings(trained_toy().model, dir.path());
  const auto loaded = load_embeddings(dir.path());
  EXPECT_EQ(loaded, trained_toy().model);
  EXPECT_EQ(loaded.checksum(), trained_toy().model.checksum());
}

void edit_manifest(const std::filesystem::path& dir,
                   const std::function<void(nlohmann::json&)>& edit) {
  auto j = nlohmann::json::parse(testing::slurp(dir / "manifest.json"));
  edit(j);
  testing::spit(dir / "manifest.json", j.dump());
}

TEST(EmbeddingFiles, DimMismatchRejected) {
  TempDir dir;
  save_embeddings(trained_toy().model, dir.path());
  edit_manifest(dir.path(), [](nlohmann::json& j) {
    j["config"]["dim"] = 300;
    j["input_shape"][1] = 300;
    j["output_shape"][1] = 300;
  });
  EXPECT_THROW(load_embeddings(dir.path()), FormatError);
}

TEST(EmbeddingFiles, UnknownVersionRejected) {
  TempDir dir;
  save_embeddings(trained_toy().model, dir.path());
  edit_manifest(dir.path(), [](nlohmann::json& j) { j["format_version"] = 99; });
  EXPECT_THROW(load_embeddings(dir.path()), FormatError);
}

TEST(EmbeddingFiles, CorruptMatrixRejected) {
  TempDir dir;
  save_embeddings(trained_toy().model, dir.path());
  auto bytes = testing::slurp(dir / "input.f32");
  bytes[7] ^= 0x40;
  testing::spit(dir / "input.f32", bytes);
  EXPECT_THROW(load_embeddings(dir.path()), FormatError);
  testing::spit(dir / "input.f32", bytes.substr(4));
  EXPECT_THROW(load_embeddings(dir.path()), FormatError);
}

// --- objective gradient -----------------------------------------------------------------

template <typename T>
void check_skipgram_gradient(std::uint64_t seed, double tolerance, double step) {
  Rng rng(seed);
  const std::size_t rows = 12, words = 6, dim = 5;
  nn::Matrix<T> input(rows, dim), output(words, dim);
  for (auto& v : input.flat()) v = static_cast<T>(rng.uniform(-0.8, 0.8));
  for (auto& v : output.flat()) v = static_cast<T>(rng.uniform(-0.8, 0.8));
  SkipgramExample ex{{0, 4, 7, 11}, 2, {1, 3, 5, 3}};

  nn::Matrix<T> gi(rows, dim), go(words, dim);
  skipgram::loss_and_gradient(input, output, ex, gi, go);
  auto check = [&](nn::Matrix<T>& m, const nn::Matrix<T>& g) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      const T saved = m.flat()[i];
      m.flat()[i] = static_cast<T>(saved + step);
      const double up = skipgram::loss(input, output, ex);
      m.flat()[i] = static_cast<T>(saved - step);
      const double down = skipgram::loss(input, output, ex);
      m.flat()[i] = saved;
      const double numeric = (up - down) / (2 * step);
      ASSERT_LE(testing::rel_error(g.flat()[i], numeric), tolerance)
          << "entry " << i << " analytic " << g.flat()[i] << " numeric " << numeric;
    }
  };
  check(input, gi);
  check(output, go);
}

TEST(SkipGramGradient, MatchesFiniteDifferencesFloat) {
  for (std::uint64_t s = 1; s <= 5; ++s) check_skipgram_gradient<float>(s, 1e-3, 1e-2);
}

TEST(SkipGramGradient, MatchesFiniteDifferencesDouble) {
  for (std::uint64_t s = 1; s <= 5; ++s) check_skipgram_gradient<double>(s, 1e-5, 1e-5);
}

TEST(SkipGramGradient, SgdStepLowersExampleLoss) {
  Rng rng(2);
  nn::Matrix<float> input(10, 4), output(5, 4);
  for (auto& v : input.flat()) v = static_cast<float>(rng.uniform(-0.5, 0.5));
  for (auto& v : output.flat()) v = static_cast<float>(rng.uniform(-0.5, 0.5));
  const SkipgramExample ex{{0, 6}, 1, {2, 4}};
  const double before = skipgram::loss(input, output, ex);
  EXPECT_NEAR(skipgram::sgd_step(input, output, ex, 0.05), before, 1e-9);
  EXPECT_LT(skipgram::loss(input, output, ex), before);
}

}  // namespace
}  // namespace gdpr
