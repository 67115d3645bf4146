// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "gdpr/active_learning.hpp"
#include "gdpr/annotation.hpp"
#include "gdpr/classifier.hpp"
#include "gdpr/compliance.hpp"
#include "gdpr/corpus.hpp"
#include "gdpr/embeddings.hpp"
#include "gdpr/synthetic.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "synthetic_fixture.hpp"
#include "test_support.hpp"

namespace gdpr {
namespace {

using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records a failed check without stopping the criterion.
  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void criterion(const std::string& name, double budget_seconds, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto start = Clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail << " [exception: " << e.what() << "]";
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  o.check(secs < budget_seconds, "runtime over " + std::to_string(budget_seconds) + " s");
  std::printf("%s %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), secs, o.detail.str().c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

// --- gradients ----------------------------------------------------------------------

void gradients(Outcome& o) {
  Rng rng(2024);
  gradcheck::Result layers_f, layers_d, net_f, net_d;
  for (int i = 0; i < 60; ++i) {
    layers_f.merge(gradcheck::conv1d<float>(rng));
    layers_f.merge(gradcheck::dense<float>(rng));
    layers_f.merge(gradcheck::maxpool<float>(rng));
    layers_f.merge(gradcheck::relu<float>(rng));
    layers_f.merge(gradcheck::softmax_cross_entropy<float>(rng));
    layers_f.merge(gradcheck::dropout<float>(rng));
    layers_d.merge(gradcheck::conv1d<double>(rng));
    layers_d.merge(gradcheck::dense<double>(rng));
    layers_d.merge(gradcheck::maxpool<double>(rng));
    layers_d.merge(gradcheck::relu<double>(rng));
    layers_d.merge(gradcheck::softmax_cross_entropy<double>(rng));
    layers_d.merge(gradcheck::dropout<double>(rng));
  }
  int shapes = 0;
  for (; shapes < 60; ++shapes) {
    const auto s = gradcheck::random_shape(rng);
    net_f.merge(gradcheck::network<float>(rng, s));
    net_d.merge(gradcheck::network<double>(rng, s));
  }
  o.detail << "shapes=" << shapes << " layers f32 " << layers_f.max_rel << " f64 " << layers_d.max_rel
           << ", network f32 " << net_f.max_rel << " f64 " << net_d.max_rel;
  o.check(layers_f.max_rel <= 1e-3 && net_f.max_rel <= 1e-3, "float32 rel > 1e-3");
  o.check(layers_d.max_rel <= 1e-6 && net_d.max_rel <= 1e-6, "float64 rel > 1e-6");
  o.check(shapes >= 50, "fewer than 50 shapes");
}

// --- fixed facts ------------------------------------------------------------------------

void fixed_facts(Outcome& o) {
  const std::vector<std::string> trigrams{"<pr", "pri", "riv", "iva", "vac", "acy", "cy>"};
  o.check(char_ngrams("privacy", 3, 3) == trigrams, "privacy trigrams");

  const EmbeddingConfig e;
  o.check(e.dim == 300 && e.n_min == 3 && e.n_max == 6 && e.epochs == 5 && e.learning_rate == 0.05,
          "embedding defaults");
  const ClassifierConfig c;
  o.check(c.n_filters == 400 && c.kernel_size == 4 && c.fc_units == 256 && c.epochs == 50 &&
              c.learning_rate == 0.001,
          "classifier defaults");

  const std::vector<int> accept{2, 2, 2, 7}, discuss{2, 2, 7, 7}, reject{1, 2, 3, 4};
  const auto a = consolidate(accept);
  const auto d = consolidate(discuss);
  const auto r = consolidate(reject);
  o.check(a.status == ConsolidationStatus::Accepted && a.gold_label == 2, "3-1 accepts");
  o.check(d.status == ConsolidationStatus::Discuss, "2-2 discusses");
  o.check(r.status == ConsolidationStatus::Rejected, "1-1-1-1 rejects");
  o.detail << "trigrams, config defaults, consolidation examples";
}

// --- oracles --------------------------------------------------------------------------

void oracle_equivalence(Outcome& o) {
  Rng rng(7);
  int select_ok = 0;
  for (int m = 0; m < 1000; ++m) {
    std::vector<QueryCandidate> cands;
    const auto rows = rng.below(80);
    for (std::size_t i = 0; i < rows; ++i) {
      cands.push_back(make_candidate({"d" + std::to_string(rng.below(10)), static_cast<int>(i)},
                                     prediction_from_probs(testing::random_probs(rng, 18, rng.uniform(0, 15)))));
    }
    const int budget = static_cast<int>(rng.below(100));
    const double threshold = rng.uniform(0, 0.9);
    select_ok += select_queries(cands, budget, threshold) == oracle::select_queries(cands, budget, threshold);
  }
  o.check(select_ok == 1000, "select_queries mismatch");

  int consolidate_ok = 0, combos = 0;
  std::vector<int> labels(4);
  for (int a = 0; a <= 18; ++a)
    for (int b = 0; b <= 18; ++b)
      for (int c = 0; c <= 18; ++c)
        for (int d = 0; d <= 18; ++d) {
          labels = {a, b, c, d};
          const auto got = consolidate(labels);
          const auto want = oracle::consolidate4({a, b, c, d});
          ++combos;
          consolidate_ok += got.status == want.status && got.gold_label == want.gold &&
                            std::abs(got.agreement - want.agreement) < 1e-12;
        }
  o.check(consolidate_ok == combos, "consolidate mismatch");

  int metrics_ok = 0;
  for (int t = 0; t < 500; ++t) {
    const int k = 1 + static_cast<int>(rng.below(18));
    const auto n = 1 + rng.below(80);
    std::vector<int> p(n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = static_cast<int>(rng.below(k));
      p[i] = rng.bernoulli(0.5) ? g[i] : static_cast<int>(rng.below(k));
    }
    metrics_ok += oracle::metrics_equal(nn::compute_metrics(p, g, k), oracle::metrics(p, g, k));
  }
  o.check(metrics_ok == 500, "compute_metrics mismatch");
  o.detail << "select " << select_ok << "/1000, consolidate " << consolidate_ok << "/" << combos
           << ", metrics " << metrics_ok << "/500";
}

// --- synthetic training -------------------------------------------------------------

const testing::TrainedSynthetic& trained() {
  static const auto fixture = [] {
    synthetic::Vocabulary vocab{synthetic::Spec{}};
    auto train = synthetic::make_corpus(vocab, 40, 6, "train", 1);
    auto test = synthetic::make_corpus(vocab, 10, 6, "test", 1001);
    auto sentences = synthetic::sentences_of(train);
    const auto more = synthetic::sentences_of(test);
    sentences.insert(sentences.end(), more.begin(), more.end());
    auto embeddings = train_skipgram(sentences, synthetic::small_embedding_config(1)).model;
    auto config = synthetic::small_classifier_config(1);
    config.epochs = 50;
    auto result = train_classifier(train.labeled, {}, embeddings, config);
    return testing::TrainedSynthetic{std::move(vocab), std::move(train), std::move(test),
                                     std::move(embeddings), config, std::move(result.model),
                                     std::move(result.history)};
  }();
  return fixture;
}

void synthetic_training(Outcome& o) {
  synthetic::Vocabulary vocab{synthetic::Spec{}};
  const auto train = synthetic::make_corpus(vocab, 40, 6, "train", 1);
  auto sentences = synthetic::sentences_of(train);
  const auto more = synthetic::sentences_of(synthetic::make_corpus(vocab, 10, 6, "test", 1001));
  sentences.insert(sentences.end(), more.begin(), more.end());
  const auto embeddings = train_skipgram(sentences, synthetic::small_embedding_config(1)).model;
  const auto before = embeddings.checksum();

  const auto& f = trained();
  o.check(f.embeddings.checksum() == before, "fixture embeddings differ from a fresh build");
  const auto report = evaluate(f.model, f.embeddings, f.test.labeled);
  o.check(f.embeddings.checksum() == before, "training changed the embedding checksum");
  o.check(f.model.embedding_checksum() == before, "model records another checksum");
  o.check(static_cast<int>(f.history.size()) <= 50, "more than 50 epochs");
  o.check(report.accuracy >= 0.95, "accuracy < 0.95");
  o.detail << "train " << f.train.labeled.size() << " test " << f.test.labeled.size() << ", epochs "
           << f.history.size() << ", test accuracy " << report.accuracy << ", macro-F1 " << report.macro_f1;
}

// --- active learning -----------------------------------------------------------------

void active_learning(Outcome& o) {
  const synthetic::ExperimentSpec spec;
  const double target = 0.90;
  std::vector<double> al_labels, rnd_labels;
  std::vector<double> mean_f1(4, 0.0);
  const int seeds = 5;
  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    const auto data = synthetic::make_experiment_data(spec, seed);
    const auto al = synthetic::run_experiment(spec, data, QueryStrategy::Margin, seed);
    const auto rnd = synthetic::run_experiment(spec, data, QueryStrategy::Random, seed);
    const auto seed_size = static_cast<double>(data.seed.labeled.size());
    // A run that never reaches the target is charged the whole horizon.
    auto extra = [&](const synthetic::ExperimentTrace& t) {
      const auto reached = t.labels_to_reach(target);
      return static_cast<double>(reached ? *reached : t.labels.back()) - seed_size;
    };
    al_labels.push_back(extra(al));
    rnd_labels.push_back(extra(rnd));
    for (std::size_t i = 0; i < mean_f1.size() && i < al.macro_f1.size(); ++i) {
      mean_f1[i] += al.macro_f1[i] / seeds;
    }
  }
  const double al_mean = std::accumulate(al_labels.begin(), al_labels.end(), 0.0) / seeds;
  const double rnd_mean = std::accumulate(rnd_labels.begin(), rnd_labels.end(), 0.0) / seeds;
  const double ratio = rnd_mean > 0 ? al_mean / rnd_mean : 1.0;
  o.check(ratio <= 0.6, "AL needs more than 60% of random's labels");
  // Iterations 1..3 follow the seed model at index 0.
  bool monotone = true;
  for (std::size_t i = 2; i <= 3; ++i) monotone &= mean_f1[i] >= mean_f1[i - 1];
  o.check(monotone, "mean F1 decreases within the first 3 iterations");
  o.detail << "labels beyond seed to F1 " << target << ": margin " << al_mean << ", random " << rnd_mean
           << ", ratio " << ratio << "; mean F1 iterations 1-3: " << mean_f1[1] << " " << mean_f1[2]
           << " " << mean_f1[3];
}

// --- stopping rule -------------------------------------------------------------------

void stopping_rule(Outcome& o) {
  const std::vector<double> f1{0.79, 0.82, 0.85, 0.87, 0.88, 0.881, 0.8812};
  int stopped_at = 0;
  for (std::size_t n = 1; n <= f1.size() && !stopped_at; ++n) {
    if (should_stop(std::span<const double>(f1.data(), n), 0.002, 2)) stopped_at = static_cast<int>(n);
  }
  o.check(stopped_at == 7, "did not stop exactly at iteration 7");
  o.detail << "stops at iteration " << stopped_at;
}

// --- compliance ----------------------------------------------------------------------

void compliance(Outcome& o) {
  const auto& f = trained();
  // Planted requirement codes per policy, and the coverage expected from them.
  const std::vector<std::vector<int>> planted{
      {1, 2, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18}, {4}, {5, 6, 7, 8, 9, 10},
      {11, 12, 13, 14, 15, 16, 17, 18}};
  Rng rng(5150);
  std::vector<ComplianceVector> vectors;
  bool vectors_ok = true;
  for (std::size_t p = 0; p < planted.size(); ++p) {
    PolicyDocument doc;
    doc.doc_id = "policy" + std::to_string(p + 1);
    int seg = 0;
    for (const int code : planted[p]) {
      const auto text = f.vocab.sentence(code, rng) + " " + f.vocab.sentence(code, rng);
      doc.segments.push_back({doc.doc_id, seg++, text, normalize(text)});
    }
    vectors.push_back(measure_policy(f.model, f.embeddings, doc, 0.5));
    std::array<bool, kNumRequirements> expected{};
    for (const int code : planted[p]) expected[static_cast<std::size_t>(code - 1)] = true;
    if (vectors.back().covered != expected) {
      vectors_ok = false;
      o.detail << " " << doc.doc_id << " covers " << vectors.back().count();
    }
  }
  o.check(vectors_ok, "coverage vectors differ from the planted ones");
  const auto summary = aggregate(vectors);
  std::array<std::size_t, kNumRequirements + 1> histogram{};
  histogram[3] = histogram[18] = histogram[1] = histogram[6] = histogram[8] = 1;
  o.check(summary.histogram == histogram, "histogram");
  o.check(std::abs(summary.full_compliance - 0.2) < 1e-12, "5-policy full compliance != 0.2");

  std::vector<ComplianceVector> hundred(100);
  for (std::size_t i = 0; i < hundred.size(); ++i) {
    hundred[i].doc_id = "p" + std::to_string(i);
    for (std::size_t c = 0; c < kNumRequirements; ++c) hundred[i].covered[c] = i < 3 || c % 2 == i % 2;
  }
  const auto s100 = aggregate(hundred);
  o.check(std::abs(s100.full_compliance - 0.03) < 1e-12, "100-vector full compliance != 3%");
  o.detail << "5-policy histogram ok=" << (summary.histogram == histogram)
           << ", 100-vector full compliance " << s100.full_compliance * 100 << "%";
}

// --- determinism and round-trips --------------------------------------------------------

bool same_files(const fs::path& a, const fs::path& b, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    if (testing::slurp(a / n) != testing::slurp(b / n)) return false;
  }
  return true;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("'") + GDPRCTL_PATH + "' " + args + " >/dev/null 2>&1";
  return std::system(cmd.c_str());
}

void determinism(Outcome& o) {
  testing::TempDir dir;
  // Through the CLI, twice with the same seed.
  testing::spit(dir / "small.ini",
                "[embedding]\ndim = 16\nepochs = 10\nbucket_count = 4096\nsubsample_t = 0.001\n"
                "[classifier]\nn_filters = 16\nfc_units = 16\nmax_len = 24\nepochs = 5\n");
  const auto cfg = " --config " + (dir / "small.ini").string() + " --seed 3";
  bool cli_ok = run_cli("synth --per-class 3 --out " + (dir / "syn").string()) == 0;
  for (const char* run : {"1", "2"}) {
    cli_ok &= run_cli("embed-train" + cfg + " --in " + (dir / "syn/documents.jsonl").string() + " --out " +
                      (dir / ("emb" + std::string(run))).string()) == 0;
    cli_ok &= run_cli("train" + cfg + " --in " + (dir / "syn/documents.jsonl").string() + " --embeddings " +
                      (dir / "emb1").string() + " --gold " + (dir / "syn/gold.jsonl").string() + " --out " +
                      (dir / ("model" + std::string(run))).string()) == 0;
  }
  o.check(cli_ok, "gdprctl failed");
  const bool emb_same = cli_ok && same_files(dir / "emb1", dir / "emb2", {"manifest.json", "input.f32", "output.f32"});
  const bool model_same = cli_ok && same_files(dir / "model1", dir / "model2", {"manifest.json", "weights.f32"});
  o.check(emb_same, "embed-train reruns differ");
  o.check(model_same, "train reruns differ");

  // Corpus: load -> save reproduces the file.
  const auto docs = load_corpus(dir / "syn/documents.jsonl");
  save_corpus(docs, dir / "docs2.jsonl");
  const bool corpus_ok = load_corpus(dir / "docs2.jsonl") == docs &&
                         testing::slurp(dir / "docs2.jsonl") == testing::slurp(dir / "syn/documents.jsonl");
  o.check(corpus_ok, "corpus round-trip");

  // Model: loaded copy predicts identically and re-saves to the same bytes.
  const auto emb = load_embeddings(dir / "emb1");
  const auto model = load_model(dir / "model1");
  save_model(model, dir / "model3");
  bool model_ok = same_files(dir / "model1", dir / "model3", {"manifest.json", "weights.f32"});
  for (const auto& d : docs) {
    for (const auto& s : d.segments) {
      const auto a = predict(model, emb, std::span<const std::string>(s.tokens));
      const auto b = predict(load_model(dir / "model3"), emb, std::span<const std::string>(s.tokens));
      model_ok &= a.probs == b.probs;
      break;
    }
  }
  o.check(model_ok, "model round-trip");

  // Labels: a store with audit history and a resolved discussion.
  auto at = [](long s) { return Timestamp(std::chrono::seconds(s)); };
  LabelStore store;
  store.add_documents(docs);
  const SegmentRef a{docs[0].doc_id, 0}, b{docs[1].doc_id, 0};
  for (int i = 0; i < 4; ++i) store.record_label(a, "ann" + std::to_string(i), 5, at(1700000000 + i));
  store.record_label(a, "ann0", 5, at(1700000100));
  for (int i = 0; i < 4; ++i) store.record_label(b, "ann" + std::to_string(i), i < 2 ? 3 : 4, at(1700000200 + i));
  store.resolve_discussion(b, Resolution::accept(4), "lead", at(1700000300));
  store.save(dir / "labels");
  LabelStore loaded;
  loaded.add_documents(docs);
  loaded.load(dir / "labels");
  loaded.save(dir / "labels2");
  const bool labels_ok = same_files(dir / "labels", dir / "labels2", {"labels.jsonl", "consolidations.jsonl"}) &&
                         loaded.audit_log(a).size() == 5 && loaded.gold_dataset().size() == 2;
  o.check(labels_ok, "label round-trip");
  o.detail << "embed-train rerun identical=" << emb_same << ", train rerun identical=" << model_same
           << ", corpus/model/labels round-trip=" << corpus_ok << model_ok << labels_ok;
}

}  // namespace
}  // namespace gdpr

int main() {
  using namespace gdpr;
  criterion("gradient correctness (f32 <= 1e-3, f64 <= 1e-6, >= 50 shapes)", 60, gradients);
  criterion("fixed unit facts (n-grams, config defaults, consolidation)", 5, fixed_facts);
  criterion("oracle equivalence (select_queries, consolidate, metrics)", 120, oracle_equivalence);
  criterion("synthetic end-to-end training (accuracy >= 0.95)", 600, synthetic_training);
  criterion("active-learning benefit (<= 60% of random's labels, 5 seeds)", 1200, active_learning);
  criterion("stopping rule (stops at iteration 7)", 5, stopping_rule);
  criterion("compliance pipeline (fixture vectors, histogram, 3% full compliance)", 120, compliance);
  criterion("determinism and round-trips", 300, determinism);
  std::printf("%s: %d failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
