#include "gdpr/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "gdpr/errors.hpp"

namespace gdpr::synthetic {

namespace {

constexpr std::string_view kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p",
                                        "r", "s", "t", "v", "z", "br", "tr", "pl", "gr"};
constexpr std::string_view kVowels[] = {"a", "e", "i", "o", "u"};

std::string make_word(Rng& rng) {
  std::string w;
  const auto syllables = 2 + rng.below(2);
  for (std::uint64_t s = 0; s < syllables; ++s) {
    w += kOnsets[rng.below(std::size(kOnsets))];
    w += kVowels[rng.below(std::size(kVowels))];
  }
  return w;
}

}  // namespace

Vocabulary::Vocabulary(const Spec& spec) : spec_(spec) {
  if (spec.n_classes < 2 || spec.keywords_per_class < 1 || spec.filler_words < 1 ||
      spec.min_filler < 1 || spec.max_filler < spec.min_filler || spec.planted_per_segment < 1 ||
      spec.topic_words_per_class < 0 || spec.markers_per_segment < 0 || !(spec.topic_share >= 0 && spec.topic_share <= 1)) {
    throw ConfigError("synthetic spec: invalid sizes");
  }
  Rng rng(spec.vocabulary_seed, 0x70c4);
  std::set<std::string> used;
  const auto& stop = StopwordList::english();
  auto fresh = [&] {
    for (;;) {
      auto w = make_word(rng);
      if (!stop.contains(w) && used.insert(w).second) return w;
    }
  };
  auto fresh_list = [&](int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back(fresh());
    return out;
  };

  filler_ = fresh_list(spec.filler_words);
  std::map<int, int> partner;
  for (const auto& [a, b] : spec.confusable_pairs) {
    if (a < 1 || b < 1 || a > spec.n_classes || b > spec.n_classes || a == b ||
        partner.count(a) || partner.count(b)) {
      throw ConfigError("synthetic spec: invalid confusable pair");
    }
    partner[a] = b;
    partner[b] = a;
  }
  for (int code = 1; code <= spec.n_classes; ++code) {
    const auto it = partner.find(code);
    if (it != partner.end() && it->second < code) {
      keywords_[code] = keywords_[it->second];
      topics_[code] = topics_[it->second];
    } else {
      keywords_[code] = fresh_list(spec.keywords_per_class);
      topics_[code] = fresh_list(spec.topic_words_per_class);
    }
    if (it != partner.end()) markers_[code] = fresh_list(spec.markers_per_class);
  }
}

const std::vector<std::string>& Vocabulary::keywords(int code) const {
  const auto it = keywords_.find(code);
  if (it == keywords_.end()) throw InvalidLabel("synthetic: no class " + std::to_string(code));
  return it->second;
}

const std::vector<std::string>& Vocabulary::topic_words(int code) const {
  const auto it = topics_.find(code);
  if (it == topics_.end()) throw InvalidLabel("synthetic: no class " + std::to_string(code));
  return it->second;
}

const std::vector<std::string>& Vocabulary::markers(int code) const {
  static const std::vector<std::string> none;
  const auto it = markers_.find(code);
  return it == markers_.end() ? none : it->second;
}

std::string Vocabulary::sentence(int code, Rng& rng) const {
  const auto& kw = keywords(code);
  const auto n_filler = static_cast<std::uint64_t>(spec_.min_filler) +
                        rng.below(static_cast<std::uint64_t>(spec_.max_filler - spec_.min_filler + 1));
  std::vector<std::string> words;
  const auto& topic = topic_words(code);
  for (std::uint64_t i = 0; i < n_filler; ++i) {
    const auto& pool = !topic.empty() && rng.bernoulli(spec_.topic_share) ? topic : filler_;
    words.push_back(pool[rng.below(pool.size())]);
  }

  std::vector<std::string> planted;
  std::vector<std::size_t> order(kw.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order.begin(), order.end(), rng);
  for (int i = 0; i < spec_.planted_per_segment; ++i) {
    planted.push_back(kw[order[static_cast<std::size_t>(i) % order.size()]]);
  }
  const auto& mk = markers(code);
  if (!mk.empty()) {
    std::vector<std::size_t> pick(mk.size());
    for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
    shuffle(pick.begin(), pick.end(), rng);
    const auto n = std::min(pick.size(), static_cast<std::size_t>(spec_.markers_per_segment));
    for (std::size_t i = 0; i < n; ++i) planted.push_back(mk[pick[i]]);
  }
  for (auto& w : planted) {
    const auto pos = rng.below(words.size() + 1);
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(pos), std::move(w));
  }

  std::string text;
  for (const auto& w : words) {
    if (!text.empty()) text += ' ';
    text += w;
  }
  text[0] = static_cast<char>(text[0] - 'a' + 'A');
  return text + ".";
}

Corpus make_corpus(const Vocabulary& vocab, int per_class, int segments_per_doc,
                   const std::string& doc_prefix, std::uint64_t seed) {
  return make_corpus(vocab, std::vector<int>(static_cast<std::size_t>(vocab.spec().n_classes), per_class),
                     segments_per_doc, doc_prefix, seed);
}

Corpus make_corpus(const Vocabulary& vocab, const std::vector<int>& per_class,
                   int segments_per_doc, const std::string& doc_prefix, std::uint64_t seed) {
  if (per_class.size() != static_cast<std::size_t>(vocab.spec().n_classes) ||
      std::any_of(per_class.begin(), per_class.end(), [](int n) { return n < 0; }) ||
      segments_per_doc < 1) {
    throw ConfigError("synthetic corpus: invalid sizes");
  }
  Rng rng(seed, 0xc0);
  std::vector<int> classes;
  for (int code = 1; code <= vocab.spec().n_classes; ++code) {
    for (int i = 0; i < per_class[static_cast<std::size_t>(code - 1)]; ++i) classes.push_back(code);
  }
  shuffle(classes.begin(), classes.end(), rng);

  Corpus out;
  const auto per_doc = static_cast<std::size_t>(segments_per_doc);
  for (std::size_t start = 0, doc = 0; start < classes.size(); start += per_doc, ++doc) {
    const std::size_t end = std::min(classes.size(), start + per_doc);
    char id[32];
    std::snprintf(id, sizeof id, "-%04zu", doc);
    PolicyDocument d;
    d.doc_id = doc_prefix + id;
    d.url = "https://" + doc_prefix + ".example/policy/" + std::to_string(doc);
    d.fetched_at = Timestamp{std::chrono::seconds{1'600'000'000}};
    std::vector<int> codes(classes.begin() + static_cast<std::ptrdiff_t>(start),
                           classes.begin() + static_cast<std::ptrdiff_t>(end));
    for (const int code : codes) {
      if (!d.plaintext.empty()) d.plaintext += "\n\n";
      d.plaintext += vocab.sentence(code, rng);
    }
    d.segments = segment(d.plaintext, d.doc_id);
    if (d.segments.size() != codes.size()) {
      throw StateError("synthetic corpus: a planted sentence was not kept as one segment");
    }
    for (std::size_t i = 0; i < codes.size(); ++i) {
      out.labeled.push_back({d.segments[i], codes[i]});
      out.labels[d.segments[i].ref()] = codes[i];
    }
    out.documents.push_back(std::move(d));
  }
  return out;
}

std::vector<std::vector<std::string>> sentences_of(const Corpus& corpus) {
  std::vector<std::vector<std::string>> out;
  for (const auto& d : corpus.documents) {
    for (const auto& s : d.segments) out.push_back(s.tokens);
  }
  return out;
}

EmbeddingConfig small_embedding_config(std::uint64_t seed) {
  EmbeddingConfig c;
  c.dim = 16;
  c.epochs = 10;
  c.bucket_count = 4096;
  c.subsample_t = 1e-3;
  c.seed = seed;
  return c;
}

ClassifierConfig small_classifier_config(std::uint64_t seed) {
  ClassifierConfig c;
  c.n_filters = 48;
  c.fc_units = 48;
  c.max_len = 24;
  c.epochs = 20;
  c.learning_rate = 0.005;
  c.batch_size = 16;
  c.seed = seed;
  return c;
}

}  // namespace gdpr::synthetic

namespace gdpr::synthetic {

ExperimentSpec::ExperimentSpec() {
  vocabulary.confusable_pairs = {{2, 7}, {14, 17}};
  vocabulary.markers_per_class = 6;
  vocabulary.markers_per_segment = 3;
  // Retrains start from a handful of labels; more, smaller steps keep them
  // from being undertrained.
  classifier.epochs = 60;
  classifier.batch_size = 8;
}

ExperimentData make_experiment_data(const ExperimentSpec& spec, std::uint64_t seed) {
  Vocabulary vocab(spec.vocabulary);
  auto seed_corpus = make_corpus(vocab, spec.seed_per_class, spec.segments_per_doc, "seed", seed * 3 + 0);
  std::vector<int> pool_counts(static_cast<std::size_t>(spec.vocabulary.n_classes), spec.pool_per_class);
  for (const auto& [a, b] : spec.vocabulary.confusable_pairs) {
    pool_counts[static_cast<std::size_t>(a - 1)] = spec.pool_per_paired_class;
    pool_counts[static_cast<std::size_t>(b - 1)] = spec.pool_per_paired_class;
  }
  auto pool = make_corpus(vocab, pool_counts, spec.segments_per_doc, "pool", seed * 3 + 1);
  auto validation =
      make_corpus(vocab, spec.validation_per_class, spec.segments_per_doc, "val", seed * 3 + 2);
  std::vector<std::vector<std::string>> text;
  for (const auto* c : {&seed_corpus, &pool, &validation}) {
    auto s = sentences_of(*c);
    text.insert(text.end(), s.begin(), s.end());
  }
  auto config = spec.embedding;
  config.seed = seed;
  auto embeddings = train_skipgram(text, config).model;
  return {std::move(vocab), std::move(seed_corpus), std::move(pool), std::move(validation),
          std::move(embeddings)};
}

std::optional<std::size_t> ExperimentTrace::labels_to_reach(double target) const {
  for (std::size_t i = 0; i < macro_f1.size(); ++i) {
    if (macro_f1[i] >= target) return labels[i];
  }
  return std::nullopt;
}

ExperimentTrace run_experiment(const ExperimentSpec& spec, const ExperimentData& data,
                               QueryStrategy strategy, std::uint64_t seed) {
  ActiveLearningContext ctx{data.embeddings, data.pool.documents, data.seed.labeled,
                            data.validation.labeled, {}, spec.classifier, {}};
  for (const auto* c : {&data.seed, &data.validation}) {
    for (const auto& d : c->documents) ctx.labeled_docs.insert(d.doc_id);
  }
  ctx.classifier.seed = seed;
  ctx.al.pool_policies = spec.pool_policies;
  ctx.al.budget = spec.budget;
  ctx.al.strategy = strategy;
  ctx.al.seed = seed;

  LabelStore store(ctx.al.n_annotators);
  const auto driver = oracle_annotator(
      [&](const SegmentRef& ref) { return data.pool.labels.at(ref); }, ctx.al.n_annotators);

  ExperimentTrace trace;
  auto model = train_classifier(ctx.seed_train, {}, ctx.embeddings, ctx.classifier).model;
  trace.labels.push_back(ctx.seed_train.size());
  trace.macro_f1.push_back(evaluate(model, ctx.embeddings, ctx.validation).macro_f1);
  for (int i = 0; i < spec.iterations; ++i) {
    auto result = run_iteration(model, ctx, store, trace.state, driver);
    model = std::move(result.model);
    trace.labels.push_back(trace.state.labels_used(ctx.seed_train.size()));
    trace.macro_f1.push_back(result.record.metrics.macro_f1);
  }
  return trace;
}

}  // namespace gdpr::synthetic
