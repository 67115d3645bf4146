#include "gdpr/active_learning.hpp"

#include <algorithm>
#include <thread>

#include "gdpr/errors.hpp"
#include "gdpr/labels.hpp"
#include "gdpr/rng.hpp"
#include "internal/binary_io.hpp"
#include "json.hpp"

namespace gdpr {

using nlohmann::ordered_json;

void ActiveLearningConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("active learning config: " + what); };
  if (pool_policies < 1) fail("pool_policies must be >= 1");
  if (budget < 0) fail("budget must be >= 0");
  if (!(discard_threshold >= 0 && discard_threshold <= 1)) fail("discard_threshold must be in [0, 1]");
  if (!(epsilon >= 0)) fail("epsilon must be >= 0");
  if (patience < 1) fail("patience must be >= 1");
  if (max_iters < 1) fail("max_iters must be >= 1");
  if (n_annotators < 1) fail("n_annotators must be >= 1");
  if (annotation_timeout.count() < 0 || poll_interval.count() <= 0) fail("invalid wait intervals");
  if (threads < 1) fail("threads must be >= 1");
}

std::string_view to_string(QueryStrategy strategy) noexcept {
  return strategy == QueryStrategy::Margin ? "margin" : "random";
}

QueryStrategy parse_query_strategy(std::string_view text) {
  if (text == "margin") return QueryStrategy::Margin;
  if (text == "random") return QueryStrategy::Random;
  throw ConfigError("unknown query strategy '" + std::string(text) + "' (margin, random)");
}

QueryCandidate make_candidate(const SegmentRef& ref, const Prediction& prediction) {
  return {ref, prediction.probs, prediction.top_class, prediction.second_class, prediction.margin};
}

PoolSample sample_pool(const std::vector<PolicyDocument>& corpus,
                       const std::set<std::string>& labeled_docs,
                       const std::set<SegmentRef>& excluded, int n_policies, std::uint64_t seed) {
  std::vector<const PolicyDocument*> eligible;
  for (const auto& d : corpus) {
    if (labeled_docs.count(d.doc_id)) continue;
    const bool any = std::any_of(d.segments.begin(), d.segments.end(),
                                 [&](const Segment& s) { return !excluded.count(s.ref()); });
    if (any) eligible.push_back(&d);
  }
  if (eligible.empty()) throw EmptyPool("no unlabeled policy left in the pool");
  std::sort(eligible.begin(), eligible.end(),
            [](const auto* a, const auto* b) { return a->doc_id < b->doc_id; });
  Rng rng(seed, 0x9001);
  shuffle(eligible.begin(), eligible.end(), rng);
  eligible.resize(std::min(eligible.size(), static_cast<std::size_t>(std::max(n_policies, 0))));
  std::sort(eligible.begin(), eligible.end(),
            [](const auto* a, const auto* b) { return a->doc_id < b->doc_id; });

  PoolSample out;
  for (const auto* d : eligible) {
    out.doc_ids.push_back(d->doc_id);
    std::vector<Segment> segs;
    for (const auto& s : d->segments) {
      if (!excluded.count(s.ref())) segs.push_back(s);
    }
    std::sort(segs.begin(), segs.end(),
              [](const Segment& a, const Segment& b) { return a.seg_id < b.seg_id; });
    out.segments.insert(out.segments.end(), segs.begin(), segs.end());
  }
  return out;
}

std::vector<QueryCandidate> select_queries(std::vector<QueryCandidate> candidates, int budget,
                                           double discard_threshold) {
  std::erase_if(candidates, [&](const QueryCandidate& c) {
    return c.probs.empty() ||
           static_cast<double>(*std::max_element(c.probs.begin(), c.probs.end())) <= discard_threshold;
  });
  std::sort(candidates.begin(), candidates.end(), [](const QueryCandidate& a, const QueryCandidate& b) {
    if (a.margin != b.margin) return a.margin < b.margin;
    return a.segment < b.segment;
  });
  if (candidates.size() > static_cast<std::size_t>(std::max(budget, 0))) {
    candidates.resize(static_cast<std::size_t>(std::max(budget, 0)));
  }
  return candidates;
}

std::vector<QueryCandidate> select_random(std::vector<QueryCandidate> candidates, int budget,
                                          std::uint64_t seed) {
  std::sort(candidates.begin(), candidates.end(),
            [](const auto& a, const auto& b) { return a.segment < b.segment; });
  Rng rng(seed, 0x7a4d);
  shuffle(candidates.begin(), candidates.end(), rng);
  if (candidates.size() > static_cast<std::size_t>(std::max(budget, 0))) {
    candidates.resize(static_cast<std::size_t>(std::max(budget, 0)));
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const auto& a, const auto& b) { return a.segment < b.segment; });
  return candidates;
}

bool should_stop(std::span<const double> val_macro_f1, double epsilon, int patience, int max_iters) {
  const auto n = val_macro_f1.size();
  if (n == 0) return false;
  if (n >= static_cast<std::size_t>(std::max(max_iters, 1))) return true;
  const auto p = static_cast<std::size_t>(std::max(patience, 1));
  if (n < p + 1) return false;
  for (std::size_t i = n - p; i < n; ++i) {
    if (!(val_macro_f1[i] - val_macro_f1[i - 1] < epsilon)) return false;
  }
  return true;
}

std::vector<double> ActiveLearningState::macro_f1_history() const {
  std::vector<double> out;
  for (const auto& r : history) out.push_back(r.metrics.macro_f1);
  return out;
}

std::size_t ActiveLearningState::labels_used(std::size_t seed_size) const {
  std::size_t n = seed_size;
  for (const auto& r : history) n += r.queries.size();
  return n;
}

// --- iteration ---------------------------------------------------------------------

AnnotationDriver oracle_annotator(std::function<int(const SegmentRef&)> oracle, int n_annotators) {
  return [oracle = std::move(oracle), n_annotators](const std::vector<QueryCandidate>& batch,
                                                    LabelStore& store) {
    for (const auto& q : batch) {
      const int label = oracle(q.segment);
      for (int a = 1; a <= n_annotators; ++a) {
        store.record_label(q.segment, "oracle-" + std::to_string(a), label, Timestamp{});
      }
    }
  };
}

const IterationRecord& issue_queries(const CnnClassifier& model, const ActiveLearningContext& ctx,
                                     LabelStore& store, ActiveLearningState& state) {
  ctx.al.validate();
  if (state.pending) throw StateError("a query batch is already pending");
  const int iteration = state.next_iteration();
  const std::uint64_t round_seed = ctx.al.seed * 1000003ULL + static_cast<std::uint64_t>(iteration);
  auto sample = sample_pool(ctx.pool, ctx.labeled_docs, state.ledger, ctx.al.pool_policies, round_seed);
  const auto predictions = predict_all(model, ctx.embeddings, sample.segments, ctx.al.threads);

  std::vector<QueryCandidate> candidates;
  candidates.reserve(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    candidates.push_back(make_candidate(sample.segments[i].ref(), predictions[i]));
  }
  IterationRecord record;
  record.iteration = iteration;
  record.policies_sampled = sample.doc_ids;
  record.candidates_scored = candidates.size();
  record.candidates_qualified = static_cast<std::size_t>(
      std::count_if(candidates.begin(), candidates.end(), [&](const QueryCandidate& c) {
        return static_cast<double>(*std::max_element(c.probs.begin(), c.probs.end())) >
               ctx.al.discard_threshold;
      }));
  record.queries = ctx.al.strategy == QueryStrategy::Margin
                       ? select_queries(std::move(candidates), ctx.al.budget, ctx.al.discard_threshold)
                       : select_random(std::move(candidates), ctx.al.budget, round_seed);

  for (const auto& s : sample.segments) {
    if (!store.has_segment(s.ref())) store.add_segment(s);
  }
  for (const auto& q : record.queries) state.ledger.insert(q.segment);
  state.pending = std::move(record);
  return *state.pending;
}

bool queries_settled(const LabelStore& store, const ActiveLearningState& state) {
  if (!state.pending) return true;
  for (const auto& q : state.pending->queries) {
    const auto r = store.consolidation(q.segment);
    if (!r || r->status == ConsolidationStatus::Discuss) return false;
  }
  return true;
}

IterationResult finish_iteration(const ActiveLearningContext& ctx, const LabelStore& store,
                                 ActiveLearningState& state) {
  if (!state.pending) throw StateError("no query batch is pending");
  if (!queries_settled(store, state)) throw StateError("pending queries are not consolidated yet");
  auto record = *state.pending;

  std::set<SegmentRef> seen;
  std::vector<LabeledSegment> train = ctx.seed_train;
  for (const auto& ex : train) seen.insert(ex.segment.ref());
  for (auto& ex : store.gold_dataset()) {
    const auto ref = ex.segment.ref();
    if (state.ledger.count(ref) && seen.insert(ref).second) train.push_back(std::move(ex));
  }
  for (const auto& q : record.queries) {
    const auto r = store.consolidation(q.segment);
    if (r && r->status == ConsolidationStatus::Accepted && r->gold_label &&
        *r->gold_label != kOtherCode) {
      ++record.labels_received;
    }
  }
  record.training_size = train.size();

  auto trained = train_classifier(train, {}, ctx.embeddings, ctx.classifier);
  record.metrics = evaluate(trained.model, ctx.embeddings, ctx.validation, ctx.al.threads);
  state.history.push_back(record);
  state.pending.reset();
  return {std::move(trained.model), std::move(record)};
}

IterationResult run_iteration(const CnnClassifier& model, const ActiveLearningContext& ctx,
                              LabelStore& store, ActiveLearningState& state,
                              const AnnotationDriver& driver) {
  if (!state.pending) issue_queries(model, ctx, store, state);
  if (driver) driver(state.pending->queries, store);
  const auto deadline = std::chrono::steady_clock::now() + ctx.al.annotation_timeout;
  while (!queries_settled(store, state)) {
    if (std::chrono::steady_clock::now() >= deadline) {
      throw IterationStalled("iteration " + std::to_string(state.pending->iteration) +
                             " is still waiting for annotations");
    }
    std::this_thread::sleep_for(ctx.al.poll_interval);
  }
  return finish_iteration(ctx, store, state);
}

// --- checkpoint --------------------------------------------------------------------

namespace {

ordered_json ref_json(const SegmentRef& r) { return ordered_json::array({r.doc_id, r.seg_id}); }
SegmentRef ref_from(const nlohmann::json& j) {
  return {j.at(0).get<std::string>(), j.at(1).get<int>()};
}

ordered_json metrics_json(const nn::MetricsReport& m) {
  ordered_json j;
  auto per = ordered_json::array();
  for (const auto& c : m.per_class) {
    per.push_back({{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  }
  j["per_class"] = std::move(per);
  j["macro_precision"] = m.macro_precision;
  j["macro_recall"] = m.macro_recall;
  j["macro_f1"] = m.macro_f1;
  j["accuracy"] = m.accuracy;
  return j;
}

nn::MetricsReport metrics_from(const nlohmann::json& j) {
  nn::MetricsReport m;
  for (const auto& c : j.at("per_class")) {
    m.per_class.push_back({c.at("precision").get<double>(), c.at("recall").get<double>(),
                           c.at("f1").get<double>(), c.at("support").get<std::size_t>()});
  }
  m.macro_precision = j.at("macro_precision").get<double>();
  m.macro_recall = j.at("macro_recall").get<double>();
  m.macro_f1 = j.at("macro_f1").get<double>();
  m.accuracy = j.at("accuracy").get<double>();
  return m;
}

ordered_json record_json(const IterationRecord& r) {
  ordered_json j;
  j["iteration"] = r.iteration;
  j["policies_sampled"] = r.policies_sampled;
  j["candidates_scored"] = r.candidates_scored;
  j["candidates_qualified"] = r.candidates_qualified;
  auto queries = ordered_json::array();
  for (const auto& q : r.queries) {
    ordered_json e;
    e["segment"] = ref_json(q.segment);
    e["probs"] = q.probs;
    e["top1"] = q.top1;
    e["top2"] = q.top2;
    e["margin"] = q.margin;
    queries.push_back(std::move(e));
  }
  j["queries"] = std::move(queries);
  j["labels_received"] = r.labels_received;
  j["training_size"] = r.training_size;
  j["metrics"] = metrics_json(r.metrics);
  return j;
}

IterationRecord record_from(const nlohmann::json& j) {
  IterationRecord r;
  r.iteration = j.at("iteration").get<int>();
  r.policies_sampled = j.at("policies_sampled").get<std::vector<std::string>>();
  r.candidates_scored = j.at("candidates_scored").get<std::size_t>();
  r.candidates_qualified = j.at("candidates_qualified").get<std::size_t>();
  for (const auto& e : j.at("queries")) {
    r.queries.push_back({ref_from(e.at("segment")), e.at("probs").get<std::vector<float>>(),
                         e.at("top1").get<int>(), e.at("top2").get<int>(),
                         e.at("margin").get<double>()});
  }
  r.labels_received = j.at("labels_received").get<std::size_t>();
  r.training_size = j.at("training_size").get<std::size_t>();
  r.metrics = metrics_from(j.at("metrics"));
  return r;
}

}  // namespace

void save_state(const ActiveLearningState& state, const std::filesystem::path& file) {
  ordered_json j;
  j["format_version"] = 1;
  j["iteration"] = state.history.size();
  auto ledger = ordered_json::array();
  for (const auto& r : state.ledger) ledger.push_back(ref_json(r));
  j["query_ledger"] = std::move(ledger);
  j["pending"] = state.pending ? record_json(*state.pending) : ordered_json(nullptr);
  auto history = ordered_json::array();
  for (const auto& r : state.history) history.push_back(record_json(r));
  j["history"] = std::move(history);
  auto f1 = ordered_json::array();
  for (const auto v : state.macro_f1_history()) f1.push_back(v);
  j["macro_f1_history"] = std::move(f1);
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  internal::write_text_file(file, j.dump(2) + "\n");
}

ActiveLearningState load_state(const std::filesystem::path& file) {
  try {
    const auto j = nlohmann::json::parse(internal::read_text_file(file));
    if (j.at("format_version").get<int>() != 1) throw FormatError("unsupported iteration state version");
    ActiveLearningState s;
    for (const auto& r : j.at("query_ledger")) s.ledger.insert(ref_from(r));
    if (!j.at("pending").is_null()) s.pending = record_from(j.at("pending"));
    for (const auto& r : j.at("history")) s.history.push_back(record_from(r));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(file.filename().string() + ": " + e.what());
  }
}

}  // namespace gdpr
