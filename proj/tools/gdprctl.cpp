// gdprctl: command-line driver for the disclosure-classification pipeline.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gdpr/active_learning.hpp"
#include "gdpr/annotation.hpp"
#include "gdpr/classifier.hpp"
#include "gdpr/compliance.hpp"
#include "gdpr/config.hpp"
#include "gdpr/corpus.hpp"
#include "gdpr/embeddings.hpp"
#include "gdpr/errors.hpp"
#include "gdpr/fetch.hpp"
#include "gdpr/html_text.hpp"
#include "gdpr/nn/metrics.hpp"
#include "gdpr/service.hpp"
#include "gdpr/synthetic.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace gdpr;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitMissingInput = 2;
constexpr int kExitConfig = 3;

class MissingInput : public Error {
 public:
  explicit MissingInput(const std::string& message) : Error("missing_input", message) {}
};

void require_exists(const fs::path& p, const std::string& what) {
  if (p.empty() || !fs::exists(p)) throw MissingInput(what + " not found: " + p.string());
}

void emit(const ordered_json& j) { std::cout << j.dump() << std::endl; }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + p.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + p.string());
}

// Flags shared by every subcommand.
struct Common {
  std::string config = "default";
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "Config file, or 'default'");
  sub->add_option("--seed", c.seed, "Seed for every random component");
  sub->add_option("--threads", c.threads, "Worker threads for prediction");
  sub->add_option("--out", c.out, "Output path");
}

RunConfig resolve(const Common& c) {
  auto cfg = load_run_config(c.config);
  if (c.seed) {
    cfg.embedding.seed = *c.seed;
    cfg.classifier.seed = *c.seed;
    cfg.active_learning.seed = *c.seed;
  }
  if (c.threads) cfg.active_learning.threads = *c.threads;
  cfg.validate();
  return cfg;
}

fs::path out_or(const Common& c, const fs::path& fallback) {
  return c.out.empty() ? fallback : fs::path(c.out);
}

// Per-document metadata written by `fetch` next to the pages.
struct PageInfo {
  std::string url;
  Timestamp fetched_at{};
};

std::map<std::string, PageInfo> read_index(const fs::path& dir) {
  std::map<std::string, PageInfo> out;
  const auto file = dir / "index.jsonl";
  if (!fs::exists(file)) return out;
  std::istringstream in(read_file(file));
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PageInfo info;
      info.url = j.at("url").get<std::string>();
      if (j.contains("fetched_at") && j["fetched_at"].is_string()) {
        info.fetched_at = parse_iso8601(j["fetched_at"].get<std::string>());
      }
      out[j.at("doc_id").get<std::string>()] = info;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(number, "index.jsonl: " + std::string(e.what()));
    }
  }
  return out;
}

// Regular files with `extension` in `dir`, sorted by name.
std::vector<fs::path> files_with_extension(const fs::path& dir, const std::string& extension) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == extension) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<PolicyDocument> load_documents(const fs::path& p) {
  require_exists(p, "documents file");
  return load_corpus(p);
}

EmbeddingModel load_embedding_dir(const fs::path& p) {
  require_exists(p, "embeddings directory");
  return load_embeddings(p);
}

CnnClassifier load_model_dir(const fs::path& p) {
  require_exists(p, "model directory");
  return load_model(p);
}

// Gold labels from a gold.jsonl file or from a label-store directory.
std::vector<LabeledSegment> load_labels(const std::string& gold, const std::string& labels_dir,
                                        const std::vector<PolicyDocument>& docs, int n_annotators) {
  if (!gold.empty()) {
    require_exists(gold, "gold file");
    return load_gold(gold, docs);
  }
  if (!labels_dir.empty()) {
    require_exists(labels_dir, "labels directory");
    LabelStore store(n_annotators);
    store.add_documents(docs);
    store.load(labels_dir);
    return store.gold_dataset();
  }
  throw MissingInput("pass --gold FILE or --labels DIR");
}

ordered_json metrics_json(const nn::MetricsReport& m) {
  ordered_json j;
  j["macro_precision"] = m.macro_precision;
  j["macro_recall"] = m.macro_recall;
  j["macro_f1"] = m.macro_f1;
  j["accuracy"] = m.accuracy;
  return j;
}

// split.json beside a trained model records which documents were held out.
void save_split(const DatasetSplit& split, double ratio, std::uint64_t seed, const fs::path& file) {
  ordered_json j;
  j["ratio"] = ratio;
  j["seed"] = seed;
  j["train_docs"] = split.train_docs;
  j["test_docs"] = split.test_docs;
  write_file(file, j.dump(2) + "\n");
}

std::optional<std::set<std::string>> load_test_docs(const fs::path& model_dir) {
  const auto file = model_dir / "split.json";
  if (!fs::exists(file)) return std::nullopt;
  const auto j = nlohmann::json::parse(read_file(file));
  const auto docs = j.at("test_docs").get<std::vector<std::string>>();
  return std::set<std::string>(docs.begin(), docs.end());
}

// --- subcommands -----------------------------------------------------------------------

struct FetchArgs {
  std::string urls;
  int delay_ms = 1000;
  int timeout_ms = 15000;
};

int cmd_fetch(const Common& common, const FetchArgs& a) {
  resolve(common);
  require_exists(a.urls, "URL list");
  std::ifstream in(a.urls);
  const auto urls = read_url_list(in);
  const fs::path dir = out_or(common, "pages");
  fs::create_directories(dir);

  FetchOptions options;
  options.politeness_delay = std::chrono::milliseconds(a.delay_ms);
  options.timeout = std::chrono::milliseconds(a.timeout_ms);
  Fetcher fetcher(options);
  const auto outcomes = fetcher.fetch_all(urls, static_cast<unsigned>(common.threads.value_or(1)));

  std::string index;
  std::size_t ok = 0;
  for (const auto& o : outcomes) {
    ordered_json j;
    j["doc_id"] = doc_id_for_url(o.url);
    j["url"] = o.url;
    if (o.result) {
      ++ok;
      write_file(dir / (doc_id_for_url(o.url) + ".html"), o.result->body);
      j["final_url"] = o.result->final_url;
      j["fetched_at"] = format_iso8601(o.result->fetched_at);
    } else {
      j["status"] = o.status;
      j["error"] = o.error;
    }
    index += j.dump() + "\n";
  }
  write_file(dir / "index.jsonl", index);
  emit({{"command", "fetch"}, {"fetched", ok}, {"failed", outcomes.size() - ok}, {"out", dir.string()}});
  return 0;
}

struct SegmentArgs {
  std::string in;
  std::string text_dir;
  std::size_t min_tokens = SegmentOptions{}.min_tokens;
  std::size_t max_tokens = SegmentOptions{}.max_tokens;
};

int cmd_extract(const Common& common, const SegmentArgs& a) {
  const auto cfg = resolve(common);
  require_exists(a.in, "pages directory");
  const auto index = read_index(a.in);
  const SegmentOptions options{a.min_tokens, a.max_tokens};
  std::vector<PolicyDocument> docs;
  for (const auto& file : files_with_extension(a.in, ".html")) {
    const auto doc_id = file.stem().string();
    const auto it = index.find(doc_id);
    const PageInfo info = it == index.end() ? PageInfo{} : it->second;
    docs.push_back(make_document(doc_id, info.url, info.fetched_at, read_file(file), options));
  }
  if (!a.text_dir.empty()) {
    fs::create_directories(a.text_dir);
    for (const auto& d : docs) write_file(fs::path(a.text_dir) / (d.doc_id + ".txt"), d.plaintext);
    if (fs::exists(fs::path(a.in) / "index.jsonl")) {
      fs::copy_file(fs::path(a.in) / "index.jsonl", fs::path(a.text_dir) / "index.jsonl",
                    fs::copy_options::overwrite_existing);
    }
  }
  const auto out = out_or(common, cfg.paths.documents);
  save_corpus(docs, out);
  std::size_t segments = 0;
  for (const auto& d : docs) segments += d.segments.size();
  emit({{"command", "extract"}, {"documents", docs.size()}, {"segments", segments}, {"out", out.string()}});
  return 0;
}

int cmd_segment(const Common& common, const SegmentArgs& a) {
  const auto cfg = resolve(common);
  require_exists(a.in, "plaintext directory");
  const auto index = read_index(a.in);
  const SegmentOptions options{a.min_tokens, a.max_tokens};
  std::vector<PolicyDocument> docs;
  for (const auto& file : files_with_extension(a.in, ".txt")) {
    PolicyDocument d;
    d.doc_id = file.stem().string();
    if (const auto it = index.find(d.doc_id); it != index.end()) {
      d.url = it->second.url;
      d.fetched_at = it->second.fetched_at;
    }
    d.plaintext = read_file(file);
    d.segments = segment(d.plaintext, d.doc_id, options);
    docs.push_back(std::move(d));
  }
  const auto out = out_or(common, cfg.paths.documents);
  save_corpus(docs, out);
  std::size_t segments = 0;
  for (const auto& d : docs) segments += d.segments.size();
  emit({{"command", "segment"}, {"documents", docs.size()}, {"segments", segments}, {"out", out.string()}});
  return 0;
}

struct InputArgs {
  std::string in;
  std::string embeddings;
  std::string model;
  std::string gold;
  std::string labels;
};

int cmd_embed_train(const Common& common, const InputArgs& a) {
  const auto cfg = resolve(common);
  const auto docs = load_documents(a.in.empty() ? cfg.paths.documents : fs::path(a.in));
  std::vector<std::vector<std::string>> sentences;
  for (const auto& d : docs) {
    for (const auto& s : d.segments) sentences.push_back(s.tokens);
  }
  const auto result = train_skipgram(sentences, cfg.embedding);
  const auto out = out_or(common, cfg.paths.embeddings);
  save_embeddings(result.model, out);
  emit({{"command", "embed-train"},
        {"vocab", result.model.vocab().size()},
        {"epoch_loss", result.epoch_loss},
        {"checksum", result.model.checksum()},
        {"out", out.string()}});
  return 0;
}

struct TrainArgs {
  double split = 0.8;
};

int cmd_train(const Common& common, const InputArgs& a, const TrainArgs& t) {
  const auto cfg = resolve(common);
  const auto docs = load_documents(a.in.empty() ? cfg.paths.documents : fs::path(a.in));
  const auto emb = load_embedding_dir(a.embeddings.empty() ? cfg.paths.embeddings : fs::path(a.embeddings));
  const auto gold = load_labels(a.gold, a.labels, docs, cfg.active_learning.n_annotators);
  const auto split = split_by_document(gold, t.split, cfg.classifier.seed);
  const auto result = train_classifier(split.train, {}, emb, cfg.classifier);
  const auto out = out_or(common, cfg.paths.model);
  save_model(result.model, out);
  save_split(split, t.split, cfg.classifier.seed, out / "split.json");

  ordered_json history = ordered_json::array();
  for (const auto& e : result.history) {
    history.push_back({{"train_loss", e.train_loss}, {"train_accuracy", e.train_accuracy}});
  }
  write_file(out / "history.json", history.dump(2) + "\n");
  emit({{"command", "train"},
        {"train_segments", split.train.size()},
        {"test_segments", split.test.size()},
        {"final_loss", result.history.empty() ? 0.0 : result.history.back().train_loss},
        {"out", out.string()}});
  return 0;
}

int cmd_eval(const Common& common, const InputArgs& a, bool all) {
  const auto cfg = resolve(common);
  const fs::path model_dir = a.model.empty() ? cfg.paths.model : fs::path(a.model);
  const auto model = load_model_dir(model_dir);
  const auto docs = load_documents(a.in.empty() ? cfg.paths.documents : fs::path(a.in));
  const auto emb = load_embedding_dir(a.embeddings.empty() ? cfg.paths.embeddings : fs::path(a.embeddings));
  auto gold = load_labels(a.gold, a.labels, docs, cfg.active_learning.n_annotators);
  if (!all) {
    if (const auto test_docs = load_test_docs(model_dir)) {
      std::erase_if(gold, [&](const LabeledSegment& g) { return !test_docs->count(g.segment.doc_id); });
    }
  }
  const auto report = evaluate(model, emb, gold, cfg.active_learning.threads);
  const auto out = out_or(common, cfg.paths.reports);
  fs::create_directories(out);
  const auto names = requirement_class_names();
  write_file(out / "eval_table.txt", nn::format_report_table(report, names));
  write_file(out / "eval.csv", nn::format_report_csv(report, names));
  auto j = metrics_json(report);
  j["command"] = "eval";
  j["segments"] = gold.size();
  j["out"] = out.string();
  emit(j);
  return 0;
}

struct AlArgs {
  std::string state;
  std::string oracle;
  int iters = 0;
};

// One human-in-the-loop step: retrain once the pending batch is settled, then
// issue the next batch unless the stopping rule fires.
int cmd_al_step(const Common& common, const InputArgs& a, const AlArgs& al) {
  const auto cfg = resolve(common);
  const auto docs = load_documents(a.in.empty() ? cfg.paths.documents : fs::path(a.in));
  const auto emb = load_embedding_dir(a.embeddings.empty() ? cfg.paths.embeddings : fs::path(a.embeddings));
  const fs::path model_dir = a.model.empty() ? cfg.paths.model : fs::path(a.model);
  auto model = load_model_dir(model_dir);
  if (a.gold.empty()) throw MissingInput("al-step needs --gold FILE with the initial labeled data");
  require_exists(a.gold, "gold file");
  const auto gold = load_gold(a.gold, docs);
  // The held-out documents of the initial model double as the per-iteration
  // validation set.
  const auto test_docs = load_test_docs(model_dir).value_or(std::set<std::string>{});

  ActiveLearningContext ctx{emb, docs, {}, {}, {}, cfg.classifier, cfg.active_learning};
  for (const auto& g : gold) {
    ctx.labeled_docs.insert(g.segment.doc_id);
    (test_docs.count(g.segment.doc_id) ? ctx.validation : ctx.seed_train).push_back(g);
  }
  if (ctx.validation.empty()) throw EmptyDataset("no held-out documents; train a model first");

  const fs::path state_file = al.state.empty() ? cfg.paths.state : fs::path(al.state);
  ActiveLearningState state;
  if (fs::exists(state_file)) state = load_state(state_file);
  LabelStore store(cfg.active_learning.n_annotators);
  store.add_documents(docs);
  const fs::path labels_dir = a.labels.empty() ? cfg.paths.labels : fs::path(a.labels);
  if (fs::exists(labels_dir)) store.load(labels_dir);

  const fs::path out = out_or(common, model_dir);
  if (state.pending) {
    if (!queries_settled(store, state)) {
      std::size_t open = 0;
      for (const auto& q : state.pending->queries) {
        const auto c = store.consolidation(q.segment);
        if (!c || c->status == ConsolidationStatus::Discuss) ++open;
      }
      emit({{"command", "al-step"}, {"status", "waiting"}, {"iteration", state.pending->iteration},
            {"unsettled", open}});
      return 0;
    }
    auto result = finish_iteration(ctx, store, state);
    model = std::move(result.model);
    save_model(model, out);
    save_state(state, state_file);
    auto j = metrics_json(result.record.metrics);
    j["command"] = "al-step";
    j["status"] = "retrained";
    j["iteration"] = result.record.iteration;
    j["training_size"] = result.record.training_size;
    emit(j);
  }
  const auto f1 = state.macro_f1_history();
  if (!f1.empty() && should_stop(f1, cfg.active_learning.epsilon, cfg.active_learning.patience,
                                 cfg.active_learning.max_iters)) {
    emit({{"command", "al-step"}, {"status", "stopped"}, {"iterations", state.history.size()}});
    return 0;
  }
  const auto& record = issue_queries(model, ctx, store, state);
  save_state(state, state_file);
  emit({{"command", "al-step"},
        {"status", "issued"},
        {"iteration", record.iteration},
        {"queries", record.queries.size()},
        {"state", state_file.string()}});
  return 0;
}

// Full loop on the synthetic confusable-pairs corpus with a programmatic
// annotator; writes iteration_state.json, labels/ and model/ under --out.
int cmd_al_auto(const Common& common, const AlArgs& al) {
  auto cfg = resolve(common);
  if (al.oracle != "synthetic") {
    throw ConfigError("unsupported oracle '" + al.oracle + "' (only 'synthetic')");
  }
  if (al.iters < 1) throw ConfigError("--iters must be >= 1");
  const std::uint64_t seed = common.seed.value_or(1);
  synthetic::ExperimentSpec spec;
  const auto data = synthetic::make_experiment_data(spec, seed);

  ActiveLearningContext ctx{data.embeddings, data.pool.documents, data.seed.labeled,
                            data.validation.labeled, {}, spec.classifier, cfg.active_learning};
  for (const auto* c : {&data.seed, &data.validation}) {
    for (const auto& d : c->documents) ctx.labeled_docs.insert(d.doc_id);
  }
  ctx.classifier.seed = seed;
  ctx.al.pool_policies = spec.pool_policies;
  ctx.al.budget = spec.budget;
  ctx.al.seed = seed;

  const fs::path out = out_or(common, "al-auto");
  fs::create_directories(out);
  LabelStore store(ctx.al.n_annotators);
  const auto driver = oracle_annotator(
      [&](const SegmentRef& ref) { return data.pool.labels.at(ref); }, ctx.al.n_annotators);
  ActiveLearningState state;
  auto model = train_classifier(ctx.seed_train, {}, ctx.embeddings, ctx.classifier).model;
  const double seed_f1 = evaluate(model, ctx.embeddings, ctx.validation, ctx.al.threads).macro_f1;
  for (int i = 0; i < al.iters; ++i) {
    auto result = run_iteration(model, ctx, store, state, driver);
    model = std::move(result.model);
    save_state(state, out / "iteration_state.json");
    emit({{"iteration", result.record.iteration},
          {"labels", state.labels_used(ctx.seed_train.size())},
          {"macro_f1", result.record.metrics.macro_f1}});
  }
  store.save(out / "labels");
  save_model(model, out / "model");
  emit({{"command", "al-auto"},
        {"oracle", al.oracle},
        {"seed_macro_f1", seed_f1},
        {"macro_f1", state.macro_f1_history()},
        {"out", out.string()}});
  return 0;
}

struct MeasureArgs {
  double tau = -1;  // < 0: from config
  std::string format = "all";
};

int cmd_measure(const Common& common, const InputArgs& a, const MeasureArgs& m) {
  const auto cfg = resolve(common);
  const auto model = load_model_dir(a.model.empty() ? cfg.paths.model : fs::path(a.model));
  const auto docs = load_documents(a.in.empty() ? cfg.paths.documents : fs::path(a.in));
  const auto emb = load_embedding_dir(a.embeddings.empty() ? cfg.paths.embeddings : fs::path(a.embeddings));
  const double tau = m.tau >= 0 ? m.tau : cfg.tau;
  const auto vectors = measure_corpus(model, emb, docs, tau, cfg.active_learning.threads);
  const auto out = out_or(common, cfg.paths.reports / "compliance.jsonl");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_compliance(vectors, out);
  emit({{"command", "measure"},
        {"policies", vectors.size()},
        {"skipped_empty", docs.size() - vectors.size()},
        {"tau", tau},
        {"out", out.string()}});
  return 0;
}

int cmd_export_report(const Common& common, const InputArgs& a, const MeasureArgs& m) {
  const auto cfg = resolve(common);
  const fs::path in = a.in.empty() ? cfg.paths.reports / "compliance.jsonl" : fs::path(a.in);
  require_exists(in, "compliance file");
  const auto vectors = load_compliance(in);
  const auto summary = aggregate(vectors);
  const auto out = out_or(common, cfg.paths.reports);
  export_report(summary, vectors, out, parse_report_format(m.format));
  emit({{"command", "export-report"},
        {"policies", summary.n_policies},
        {"full_compliance", summary.full_compliance},
        {"out", out.string()}});
  return 0;
}

struct ServeArgs {
  std::string host;
  int port = -1;
  std::string static_dir;
};

HttpServer* g_server = nullptr;

extern "C" void handle_stop_signal(int) {
  if (g_server) g_server->stop();
}

int cmd_serve(const Common& common, const InputArgs& a, const AlArgs& al, const ServeArgs& s) {
  const auto cfg = resolve(common);
  const auto docs = load_documents(a.in.empty() ? cfg.paths.documents : fs::path(a.in));
  ServiceOptions options;
  options.state_file = al.state.empty() ? cfg.paths.state : fs::path(al.state);
  options.labels_dir = a.labels.empty() ? cfg.paths.labels : fs::path(a.labels);
  options.reports_dir = cfg.paths.reports;
  options.default_page_size = cfg.service.page_size;
  options.show_hints = cfg.service.show_hints;
  if (const char* token_file = std::getenv(kTokenFileEnv)) {
    options.tokens = load_token_file(token_file);
  }
  AnnotationService service(docs, cfg.active_learning.n_annotators, options);
  const fs::path static_dir = s.static_dir.empty() ? cfg.paths.static_dir : fs::path(s.static_dir);
  HttpServer server(service, static_dir);
  const int port = server.bind(s.host.empty() ? cfg.service.host : s.host,
                               s.port >= 0 ? s.port : cfg.service.port);
  emit({{"command", "serve"},
        {"port", port},
        {"auth", options.tokens.empty() ? "open" : "token"},
        {"annotators", cfg.active_learning.n_annotators}});
  g_server = &server;
  std::signal(SIGINT, handle_stop_signal);
  std::signal(SIGTERM, handle_stop_signal);
  server.listen();
  g_server = nullptr;
  return 0;
}

struct SynthArgs {
  int per_class = 50;
  int segments_per_doc = 6;
};

// Writes a keyword-planted corpus and its gold labels, for trying the
// pipeline without fetching anything.
int cmd_synth(const Common& common, const SynthArgs& s) {
  resolve(common);
  const fs::path out = out_or(common, "synthetic");
  fs::create_directories(out);
  const synthetic::Vocabulary vocab(synthetic::Spec{});
  const auto corpus = synthetic::make_corpus(vocab, s.per_class, s.segments_per_doc, "synth",
                                             common.seed.value_or(1));
  save_corpus(corpus.documents, out / "documents.jsonl");
  save_gold(corpus.labeled, out / "gold.jsonl");
  emit({{"command", "synth"},
        {"documents", corpus.documents.size()},
        {"segments", corpus.labeled.size()},
        {"out", out.string()}});
  return 0;
}

void print_error(const std::string& code, const std::string& message) {
  std::cerr << ordered_json{{"error", code}, {"message", message}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy-policy disclosure classification pipeline"};
  app.require_subcommand(1);

  Common common;
  InputArgs input;
  FetchArgs fetch_args;
  SegmentArgs seg_args;
  TrainArgs train_args;
  AlArgs al_args;
  MeasureArgs measure_args;
  ServeArgs serve_args;
  SynthArgs synth_args;
  bool eval_all = false;

  auto* fetch = app.add_subcommand("fetch", "Download policy pages listed in a URL file");
  add_common(fetch, common);
  fetch->add_option("--urls", fetch_args.urls, "urls.txt")->required();
  fetch->add_option("--delay-ms", fetch_args.delay_ms, "Minimum gap between requests to one host");
  fetch->add_option("--timeout-ms", fetch_args.timeout_ms);

  auto* extract = app.add_subcommand("extract", "HTML pages to segmented documents.jsonl");
  add_common(extract, common);
  extract->add_option("--in", seg_args.in, "Directory of .html pages")->required();
  extract->add_option("--text-dir", seg_args.text_dir, "Also write plaintext files here");
  extract->add_option("--min-tokens", seg_args.min_tokens);
  extract->add_option("--max-tokens", seg_args.max_tokens);

  auto* seg = app.add_subcommand("segment", "Plaintext files to segmented documents.jsonl");
  add_common(seg, common);
  seg->add_option("--in", seg_args.in, "Directory of .txt files")->required();
  seg->add_option("--min-tokens", seg_args.min_tokens);
  seg->add_option("--max-tokens", seg_args.max_tokens);

  auto* embed = app.add_subcommand("embed-train", "Train subword skip-gram embeddings");
  add_common(embed, common);
  embed->add_option("--in", input.in, "documents.jsonl");

  auto add_model_inputs = [&](CLI::App* sub) {
    sub->add_option("--in", input.in, "documents.jsonl");
    sub->add_option("--embeddings", input.embeddings, "Embedding directory");
    sub->add_option("--gold", input.gold, "gold.jsonl");
    sub->add_option("--labels", input.labels, "Label-store directory");
  };

  auto* train = app.add_subcommand("train", "Train the CNN classifier");
  add_common(train, common);
  add_model_inputs(train);
  train->add_option("--split", train_args.split, "Fraction of documents used for training");

  auto* eval = app.add_subcommand("eval", "Evaluate a model on held-out documents");
  add_common(eval, common);
  add_model_inputs(eval);
  eval->add_option("--model", input.model, "Model directory");
  eval->add_flag("--all", eval_all, "Evaluate on every labeled segment, not just the test split");

  auto* al_step = app.add_subcommand("al-step", "Advance the active-learning loop by one step");
  add_common(al_step, common);
  add_model_inputs(al_step);
  al_step->add_option("--model", input.model, "Model directory");
  al_step->add_option("--state", al_args.state, "iteration_state.json");

  auto* al_auto = app.add_subcommand("al-auto", "Run the active-learning loop with a programmatic oracle");
  add_common(al_auto, common);
  al_auto->add_option("--oracle", al_args.oracle, "Oracle kind (synthetic)")->required();
  al_auto->add_option("--iters", al_args.iters, "Iterations")->required();

  auto* measure = app.add_subcommand("measure", "Per-policy compliance vectors");
  add_common(measure, common);
  measure->add_option("--in", input.in, "documents.jsonl");
  measure->add_option("--embeddings", input.embeddings);
  measure->add_option("--model", input.model);
  measure->add_option("--tau", measure_args.tau, "Evidence probability threshold");

  auto* report = app.add_subcommand("export-report", "Aggregate compliance vectors into reports");
  add_common(report, common);
  report->add_option("--in", input.in, "compliance.jsonl");
  report->add_option("--format", measure_args.format, "csv, json or all");

  auto* serve = app.add_subcommand("serve", "Run the annotation HTTP API");
  add_common(serve, common);
  serve->add_option("--in", input.in, "documents.jsonl");
  serve->add_option("--labels", input.labels, "Label-store directory");
  serve->add_option("--state", al_args.state, "iteration_state.json");
  serve->add_option("--host", serve_args.host);
  serve->add_option("--port", serve_args.port);
  serve->add_option("--static", serve_args.static_dir, "UI bundle directory");

  auto* synth = app.add_subcommand("synth", "Write a synthetic labeled corpus");
  add_common(synth, common);
  synth->add_option("--per-class", synth_args.per_class);
  synth->add_option("--segments-per-doc", synth_args.segments_per_doc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::RequiredError& e) {
    print_error("missing_input", e.what());
    return kExitMissingInput;
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return kExitConfig;
  }

  try {
    if (*fetch) return cmd_fetch(common, fetch_args);
    if (*extract) return cmd_extract(common, seg_args);
    if (*seg) return cmd_segment(common, seg_args);
    if (*embed) return cmd_embed_train(common, input);
    if (*train) return cmd_train(common, input, train_args);
    if (*eval) return cmd_eval(common, input, eval_all);
    if (*al_step) return cmd_al_step(common, input, al_args);
    if (*al_auto) return cmd_al_auto(common, al_args);
    if (*measure) return cmd_measure(common, input, measure_args);
    if (*report) return cmd_export_report(common, input, measure_args);
    if (*serve) return cmd_serve(common, input, al_args, serve_args);
    if (*synth) return cmd_synth(common, synth_args);
  } catch (const MissingInput& e) {
    print_error(e.code(), e.what());
    return kExitMissingInput;
  } catch (const ConfigError& e) {
    print_error(e.code(), e.what());
    return kExitConfig;
  } catch (const Error& e) {
    print_error(e.code(), e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
