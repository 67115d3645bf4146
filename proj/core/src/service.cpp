#include "gdpr/service.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

#include "gdpr/errors.hpp"
#include "gdpr/labels.hpp"
#include "httplib.h"
#include "internal/binary_io.hpp"
#include "json.hpp"

namespace gdpr {

using nlohmann::ordered_json;

std::map<std::string, std::string> parse_token_file(const std::string& text) {
  std::map<std::string, std::string> tokens;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream fields(line);
    std::string annotator, token, extra;
    if (!(fields >> annotator)) continue;
    if (!(fields >> token) || (fields >> extra)) {
      throw ConfigError("token file line " + std::to_string(number) +
                        ": expected 'annotator_id token'");
    }
    if (!tokens.emplace(token, annotator).second) {
      throw ConfigError("token file line " + std::to_string(number) + ": token reused");
    }
  }
  return tokens;
}

std::map<std::string, std::string> load_token_file(const std::filesystem::path& file) {
  try {
    return parse_token_file(internal::read_text_file(file));
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
}

namespace {

HttpResponse json_response(int status, const ordered_json& body) {
  return {status, body.dump(), "application/json"};
}

HttpResponse error_response(int status, const std::string& code, const std::string& message) {
  ordered_json j;
  j["error"] = code;
  j["message"] = message;
  return json_response(status, j);
}

std::optional<int> parse_int(const std::string& s) {
  int v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<std::string> param(const AnnotationService::Params& params, const std::string& key) {
  const auto it = params.find(key);
  if (it == params.end()) return std::nullopt;
  return it->second;
}

ordered_json record_json(const AnnotationRecord& r) {
  ordered_json j;
  j["doc_id"] = r.segment.doc_id;
  j["seg_id"] = r.segment.seg_id;
  j["annotator_id"] = r.annotator_id;
  j["label_code"] = r.label;
  j["submitted_at"] = format_iso8601(r.submitted_at);
  return j;
}

ordered_json consolidation_json(const std::optional<ConsolidationResult>& result) {
  if (!result) return nullptr;
  const auto& r = *result;
  ordered_json j;
  j["doc_id"] = r.segment.doc_id;
  j["seg_id"] = r.segment.seg_id;
  j["status"] = to_string(r.status);
  j["gold_label_code"] = r.gold_label ? ordered_json(*r.gold_label) : ordered_json(nullptr);
  j["agreement"] = r.agreement;
  if (r.resolved_by) {
    j["resolved_by"] = *r.resolved_by;
    j["resolved_at"] = format_iso8601(r.resolved_at.value_or(Timestamp{}));
  }
  return j;
}

ordered_json hint_json(const QueryCandidate& q) {
  auto entry = [&](int code) {
    ordered_json e;
    e["label_code"] = code;
    e["name"] = is_requirement_code(code) ? label_from_code(code).name : "";
    e["probability"] = is_requirement_code(code)
                           ? q.probs.at(static_cast<std::size_t>(class_index_of(code)))
                           : 0.0f;
    return e;
  };
  return ordered_json::array({entry(q.top1), entry(q.top2)});
}

// A valid label code from a JSON value, or nullopt.
std::optional<int> label_code_of(const nlohmann::json& v) {
  if (!v.is_number_integer()) return std::nullopt;
  const auto code = v.get<std::int64_t>();
  if (code < 0 || code > kNumRequirements) return std::nullopt;
  return static_cast<int>(code);
}

}  // namespace

AnnotationService::AnnotationService(const std::vector<PolicyDocument>& documents,
                                     int n_annotators, ServiceOptions options)
    : options_(std::move(options)), store_(n_annotators) {
  store_.add_documents(documents);
  for (const auto& d : documents) urls_[d.doc_id] = d.url;
  if (!options_.labels_dir.empty() && std::filesystem::exists(options_.labels_dir)) {
    store_.load(options_.labels_dir);
  }
  refresh_state();
}

void AnnotationService::refresh_state() {
  std::lock_guard lock(state_mutex_);
  if (options_.state_file.empty()) return;
  std::error_code ec;
  const auto mtime = std::filesystem::last_write_time(options_.state_file, ec);
  if (ec) {
    state_.reset();
    return;
  }
  const auto size = std::filesystem::file_size(options_.state_file, ec);
  if (state_ && mtime == state_mtime_ && size == state_size_) return;
  state_ = load_state(options_.state_file);
  state_mtime_ = mtime;
  state_size_ = size;
}

std::optional<ActiveLearningState> AnnotationService::snapshot() {
  refresh_state();
  std::lock_guard lock(state_mutex_);
  return state_;
}

std::optional<std::string> AnnotationService::authenticate(const std::string& authorization,
                                                           const std::string& claimed) const {
  if (options_.tokens.empty()) {
    if (claimed.empty()) return std::nullopt;
    return claimed;
  }
  constexpr std::string_view prefix = "Bearer ";
  if (authorization.rfind(prefix, 0) != 0) return std::nullopt;
  const auto it = options_.tokens.find(authorization.substr(prefix.size()));
  if (it == options_.tokens.end()) return std::nullopt;
  if (!claimed.empty() && claimed != it->second) return std::nullopt;
  return it->second;
}

void AnnotationService::persist_labels() {
  if (options_.labels_dir.empty()) return;
  std::lock_guard lock(persist_mutex_);
  store_.save(options_.labels_dir);
}

HttpResponse AnnotationService::get_queue(const std::string& authorization, const Params& params) {
  const auto annotator = authenticate(authorization, param(params, "annotator").value_or(""));
  if (!annotator) return error_response(401, "unauthorized", "unknown annotator or bad token");

  int page_size = options_.default_page_size;
  if (const auto p = param(params, "page_size")) {
    const auto v = parse_int(*p);
    if (!v || *v < 1) return error_response(400, "bad_request", "page_size must be a positive integer");
    page_size = *v;
  }
  const bool hints = options_.show_hints || param(params, "hints").value_or("") == "true";

  const auto state = snapshot();
  if (!state || !state->pending) {
    return error_response(409, "no_active_iteration", "no query batch is awaiting labels");
  }
  auto queries = state->pending->queries;
  std::stable_sort(queries.begin(), queries.end(), [](const QueryCandidate& a, const QueryCandidate& b) {
    if (a.margin != b.margin) return a.margin < b.margin;
    return a.segment < b.segment;
  });

  ordered_json entries = ordered_json::array();
  std::size_t open = 0;
  for (const auto& q : queries) {
    if (!store_.has_segment(q.segment)) continue;
    if (store_.live_label(q.segment, *annotator)) continue;
    if (store_.live_labels(q.segment).size() >= static_cast<std::size_t>(store_.n_annotators())) continue;
    ++open;
    if (entries.size() >= static_cast<std::size_t>(page_size)) continue;
    const auto seg = store_.segment(q.segment);
    ordered_json e;
    e["doc_id"] = seg.doc_id;
    e["seg_id"] = seg.seg_id;
    e["text"] = seg.text;
    const auto url = urls_.find(seg.doc_id);
    e["url"] = url == urls_.end() ? "" : url->second;
    e["iteration"] = state->pending->iteration;
    if (hints) e["hint"] = hint_json(q);
    entries.push_back(std::move(e));
  }
  ordered_json j;
  j["annotator_id"] = *annotator;
  j["iteration"] = state->pending->iteration;
  j["remaining"] = open;
  j["entries"] = std::move(entries);
  return json_response(200, j);
}

HttpResponse AnnotationService::post_label(const std::string& authorization, const std::string& body) {
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    return error_response(400, "bad_request", std::string("invalid JSON: ") + e.what());
  }
  if (!req.is_object() || !req.contains("doc_id") || !req["doc_id"].is_string() ||
      !req.contains("seg_id") || !req["seg_id"].is_number_integer() || !req.contains("label_code")) {
    return error_response(400, "bad_request", "expected {doc_id, seg_id, label_code}");
  }
  std::string claimed;
  if (req.contains("annotator_id") && req["annotator_id"].is_string()) {
    claimed = req["annotator_id"].get<std::string>();
  }
  const auto annotator = authenticate(authorization, claimed);
  if (!annotator) return error_response(401, "unauthorized", "unknown annotator or bad token");

  const auto label = label_code_of(req["label_code"]);
  if (!label) {
    return error_response(422, "invalid_label", "label_code must be an integer in 0..18");
  }
  const SegmentRef ref{req["doc_id"].get<std::string>(), req["seg_id"].get<int>()};

  const auto state = snapshot();
  if (!state || !state->pending) {
    return error_response(409, "no_active_iteration", "no query batch is awaiting labels");
  }
  const auto& queries = state->pending->queries;
  const bool queued = std::any_of(queries.begin(), queries.end(),
                                  [&](const QueryCandidate& q) { return q.segment == ref; });
  if (!queued || !store_.has_segment(ref)) {
    return error_response(404, "not_queued", "segment " + to_string(ref) + " is not in the current batch");
  }
  const bool resubmission = store_.live_label(ref, *annotator).has_value();
  if (!resubmission &&
      store_.live_labels(ref).size() >= static_cast<std::size_t>(store_.n_annotators())) {
    return error_response(409, "segment_full", "segment " + to_string(ref) + " already has all its labels");
  }
  const auto record = store_.record_label(ref, *annotator, *label);
  persist_labels();

  ordered_json j;
  j["record"] = record_json(record);
  j["consolidation"] = consolidation_json(store_.consolidation(ref));
  return json_response(resubmission ? 200 : 201, j);
}

HttpResponse AnnotationService::resolve_discussion(const std::string& authorization,
                                                   const std::string& doc_id,
                                                   const std::string& seg_id, const std::string& body) {
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    return error_response(400, "bad_request", std::string("invalid JSON: ") + e.what());
  }
  if (!req.is_object() || !req.contains("label_code")) {
    return error_response(400, "bad_request", "expected {label_code} (null rejects)");
  }
  std::string claimed;
  if (req.contains("resolver") && req["resolver"].is_string()) claimed = req["resolver"].get<std::string>();
  const auto resolver = authenticate(authorization, claimed);
  if (!resolver) return error_response(401, "unauthorized", "unknown annotator or bad token");

  Resolution outcome = Resolution::reject();
  if (!req["label_code"].is_null()) {
    const auto label = label_code_of(req["label_code"]);
    if (!label) return error_response(422, "invalid_label", "label_code must be null or 0..18");
    outcome = Resolution::accept(*label);
  }
  const auto seg = parse_int(seg_id);
  if (!seg || !store_.has_segment({doc_id, *seg})) {
    return error_response(404, "not_found", "unknown segment " + doc_id + "#" + seg_id);
  }
  ConsolidationResult result;
  try {
    result = store_.resolve_discussion({doc_id, *seg}, outcome, *resolver);
  } catch (const StateError& e) {
    return error_response(409, e.code(), e.what());
  }
  persist_labels();
  return json_response(200, consolidation_json(result));
}

HttpResponse AnnotationService::get_metrics() {
  const auto state = snapshot();
  ordered_json out = ordered_json::array();
  if (state) {
    for (const auto& r : state->history) {
      ordered_json j;
      j["iteration"] = r.iteration;
      j["macro_f1"] = r.metrics.macro_f1;
      j["macro_precision"] = r.metrics.macro_precision;
      j["macro_recall"] = r.metrics.macro_recall;
      j["accuracy"] = r.metrics.accuracy;
      j["training_size"] = r.training_size;
      j["queries"] = r.queries.size();
      j["labels_received"] = r.labels_received;
      out.push_back(std::move(j));
    }
  }
  return json_response(200, out);
}

HttpResponse AnnotationService::get_report() {
  const auto file = options_.reports_dir / "report.json";
  if (options_.reports_dir.empty() || !std::filesystem::exists(file)) {
    return error_response(404, "not_found", "no compliance report has been exported");
  }
  return {200, internal::read_text_file(file), "application/json"};
}

HttpResponse AnnotationService::get_segment(const std::string& authorization,
                                            const std::string& doc_id, const std::string& seg_id) {
  if (!options_.tokens.empty() && !authenticate(authorization, "")) {
    return error_response(401, "unauthorized", "unknown annotator or bad token");
  }
  const auto seg = parse_int(seg_id);
  if (!seg || !store_.has_segment({doc_id, *seg})) {
    return error_response(404, "not_found", "unknown segment " + doc_id + "#" + seg_id);
  }
  const SegmentRef ref{doc_id, *seg};
  const auto s = store_.segment(ref);
  ordered_json j;
  j["doc_id"] = s.doc_id;
  j["seg_id"] = s.seg_id;
  j["text"] = s.text;
  const auto url = urls_.find(s.doc_id);
  j["url"] = url == urls_.end() ? "" : url->second;
  ordered_json live = ordered_json::array();
  for (const auto& r : store_.live_labels(ref)) live.push_back(record_json(r));
  j["labels"] = std::move(live);
  ordered_json audit = ordered_json::array();
  for (const auto& r : store_.audit_log(ref)) audit.push_back(record_json(r));
  j["audit"] = std::move(audit);
  j["consolidation"] = consolidation_json(store_.consolidation(ref));
  return json_response(200, j);
}

// --- transport ---------------------------------------------------------------------

struct HttpServer::Impl {
  httplib::Server server;
};

namespace {

void send(httplib::Response& res, const HttpResponse& r) {
  res.status = r.status;
  res.set_content(r.body, r.content_type);
}

}  // namespace

HttpServer::HttpServer(AnnotationService& service, std::filesystem::path static_dir)
    : impl_(std::make_unique<Impl>()) {
  auto& s = impl_->server;
  s.Get("/api/queue", [&service](const httplib::Request& req, httplib::Response& res) {
    send(res, service.get_queue(req.get_header_value("Authorization"), req.params));
  });
  s.Post("/api/labels", [&service](const httplib::Request& req, httplib::Response& res) {
    send(res, service.post_label(req.get_header_value("Authorization"), req.body));
  });
  s.Post(R"(/api/discussions/([^/]+)/([^/]+)/resolve)",
         [&service](const httplib::Request& req, httplib::Response& res) {
           send(res, service.resolve_discussion(req.get_header_value("Authorization"),
                                                req.matches[1], req.matches[2], req.body));
         });
  s.Get("/api/metrics", [&service](const httplib::Request&, httplib::Response& res) {
    send(res, service.get_metrics());
  });
  s.Get("/api/report", [&service](const httplib::Request&, httplib::Response& res) {
    send(res, service.get_report());
  });
  s.Get(R"(/api/segments/([^/]+)/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
    send(res, service.get_segment(req.get_header_value("Authorization"), req.matches[1],
                                  req.matches[2]));
  });
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    HttpResponse r;
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      r = error_response(500, e.code(), e.what());
    } catch (const std::exception& e) {
      r = error_response(500, "internal", e.what());
    }
    send(res, r);
  });
  if (!static_dir.empty()) s.set_mount_point("/", static_dir.string());
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  auto& s = impl_->server;
  if (port == 0) {
    const int bound = s.bind_to_any_port(host);
    if (bound < 0) throw IoError("cannot bind " + host);
    return bound;
  }
  if (!s.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace gdpr
