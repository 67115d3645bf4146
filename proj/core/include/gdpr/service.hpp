#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "gdpr/active_learning.hpp"
#include "gdpr/annotation.hpp"
#include "gdpr/corpus.hpp"

namespace gdpr {

// Environment variable naming the bearer token file.
inline constexpr const char* kTokenFileEnv = "GDPR_TOKEN_FILE";

// token -> annotator id. File format: one "annotator_id token" pair per line,
// '#' starts a comment. Throws ConfigError on a malformed line or a reused
// token.
std::map<std::string, std::string> parse_token_file(const std::string& text);
std::map<std::string, std::string> load_token_file(const std::filesystem::path& file);

struct ServiceOptions {
  std::filesystem::path state_file;   // iteration_state.json, reloaded when it changes
  std::filesystem::path labels_dir;   // LabelStore persistence, written after each change
  std::filesystem::path reports_dir;  // report.json for GET /api/report
  int default_page_size = 20;
  bool show_hints = false;
  // Empty = open mode: no authentication, annotator ids are taken from the
  // request.
  std::map<std::string, std::string> tokens;
};

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

// Request handling without any transport, so it can be tested directly.
// Thread-safe.
class AnnotationService {
 public:
  // `documents` are registered in a fresh store, then labels_dir is loaded
  // if it exists.
  AnnotationService(const std::vector<PolicyDocument>& documents, int n_annotators,
                    ServiceOptions options);

  using Params = std::multimap<std::string, std::string>;

  // authorization is the raw Authorization header value (may be empty).
  HttpResponse get_queue(const std::string& authorization, const Params& params);
  HttpResponse post_label(const std::string& authorization, const std::string& body);
  HttpResponse resolve_discussion(const std::string& authorization, const std::string& doc_id,
                                  const std::string& seg_id, const std::string& body);
  HttpResponse get_metrics();
  HttpResponse get_report();
  HttpResponse get_segment(const std::string& authorization, const std::string& doc_id,
                           const std::string& seg_id);

  LabelStore& store() noexcept { return store_; }
  // Re-reads the state file if its timestamp or size changed.
  void refresh_state();

 private:
  std::optional<std::string> authenticate(const std::string& authorization,
                                          const std::string& claimed) const;
  std::optional<ActiveLearningState> snapshot();
  void persist_labels();

  ServiceOptions options_;
  LabelStore store_;
  std::map<std::string, std::string> urls_;  // doc_id -> url

  std::mutex state_mutex_;
  std::optional<ActiveLearningState> state_;
  std::filesystem::file_time_type state_mtime_{};
  std::uintmax_t state_size_ = 0;

  std::mutex persist_mutex_;
};

// Serves the API (and static_dir, when set) until stop() is called.
class HttpServer {
 public:
  HttpServer(AnnotationService& service, std::filesystem::path static_dir = {});
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds host:port (port 0 picks a free port) and returns the bound port.
  // Throws IoError when binding fails.
  int bind(const std::string& host, int port);
  void listen();  // blocks
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace gdpr
