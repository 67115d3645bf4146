#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "gdpr/corpus.hpp"

namespace gdpr {

struct FetchOptions {
  std::chrono::milliseconds politeness_delay{1000};
  std::chrono::milliseconds timeout{15000};
  int max_redirects = 5;
  std::string user_agent = "gdpr-disclosure-fetcher/0.1";
};

struct FetchResult {
  std::string url;
  std::string final_url;
  std::string body;
  Timestamp fetched_at{};
  std::chrono::steady_clock::time_point started_at{};
};

struct FetchOutcome {
  std::string url;
  std::optional<FetchResult> result;
  std::string error;  // set when result is empty
  int status = 0;
};

struct ParsedUrl {
  std::string scheme;  // "http" or "https"
  std::string host;
  int port = 0;
  std::string target;  // path + query, always starting with '/'

  std::string origin() const;
};

// Throws FetchError(0) unless url is an absolute http(s) URL.
ParsedUrl parse_url(const std::string& url);

// HTTP(S) page fetcher with per-host politeness: two requests to the same
// host start at least politeness_delay apart. Requests to different hosts may
// run concurrently. Thread-safe.
class Fetcher {
 public:
  explicit Fetcher(FetchOptions options = {});
  ~Fetcher();

  // Returns the body of a 2xx response. Throws FetchError on network
  // failure, non-2xx status, redirect loops and too many redirects.
  FetchResult fetch(const std::string& url);

  // Fetches all URLs with up to `threads` workers; one host is never served
  // by two workers at once. Outcomes are returned in input order.
  std::vector<FetchOutcome> fetch_all(const std::vector<std::string>& urls,
                                      unsigned threads = 1);

 private:
  struct HostSlot;
  HostSlot& slot_for(const std::string& host);

  FetchOptions options_;
  std::mutex slots_mutex_;
  std::map<std::string, std::unique_ptr<HostSlot>> slots_;
};

}  // namespace gdpr
