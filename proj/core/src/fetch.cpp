#include "gdpr/fetch.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <thread>

#include "gdpr/errors.hpp"
#include "httplib.h"

namespace gdpr {

struct Fetcher::HostSlot {
  std::mutex mutex;
  std::optional<std::chrono::steady_clock::time_point> last_start;
};

std::string ParsedUrl::origin() const {
  const bool default_port = (scheme == "http" && port == 80) || (scheme == "https" && port == 443);
  return scheme + "://" + host + (default_port ? "" : ":" + std::to_string(port));
}

ParsedUrl parse_url(const std::string& url) {
  ParsedUrl out;
  const auto sep = url.find("://");
  if (sep == std::string::npos) throw FetchError(0, "malformed url: " + url);
  out.scheme = url.substr(0, sep);
  std::transform(out.scheme.begin(), out.scheme.end(), out.scheme.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (out.scheme != "http" && out.scheme != "https") {
    throw FetchError(0, "unsupported scheme in url: " + url);
  }
  const auto authority_begin = sep + 3;
  auto path_begin = url.find_first_of("/?#", authority_begin);
  if (path_begin == std::string::npos) path_begin = url.size();
  const std::string authority = url.substr(authority_begin, path_begin - authority_begin);
  if (authority.empty() || authority.find('@') != std::string::npos) {
    throw FetchError(0, "malformed url: " + url);
  }
  const auto colon = authority.rfind(':');
  if (colon != std::string::npos && authority.find(']') == std::string::npos) {
    out.host = authority.substr(0, colon);
    const auto port_text = authority.substr(colon + 1);
    if (port_text.empty() || port_text.size() > 5 ||
        !std::all_of(port_text.begin(), port_text.end(), ::isdigit)) {
      throw FetchError(0, "malformed port in url: " + url);
    }
    out.port = std::stoi(port_text);
  } else {
    out.host = authority;
    out.port = out.scheme == "https" ? 443 : 80;
  }
  if (out.host.empty() || out.port <= 0 || out.port > 65535) {
    throw FetchError(0, "malformed url: " + url);
  }
  std::string target = url.substr(path_begin);
  if (const auto frag = target.find('#'); frag != std::string::npos) target.erase(frag);
  if (target.empty() || target.front() != '/') target.insert(target.begin(), '/');
  out.target = std::move(target);
  return out;
}

namespace {

std::string resolve_location(const ParsedUrl& base, const std::string& location) {
  if (location.find("://") != std::string::npos) return location;
  if (location.rfind("//", 0) == 0) return base.scheme + ":" + location;
  if (!location.empty() && location.front() == '/') return base.origin() + location;
  auto dir = base.target.substr(0, base.target.find('?'));
  dir = dir.substr(0, dir.rfind('/') + 1);
  return base.origin() + dir + location;
}

}  // namespace

Fetcher::Fetcher(FetchOptions options) : options_(std::move(options)) {}
Fetcher::~Fetcher() = default;

Fetcher::HostSlot& Fetcher::slot_for(const std::string& host) {
  std::lock_guard lock(slots_mutex_);
  auto& slot = slots_[host];
  if (!slot) slot = std::make_unique<HostSlot>();
  return *slot;
}

FetchResult Fetcher::fetch(const std::string& url) {
  FetchResult result;
  result.url = url;
  std::set<std::string> visited;
  std::string current = url;
  bool first = true;

  for (int hop = 0;; ++hop) {
    const ParsedUrl parsed = parse_url(current);
    if (!visited.insert(current).second) throw FetchError(0, "redirect loop at " + current);
    if (hop > options_.max_redirects) throw FetchError(0, "too many redirects from " + url);

    auto& slot = slot_for(parsed.host);
    std::lock_guard host_lock(slot.mutex);
    const auto now = std::chrono::steady_clock::now();
    if (slot.last_start) {
      const auto ready = *slot.last_start + options_.politeness_delay;
      if (now < ready) std::this_thread::sleep_until(ready);
    }
    slot.last_start = std::chrono::steady_clock::now();
    if (first) {
      result.started_at = *slot.last_start;
      result.fetched_at = now_seconds();
      first = false;
    }

    httplib::Client client(parsed.origin());
    const auto timeout_sec = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    const auto timeout_usec = std::chrono::duration_cast<std::chrono::microseconds>(
        options_.timeout - timeout_sec);
    client.set_connection_timeout(timeout_sec.count(), timeout_usec.count());
    client.set_read_timeout(timeout_sec.count(), timeout_usec.count());
    client.set_follow_location(false);
    const httplib::Headers headers{{"User-Agent", options_.user_agent}};
    auto response = client.Get(parsed.target, headers);
    if (!response) {
      throw FetchError(0, "request to " + current + " failed: " + httplib::to_string(response.error()));
    }
    const int status = response->status;
    if (status >= 300 && status < 400 && response->has_header("Location")) {
      current = resolve_location(parsed, response->get_header_value("Location"));
      continue;
    }
    if (status < 200 || status >= 300) {
      throw FetchError(status, "HTTP " + std::to_string(status) + " from " + current);
    }
    result.final_url = current;
    result.body = std::move(response->body);
    return result;
  }
}

std::vector<FetchOutcome> Fetcher::fetch_all(const std::vector<std::string>& urls,
                                             unsigned threads) {
  std::vector<FetchOutcome> outcomes(urls.size());
  // Group by host so each host is handled by exactly one worker.
  std::map<std::string, std::vector<std::size_t>> by_host;
  for (std::size_t i = 0; i < urls.size(); ++i) {
    outcomes[i].url = urls[i];
    try {
      by_host[parse_url(urls[i]).host].push_back(i);
    } catch (const FetchError& e) {
      outcomes[i].error = e.what();
    }
  }
  std::vector<const std::vector<std::size_t>*> groups;
  for (const auto& [host, indices] : by_host) groups.push_back(&indices);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t g = next++; g < groups.size(); g = next++) {
      for (const std::size_t i : *groups[g]) {
        try {
          outcomes[i].result = fetch(urls[i]);
        } catch (const FetchError& e) {
          outcomes[i].error = e.what();
          outcomes[i].status = e.status();
        }
      }
    }
  };
  const unsigned n_workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(groups.size())));
  std::vector<std::jthread> pool;
  for (unsigned t = 1; t < n_workers; ++t) pool.emplace_back(worker);
  worker();
  return outcomes;
}

}  // namespace gdpr
