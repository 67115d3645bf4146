#pragma once

#include <chrono>
#include <compare>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace gdpr {

using Timestamp = std::chrono::sys_seconds;

// "YYYY-MM-DDTHH:MM:SSZ". parse_iso8601 throws FormatError on anything else.
std::string format_iso8601(Timestamp t);
Timestamp parse_iso8601(std::string_view text);
Timestamp now_seconds();

// Identifies one segment across the corpus, annotation store and AL ledger.
struct SegmentRef {
  std::string doc_id;
  int seg_id = 0;

  friend auto operator<=>(const SegmentRef&, const SegmentRef&) = default;
  friend bool operator==(const SegmentRef&, const SegmentRef&) = default;
};

std::string to_string(const SegmentRef& ref);

struct SegmentRefHash {
  std::size_t operator()(const SegmentRef& ref) const noexcept;
};

struct Segment {
  std::string doc_id;
  int seg_id = 0;
  std::string text;
  std::vector<std::string> tokens;

  SegmentRef ref() const { return {doc_id, seg_id}; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct PolicyDocument {
  std::string doc_id;
  std::string url;
  Timestamp fetched_at{};
  std::optional<std::string> raw_html;
  std::string plaintext;
  std::vector<Segment> segments;

  // Compares the persisted fields only: raw_html and plaintext are not
  // stored in documents.jsonl.
  friend bool operator==(const PolicyDocument& a, const PolicyDocument& b) {
    return a.doc_id == b.doc_id && a.url == b.url && a.fetched_at == b.fetched_at &&
           a.segments == b.segments;
  }
};

// Fixed English stopword list shipped with the library. Entries are stored in
// normalized form (lowercase, punctuation stripped) so they match the output
// of normalize().
class StopwordList {
 public:
  StopwordList() = default;
  explicit StopwordList(std::unordered_set<std::string> words, int version = 0);

  // Parses the one-word-per-line format; '#' starts a comment and a
  // "# version: N" line sets the version.
  static StopwordList parse(std::string_view text);
  static const StopwordList& english();

  bool contains(std::string_view word) const;
  std::size_t size() const noexcept { return words_.size(); }
  int version() const noexcept { return version_; }

 private:
  std::unordered_set<std::string> words_;
  int version_ = 0;
};

// Lowercases, deletes every character that is not an ASCII letter or
// whitespace, splits on whitespace and drops stop words.
std::vector<std::string> normalize(std::string_view text,
                                   const StopwordList& stopwords = StopwordList::english());

struct SegmentOptions {
  std::size_t min_tokens = 5;
  std::size_t max_tokens = 128;
};

// Splits plaintext into paragraph segments (blank-line separated). Paragraphs
// over max_tokens are split at sentence ends; pieces under min_tokens are
// dropped. Segment text is always a trimmed substring of plaintext.
std::vector<Segment> segment(std::string_view plaintext, std::string_view doc_id,
                             const SegmentOptions& options = {},
                             const StopwordList& stopwords = StopwordList::english());

// Builds a document (plaintext + segments) from fetched HTML.
PolicyDocument make_document(std::string doc_id, std::string url, Timestamp fetched_at,
                             std::string html, const SegmentOptions& options = {});

// documents.jsonl: one {"doc_id","url","fetched_at","segments":[{"seg_id","text"}]}
// object per line. Tokens are recomputed on load.
void save_corpus(const std::vector<PolicyDocument>& documents, std::ostream& out);
void save_corpus(const std::vector<PolicyDocument>& documents,
                 const std::filesystem::path& path);
std::vector<PolicyDocument> load_corpus(std::istream& in,
                                        const StopwordList& stopwords = StopwordList::english());
std::vector<PolicyDocument> load_corpus(const std::filesystem::path& path,
                                        const StopwordList& stopwords = StopwordList::english());

// urls.txt: one URL per line; blank lines and '#' comments ignored.
std::vector<std::string> read_url_list(std::istream& in);

// Stable document id derived from a URL: sanitized host plus a short hash.
std::string doc_id_for_url(std::string_view url);

}  // namespace gdpr
