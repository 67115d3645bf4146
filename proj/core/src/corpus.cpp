#include "gdpr/corpus.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "gdpr/errors.hpp"
#include "gdpr/html_text.hpp"
#include "json.hpp"

namespace gdpr {

using ordered_json = nlohmann::ordered_json;

namespace {

bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Span of `part` relative to `whole`; part must view into whole.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
};

Span span_of(std::string_view whole, std::string_view part) {
  const auto begin = static_cast<std::size_t>(part.data() - whole.data());
  return {begin, begin + part.size()};
}

// Maximal runs of non-blank lines.
std::vector<std::string_view> paragraphs(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  std::size_t para_begin = std::string_view::npos;
  std::size_t para_end = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const auto line = text.substr(pos, eol - pos);
    if (trim(line).empty()) {
      if (para_begin != std::string_view::npos) {
        out.push_back(trim(text.substr(para_begin, para_end - para_begin)));
        para_begin = std::string_view::npos;
      }
    } else {
      if (para_begin == std::string_view::npos) para_begin = pos;
      para_end = eol;
    }
    pos = eol + 1;
  }
  if (para_begin != std::string_view::npos) {
    out.push_back(trim(text.substr(para_begin, para_end - para_begin)));
  }
  return out;
}

bool is_sentence_end(std::string_view text, std::size_t i) {
  const char c = text[i];
  if (c != '.' && c != '!' && c != '?') return false;
  std::size_t j = i + 1;
  while (j < text.size() && (text[j] == '"' || text[j] == '\'' || text[j] == ')')) ++j;
  return j == text.size() || is_space(text[j]);
}

std::vector<std::string_view> sentences(std::string_view paragraph) {
  std::vector<std::string_view> out;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < paragraph.size(); ++i) {
    if (!is_sentence_end(paragraph, i)) continue;
    std::size_t end = i + 1;
    while (end < paragraph.size() && !is_space(paragraph[end])) ++end;
    const auto s = trim(paragraph.substr(begin, end - begin));
    if (!s.empty()) out.push_back(s);
    begin = end;
    i = end;
  }
  const auto rest = trim(paragraph.substr(std::min(begin, paragraph.size())));
  if (!rest.empty()) out.push_back(rest);
  return out;
}

std::vector<std::string_view> words(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t begin = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > begin) out.push_back(text.substr(begin, i - begin));
  }
  return out;
}

// Joins consecutive pieces (views into `paragraph`, in order) into chunks of
// at most max_tokens normalized tokens. A piece that alone exceeds the limit
// is split at word boundaries.
std::vector<std::string_view> pack(std::string_view paragraph,
                                   const std::vector<std::string_view>& pieces,
                                   std::size_t max_tokens, const StopwordList& stopwords) {
  std::vector<std::string_view> chunks;
  std::size_t chunk_begin = 0;
  std::size_t chunk_end = 0;
  std::size_t chunk_tokens = 0;
  bool open = false;

  auto flush = [&] {
    if (open) chunks.push_back(paragraph.substr(chunk_begin, chunk_end - chunk_begin));
    open = false;
    chunk_tokens = 0;
  };
  auto add = [&](std::string_view piece, std::size_t count) {
    const auto span = span_of(paragraph, piece);
    if (open && chunk_tokens + count > max_tokens) flush();
    if (!open) {
      chunk_begin = span.begin;
      open = true;
    }
    chunk_end = span.end;
    chunk_tokens += count;
  };

  for (const auto piece : pieces) {
    const std::size_t count = normalize(piece, stopwords).size();
    if (count <= max_tokens) {
      add(piece, count);
      continue;
    }
    flush();
    for (const auto word : words(piece)) add(word, normalize(word, stopwords).size());
    flush();
  }
  flush();
  return chunks;
}

}  // namespace

// --- time -----------------------------------------------------------------

std::string format_iso8601(Timestamp t) {
  using namespace std::chrono;
  const auto days = floor<std::chrono::days>(t);
  const year_month_day ymd{days};
  const hh_mm_ss hms{t - days};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

Timestamp parse_iso8601(std::string_view text) {
  using namespace std::chrono;
  int y = 0;
  unsigned mo = 0, d = 0;
  int h = 0, mi = 0, s = 0;
  char tail = 0;
  const std::string str(text);
  if (str.size() != 20 ||
      std::sscanf(str.c_str(), "%4d-%2u-%2uT%2d:%2d:%2d%c", &y, &mo, &d, &h, &mi, &s, &tail) != 7 ||
      tail != 'Z') {
    throw FormatError("not an ISO-8601 UTC timestamp: '" + str + "'");
  }
  const year_month_day ymd{year{y}, month{mo}, day{d}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 60 || h < 0 || mi < 0 || s < 0) {
    throw FormatError("invalid calendar timestamp: '" + str + "'");
  }
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

Timestamp now_seconds() {
  return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
}

// --- refs -----------------------------------------------------------------

std::string to_string(const SegmentRef& ref) {
  return ref.doc_id + "#" + std::to_string(ref.seg_id);
}

std::size_t SegmentRefHash::operator()(const SegmentRef& ref) const noexcept {
  const std::size_t h = std::hash<std::string>{}(ref.doc_id);
  return h ^ (std::hash<int>{}(ref.seg_id) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
}

// --- stopwords --------------------------------------------------------------

StopwordList::StopwordList(std::unordered_set<std::string> words, int version)
    : words_(std::move(words)), version_(version) {}

StopwordList StopwordList::parse(std::string_view text) {
  std::unordered_set<std::string> words;
  int version = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    const auto view = trim(line);
    if (view.empty()) continue;
    if (view.front() == '#') {
      int v = 0;
      if (std::sscanf(std::string(view).c_str(), "# version: %d", &v) == 1) version = v;
      continue;
    }
    // Entries go through the same normalization as text (minus stopword removal).
    for (auto& w : normalize(view, StopwordList{})) words.insert(std::move(w));
  }
  return StopwordList(std::move(words), version);
}

bool StopwordList::contains(std::string_view word) const {
  return words_.find(std::string(word)) != words_.end();
}

// --- normalize / segment ----------------------------------------------------

std::vector<std::string> normalize(std::string_view text, const StopwordList& stopwords) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty() && !stopwords.contains(current)) tokens.push_back(current);
    current.clear();
  };
  for (const char ch : text) {
    if (is_space(ch)) {
      flush();
    } else if (ch >= 'a' && ch <= 'z') {
      current.push_back(ch);
    } else if (ch >= 'A' && ch <= 'Z') {
      current.push_back(static_cast<char>(ch - 'A' + 'a'));
    }
  }
  flush();
  return tokens;
}

std::vector<Segment> segment(std::string_view plaintext, std::string_view doc_id,
                             const SegmentOptions& options, const StopwordList& stopwords) {
  if (options.max_tokens == 0) throw ShapeError("max_tokens must be positive");
  std::vector<Segment> out;
  auto emit = [&](std::string_view text) {
    auto tokens = normalize(text, stopwords);
    if (tokens.size() < options.min_tokens || tokens.empty()) return;
    out.push_back(Segment{std::string(doc_id), static_cast<int>(out.size()), std::string(text),
                          std::move(tokens)});
  };

  for (const auto para : paragraphs(plaintext)) {
    const std::size_t count = normalize(para, stopwords).size();
    if (count <= options.max_tokens) {
      emit(para);
      continue;
    }
    for (const auto chunk : pack(para, sentences(para), options.max_tokens, stopwords)) {
      emit(trim(chunk));
    }
  }
  return out;
}

PolicyDocument make_document(std::string doc_id, std::string url, Timestamp fetched_at,
                             std::string html, const SegmentOptions& options) {
  PolicyDocument doc;
  doc.doc_id = std::move(doc_id);
  doc.url = std::move(url);
  doc.fetched_at = fetched_at;
  doc.plaintext = extract_text(html);
  doc.raw_html = std::move(html);
  doc.segments = segment(doc.plaintext, doc.doc_id, options);
  return doc;
}

// --- persistence -------------------------------------------------------------

void save_corpus(const std::vector<PolicyDocument>& documents, std::ostream& out) {
  for (const auto& doc : documents) {
    ordered_json j;
    j["doc_id"] = doc.doc_id;
    j["url"] = doc.url;
    j["fetched_at"] = format_iso8601(doc.fetched_at);
    auto segments = ordered_json::array();
    for (const auto& seg : doc.segments) {
      ordered_json s;
      s["seg_id"] = seg.seg_id;
      s["text"] = seg.text;
      segments.push_back(std::move(s));
    }
    j["segments"] = std::move(segments);
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing corpus");
}

void save_corpus(const std::vector<PolicyDocument>& documents,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  save_corpus(documents, out);
}

std::vector<PolicyDocument> load_corpus(std::istream& in, const StopwordList& stopwords) {
  std::vector<PolicyDocument> documents;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    PolicyDocument doc;
    try {
      const auto j = nlohmann::json::parse(line);
      doc.doc_id = j.at("doc_id").get<std::string>();
      doc.url = j.at("url").get<std::string>();
      doc.fetched_at = parse_iso8601(j.at("fetched_at").get<std::string>());
      for (const auto& s : j.at("segments")) {
        Segment seg;
        seg.doc_id = doc.doc_id;
        seg.seg_id = s.at("seg_id").get<int>();
        seg.text = s.at("text").get<std::string>();
        seg.tokens = normalize(seg.text, stopwords);
        if (!doc.plaintext.empty()) doc.plaintext += "\n\n";
        doc.plaintext += seg.text;
        doc.segments.push_back(std::move(seg));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const FormatError& e) {
      throw ParseError(line_no, e.what());
    }
    documents.push_back(std::move(doc));
  }
  return documents;
}

std::vector<PolicyDocument> load_corpus(const std::filesystem::path& path,
                                        const StopwordList& stopwords) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return load_corpus(in, stopwords);
}

std::vector<std::string> read_url_list(std::istream& in) {
  std::vector<std::string> urls;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    const auto view = trim(std::string_view(line).substr(0, hash));
    if (!view.empty()) urls.emplace_back(view);
  }
  return urls;
}

std::string doc_id_for_url(std::string_view url) {
  std::string_view rest = url;
  if (const auto p = rest.find("://"); p != std::string_view::npos) rest.remove_prefix(p + 3);
  const auto host = rest.substr(0, rest.find_first_of("/?#:"));
  std::string id;
  for (const char c : host) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '.' || c == '-';
    if (keep) id.push_back(c);
    else if (c >= 'A' && c <= 'Z') id.push_back(static_cast<char>(c - 'A' + 'a'));
  }
  std::uint32_t h = 2166136261u;
  for (const char c : url) {
    h ^= static_cast<unsigned char>(c);
    h *= 16777619u;
  }
  char suffix[16];
  std::snprintf(suffix, sizeof suffix, "-%08x", h);
  return (id.empty() ? std::string("doc") : id) + suffix;
}

}  // namespace gdpr
