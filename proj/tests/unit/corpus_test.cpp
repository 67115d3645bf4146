#include <gtest/gtest.h>

#include <cctype>
#include <sstream>

#include "gdpr/corpus.hpp"
#include "gdpr/errors.hpp"
#include "gdpr/html_text.hpp"
#include "test_support.hpp"

namespace gdpr {
namespace {

using testing::TempDir;

// A lowercase letters-only word that is never a stop word ("zq" prefix).
std::string word(std::uint64_t n) {
  std::string w = "zq";
  do {
    w.push_back(static_cast<char>('a' + n % 26));
    n /= 26;
  } while (n);
  return w;
}

std::string random_text(Rng& rng, std::size_t max_len) {
  static const std::string alphabet =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 \t\n.,;:!?'\"()-_/&%$#@\xc3\xa9";
  std::string s(rng.below(max_len + 1), ' ');
  for (auto& c : s) c = alphabet[rng.below(alphabet.size())];
  return s;
}

// --- normalize ----------------------------------------------------------------

TEST(Normalize, EmptyInput) { EXPECT_TRUE(normalize("").empty()); }

TEST(Normalize, DropsDigitsAndPunctuation) {
  EXPECT_EQ(normalize("GDPR 2018!"), std::vector<std::string>{"gdpr"});
}

TEST(Normalize, RemovesShippedStopwords) {
  const std::vector<std::string> expected{"share", "personal", "information", "third", "parties"};
  EXPECT_EQ(normalize("We may share your personal information with third parties."), expected);
}

TEST(Normalize, PropertyOutputIsCleanLowercaseNonStopword) {
  Rng rng(11);
  const auto& stop = StopwordList::english();
  for (int trial = 0; trial < 300; ++trial) {
    std::string text = random_text(rng, 80);
    // Mix in real stop words so the filter is exercised.
    text += " The and WE may " + random_text(rng, 10);
    for (const auto& tok : normalize(text)) {
      ASSERT_FALSE(tok.empty());
      for (const char c : tok) ASSERT_TRUE(c >= 'a' && c <= 'z') << tok;
      ASSERT_FALSE(stop.contains(tok)) << tok;
    }
  }
}

TEST(Stopwords, ParseReadsVersionAndComments) {
  const auto list = StopwordList::parse("# version: 3\nfoo\n  bar  \n# comment\n\n");
  EXPECT_EQ(list.version(), 3);
  EXPECT_EQ(list.size(), 2u);
  EXPECT_TRUE(list.contains("foo"));
  EXPECT_TRUE(list.contains("bar"));
  EXPECT_FALSE(StopwordList::english().contains("third"));
  EXPECT_TRUE(StopwordList::english().contains("may"));
}

// --- extract_text ---------------------------------------------------------------

TEST(ExtractText, SingleParagraph) { EXPECT_EQ(extract_text("<p>Hello</p>"), "Hello"); }

TEST(ExtractText, DropsScript) {
  EXPECT_EQ(extract_text("<script>x()</script><p>We collect data.</p>"), "We collect data.");
}

TEST(ExtractText, DropsNonAscii) { EXPECT_EQ(extract_text("<p>caf\xc3\xa9</p>"), "caf"); }

TEST(ExtractText, BlocksBecomeParagraphs) {
  EXPECT_EQ(extract_text("<div>One</div><p>Two &amp; three</p><nav>menu</nav><style>p{}</style>"),
            "One\n\nTwo & three");
}

TEST(ExtractText, MalformedMarkupDoesNotThrow) {
  EXPECT_NO_THROW(extract_text("<p><b>unclosed <i attr='x>text"));
  EXPECT_NO_THROW(extract_text("<<<>>>&&;<"));
}

TEST(ExtractText, PropertyIdempotent) {
  Rng rng(5);
  const std::vector<std::string> tags = {"<p>", "</p>", "<div>", "</div>", "<br>", "<script>",
                                         "</script>", "<li>", "<b>", "</b>", "&amp;", "&lt;",
                                         "<img src=x>", "<!-- c -->", "<h1>", "</h1>"};
  for (int trial = 0; trial < 300; ++trial) {
    std::string html;
    const auto parts = rng.below(12);
    for (std::uint64_t i = 0; i < parts; ++i) {
      html += rng.bernoulli(0.5) ? tags[rng.below(tags.size())] : random_text(rng, 20);
    }
    const auto once = extract_text(html);
    ASSERT_EQ(extract_text(once), once) << html;
    for (const char c : once) ASSERT_LT(static_cast<unsigned char>(c), 0x80);
  }
}

// --- segment ----------------------------------------------------------------------

TEST(Segment, TwoParagraphs) {
  const auto segs = segment(
      "Alpha bravo charlie delta echo foxtrot.\n\nGolf hotel india juliet kilo lima.", "d");
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_EQ(segs[0].seg_id, 0);
  EXPECT_EQ(segs[1].seg_id, 1);
  EXPECT_EQ(segs[1].doc_id, "d");
  EXPECT_EQ(segs[0].text, "Alpha bravo charlie delta echo foxtrot.");
}

TEST(Segment, ShortParagraphDropped) {
  const auto segs = segment("Alpha bravo charlie.\n\nGolf hotel india juliet kilo lima.", "d",
                            {.min_tokens = 5, .max_tokens = 128});
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(segs[0].seg_id, 0);
  EXPECT_EQ(segs[0].tokens.front(), "golf");
}

TEST(Segment, EmptyPlaintext) { EXPECT_TRUE(segment("", "d").empty()); }

TEST(Segment, LongParagraphSplitAtSentenceEnds) {
  // 30 sentences of 10 tokens; greedy packing into <= 128 gives 12 + 12 + 6.
  std::string para;
  std::uint64_t n = 0;
  std::vector<std::size_t> sentence_sizes;
  for (int s = 0; s < 30; ++s) {
    for (int w = 0; w < 10; ++w) para += word(n++) + (w == 9 ? ". " : " ");
    sentence_sizes.push_back(10);
  }
  // Reference splitter: greedy packing of whole sentences.
  std::size_t expected = 0, fill = 0;
  for (const auto s : sentence_sizes) {
    if (fill == 0 || fill + s > 128) {
      ++expected;
      fill = 0;
    }
    fill += s;
  }
  const auto segs = segment(para, "d", {.min_tokens = 5, .max_tokens = 128});
  EXPECT_EQ(segs.size(), expected);
  EXPECT_GE(segs.size(), 3u);
  for (const auto& s : segs) {
    EXPECT_LE(s.tokens.size(), 128u);
    EXPECT_EQ(s.text.back(), '.');
    EXPECT_NE(para.find(s.text), std::string::npos);
  }
}

TEST(Segment, PropertyTokensAreSubsequenceOfNormalizedPlaintext) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    std::string text;
    const auto paras = 1 + rng.below(6);
    for (std::uint64_t p = 0; p < paras; ++p) {
      const auto len = rng.below(60);
      for (std::uint64_t w = 0; w < len; ++w) {
        text += rng.bernoulli(0.2) ? "the" : word(rng.below(50));
        text += rng.bernoulli(0.1) ? ". " : " ";
      }
      text += "\n\n";
    }
    const SegmentOptions opts{.min_tokens = 1 + rng.below(5), .max_tokens = 5 + rng.below(20)};
    const auto segs = segment(text, "d", opts);
    const auto all = normalize(text);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      const auto& s = segs[i];
      ASSERT_EQ(s.seg_id, static_cast<int>(i));
      ASSERT_EQ(s.tokens, normalize(s.text));
      ASSERT_GE(s.tokens.size(), opts.min_tokens);
      ASSERT_NE(text.find(s.text), std::string::npos);
      for (const auto& tok : s.tokens) {
        while (pos < all.size() && all[pos] != tok) ++pos;
        ASSERT_LT(pos, all.size()) << "token order not preserved";
        ++pos;
      }
    }
  }
}

// --- persistence -----------------------------------------------------------------

PolicyDocument make_doc(const std::string& id, const std::string& text) {
  PolicyDocument d;
  d.doc_id = id;
  d.url = "https://" + id + ".example/privacy";
  d.fetched_at = parse_iso8601("2024-03-01T12:00:00Z");
  d.segments = segment(text, id, {.min_tokens = 1, .max_tokens = 128});
  return d;
}

TEST(CorpusFile, EmptyRoundTrip) {
  std::stringstream ss;
  save_corpus({}, ss);
  EXPECT_TRUE(ss.str().empty());
  EXPECT_TRUE(load_corpus(ss).empty());
}

TEST(CorpusFile, ThreeDocumentRoundTrip) {
  TempDir dir;
  const std::vector<PolicyDocument> docs = {
      make_doc("a", "We collect your email address.\n\nWe keep it for two years."),
      make_doc("b", "You may object to \"profiling\" at any time."),
      make_doc("c", "Contact our DPO at dpo@example.com.")};
  save_corpus(docs, dir / "documents.jsonl");
  EXPECT_EQ(load_corpus(dir / "documents.jsonl"), docs);
}

TEST(CorpusFile, TruncatedLastLineReportsLineNumber) {
  std::stringstream ss;
  save_corpus({make_doc("a", "alpha bravo charlie"), make_doc("b", "delta echo foxtrot"),
               make_doc("c", "golf hotel india")},
              ss);
  std::string text = ss.str();
  text.resize(text.size() - 10);
  std::istringstream in(text);
  try {
    load_corpus(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(CorpusFile, PropertyRandomCorporaRoundTrip) {
  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PolicyDocument> docs;
    const auto n = rng.below(5);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::string text;
      const auto words = rng.below(40);
      for (std::uint64_t w = 0; w < words; ++w) {
        text += word(rng.below(100)) + (rng.bernoulli(0.1) ? "\n\n" : " ");
      }
      docs.push_back(make_doc("doc" + std::to_string(i), text));
    }
    std::stringstream ss;
    save_corpus(docs, ss);
    ASSERT_EQ(load_corpus(ss), docs);
  }
}

TEST(Timestamps, Iso8601RoundTrip) {
  const auto t = parse_iso8601("2023-12-31T23:59:59Z");
  EXPECT_EQ(format_iso8601(t), "2023-12-31T23:59:59Z");
  EXPECT_THROW(parse_iso8601("2023-12-31 23:59:59"), FormatError);
}

TEST(UrlList, SkipsCommentsAndBlanks) {
  std::istringstream in("# list\nhttps://a.example/p\n\n  https://b.example/q  \n");
  const auto urls = read_url_list(in);
  ASSERT_EQ(urls.size(), 2u);
  EXPECT_EQ(urls[1], "https://b.example/q");
  EXPECT_EQ(doc_id_for_url(urls[0]), doc_id_for_url("https://a.example/p"));
  EXPECT_NE(doc_id_for_url(urls[0]), doc_id_for_url(urls[1]));
}

}  // namespace
}  // namespace gdpr
