#include "gdpr/html_text.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace gdpr {
namespace {

constexpr std::array kSkippedElements = {
    std::string_view{"script"}, std::string_view{"style"},    std::string_view{"nav"},
    std::string_view{"noscript"}, std::string_view{"template"}, std::string_view{"svg"},
    std::string_view{"iframe"}, std::string_view{"head"},     std::string_view{"object"},
    std::string_view{"select"}, std::string_view{"button"},   std::string_view{"canvas"},
};

constexpr std::array kBlockElements = {
    std::string_view{"p"},          std::string_view{"div"},     std::string_view{"br"},
    std::string_view{"li"},         std::string_view{"ul"},      std::string_view{"ol"},
    std::string_view{"h1"},         std::string_view{"h2"},      std::string_view{"h3"},
    std::string_view{"h4"},         std::string_view{"h5"},      std::string_view{"h6"},
    std::string_view{"tr"},         std::string_view{"table"},   std::string_view{"section"},
    std::string_view{"article"},    std::string_view{"header"},  std::string_view{"footer"},
    std::string_view{"main"},       std::string_view{"aside"},   std::string_view{"blockquote"},
    std::string_view{"pre"},        std::string_view{"hr"},      std::string_view{"dl"},
    std::string_view{"dt"},         std::string_view{"dd"},      std::string_view{"form"},
    std::string_view{"fieldset"},   std::string_view{"figure"},  std::string_view{"address"},
    std::string_view{"body"},       std::string_view{"html"},    std::string_view{"caption"},
    std::string_view{"figcaption"}, std::string_view{"details"}, std::string_view{"summary"},
};

// Named entities whose value is non-ASCII; recognized so they are removed
// rather than left as literal text.
constexpr std::array kNonAsciiEntities = {
    std::string_view{"copy"},   std::string_view{"reg"},    std::string_view{"trade"},
    std::string_view{"mdash"},  std::string_view{"ndash"},  std::string_view{"lsquo"},
    std::string_view{"rsquo"},  std::string_view{"ldquo"},  std::string_view{"rdquo"},
    std::string_view{"hellip"}, std::string_view{"bull"},   std::string_view{"middot"},
    std::string_view{"laquo"},  std::string_view{"raquo"},  std::string_view{"euro"},
    std::string_view{"pound"},  std::string_view{"sect"},   std::string_view{"deg"},
    std::string_view{"eacute"}, std::string_view{"egrave"}, std::string_view{"uuml"},
    std::string_view{"ouml"},   std::string_view{"auml"},   std::string_view{"szlig"},
};

template <std::size_t N>
bool contains(const std::array<std::string_view, N>& set, std::string_view name) {
  return std::find(set.begin(), set.end(), name) != set.end();
}

char lower(char c) noexcept { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }
bool is_alpha(char c) noexcept { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_alnum(char c) noexcept { return is_alpha(c) || (c >= '0' && c <= '9'); }
bool is_hspace(char c) noexcept { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

bool iequals_at(std::string_view text, std::size_t pos, std::string_view needle) {
  if (pos + needle.size() > text.size()) return false;
  for (std::size_t i = 0; i < needle.size(); ++i) {
    if (lower(text[pos + i]) != needle[i]) return false;
  }
  return true;
}

std::size_t ifind(std::string_view text, std::size_t from, std::string_view needle) {
  for (std::size_t i = from; i + needle.size() <= text.size(); ++i) {
    if (iequals_at(text, i, needle)) return i;
  }
  return std::string_view::npos;
}

struct Entity {
  std::size_t length = 0;             // bytes consumed, including '&' and ';'
  std::optional<std::uint32_t> code;  // empty: recognized but dropped
};

std::optional<Entity> match_entity(std::string_view text, std::size_t pos) {
  if (pos >= text.size() || text[pos] != '&') return std::nullopt;
  const auto semi = text.find(';', pos + 1);
  if (semi == std::string_view::npos || semi - pos > 12 || semi == pos + 1) return std::nullopt;
  const auto body = text.substr(pos + 1, semi - pos - 1);
  const std::size_t length = semi - pos + 1;
  if (body[0] == '#') {
    const bool hex = body.size() > 1 && (body[1] == 'x' || body[1] == 'X');
    const auto digits = body.substr(hex ? 2 : 1);
    if (digits.empty()) return std::nullopt;
    std::uint32_t value = 0;
    for (const char c : digits) {
      std::uint32_t d = 0;
      if (c >= '0' && c <= '9') d = static_cast<std::uint32_t>(c - '0');
      else if (hex && lower(c) >= 'a' && lower(c) <= 'f') d = static_cast<std::uint32_t>(lower(c) - 'a' + 10);
      else return std::nullopt;
      value = value * (hex ? 16u : 10u) + d;
      if (value > 0x10FFFF) return std::nullopt;
    }
    return Entity{length, value};
  }
  for (const char c : body) {
    if (!is_alnum(c)) return std::nullopt;
  }
  if (body == "amp") return Entity{length, '&'};
  if (body == "lt") return Entity{length, '<'};
  if (body == "gt") return Entity{length, '>'};
  if (body == "quot") return Entity{length, '"'};
  if (body == "apos") return Entity{length, '\''};
  if (body == "nbsp") return Entity{length, ' '};
  if (contains(kNonAsciiEntities, body)) return Entity{length, std::nullopt};
  return std::nullopt;
}

class TextBuilder {
 public:
  void put(char c) {
    if (pending_space_ && !current_.empty()) current_.push_back(' ');
    pending_space_ = false;
    current_.push_back(c);
  }
  void space() { pending_space_ = true; }
  void paragraph_break() {
    if (!current_.empty()) paragraphs_.push_back(std::move(current_));
    current_.clear();
    pending_space_ = false;
  }

  std::string finish() {
    paragraph_break();
    std::string out;
    for (const auto& p : paragraphs_) {
      if (!out.empty()) out += "\n\n";
      out += p;
    }
    return escape_ampersands(out);
  }

 private:
  // A literal '&' that would read as an entity on a second pass gets a
  // following space, so the output is a fixed point of extract_text.
  static std::string escape_ampersands(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
      out.push_back(text[i]);
      if (text[i] == '&' && match_entity(text, i)) out.push_back(' ');
    }
    return out;
  }

  std::vector<std::string> paragraphs_;
  std::string current_;
  bool pending_space_ = false;
};

void emit_code_point(TextBuilder& out, std::uint32_t cp) {
  if (cp == '\n' || cp == '\t' || cp == ' ' || cp == '\r') {
    out.space();
  } else if (cp >= 0x20 && cp < 0x7f && cp != '<' && cp != '>') {
    out.put(static_cast<char>(cp));
  }
}

// Returns the index just past the tag's closing '>', or npos if unterminated.
std::size_t tag_end(std::string_view html, std::size_t pos) {
  char quote = 0;
  for (std::size_t i = pos; i < html.size(); ++i) {
    const char c = html[i];
    if (quote) {
      if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '>') {
      return i + 1;
    }
  }
  return std::string_view::npos;
}

}  // namespace

std::string extract_text(std::string_view html) {
  TextBuilder out;
  std::size_t i = 0;
  const std::size_t n = html.size();
  while (i < n) {
    const char c = html[i];
    if (c == '<') {
      if (html.substr(i, 4) == "<!--") {
        const auto close = html.find("-->", i + 4);
        i = close == std::string_view::npos ? n : close + 3;
        continue;
      }
      const char next = i + 1 < n ? html[i + 1] : '\0';
      if (next == '!' || next == '?' || next == '/' || is_alpha(next)) {
        const auto end = tag_end(html, i + 1);
        if (end == std::string_view::npos) {
          ++i;  // stray '<'
          continue;
        }
        const bool closing = next == '/';
        std::size_t p = i + (closing ? 2 : 1);
        std::string name;
        while (p < end && is_alnum(html[p])) name.push_back(lower(html[p++]));
        i = end;
        if (next == '!' || next == '?' || name.empty()) continue;

        if (!closing && contains(kSkippedElements, name)) {
          const bool self_closing = end >= 2 && html[end - 2] == '/';
          if (!self_closing) {
            const auto close = ifind(html, end, "</" + name);
            if (close == std::string_view::npos) {
              i = n;
            } else {
              const auto close_end = tag_end(html, close + 2);
              i = close_end == std::string_view::npos ? n : close_end;
            }
          }
          out.paragraph_break();
          continue;
        }
        if (contains(kBlockElements, name)) {
          out.paragraph_break();
        } else if (name == "td" || name == "th" || name == "img") {
          out.space();
        }
        continue;
      }
      ++i;  // literal '<' is dropped
      continue;
    }
    if (c == '&') {
      if (const auto entity = match_entity(html, i)) {
        if (entity->code) emit_code_point(out, *entity->code);
        i += entity->length;
      } else {
        out.put('&');
        ++i;
      }
      continue;
    }
    if (c == '\n') {
      std::size_t j = i + 1;
      while (j < n && is_hspace(html[j])) ++j;
      if (j < n && html[j] == '\n') {
        out.paragraph_break();
        i = j + 1;
      } else {
        out.space();
        ++i;
      }
      continue;
    }
    if (is_hspace(c)) {
      out.space();
    } else if (static_cast<unsigned char>(c) >= 0x20 && static_cast<unsigned char>(c) < 0x7f &&
               c != '>') {
      out.put(c);
    }
    ++i;
  }
  return out.finish();
}

}  // namespace gdpr
