#pragma once

#include <string>
#include <string_view>

namespace gdpr {

// Best-effort HTML to plaintext. Drops script/style/nav/img (and similar
// non-content elements), turns block elements into paragraph breaks ("\n\n"),
// strips every other tag, decodes common entities and removes non-ASCII bytes.
// Plain text passes through with whitespace normalized. Never throws on
// malformed markup, and extract_text(extract_text(x)) == extract_text(x).
std::string extract_text(std::string_view html);

}  // namespace gdpr
