#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace gdpr {

// The 18 GDPR privacy-disclosure requirements plus Other (code 0). Other is
// storable as an annotation but never a classifier or measurement class.
struct RequirementLabel {
  int code;
  std::string_view name;
  std::string_view gdpr_article_ref;

  bool is_other() const noexcept { return code == 0; }
  friend bool operator==(const RequirementLabel&, const RequirementLabel&) = default;
};

inline constexpr int kOtherCode = 0;
inline constexpr int kNumRequirements = 18;

// Throws InvalidLabel unless 0 <= code <= 18.
const RequirementLabel& label_from_code(int code);

// Lookup by canonical name; nullopt for an unknown name.
std::optional<RequirementLabel> label_from_name(std::string_view name);

// Codes 1..18 in canonical order.
const std::array<RequirementLabel, kNumRequirements>& requirement_labels();

inline bool is_requirement_code(int code) noexcept {
  return code >= 1 && code <= kNumRequirements;
}

// Classifier output index <-> requirement code.
inline constexpr int class_index_of(int code) noexcept { return code - 1; }
inline constexpr int code_of_class_index(int index) noexcept { return index + 1; }

}  // namespace gdpr
