#include "gdpr/labels.hpp"

#include <string>

#include "gdpr/errors.hpp"

namespace gdpr {
namespace {

constexpr RequirementLabel kOther{0, "Other", ""};

constexpr std::array<RequirementLabel, kNumRequirements> kRequirements{{
    {1, "Data Categories", "14(1.d)"},
    {2, "Processing Purpose", "13(3)"},
    {3, "Data Recipients", "13(1.e)"},
    {4, "Source of Data", "14(2.f)"},
    {5, "Provision Requirement", "14(5.b)"},
    {6, "Data Safeguards", "14(1.f)"},
    {7, "Profiling", "14(2.g)"},
    {8, "Storage Period", "13(2.a)"},
    {9, "Adequacy Decision", "13(1.f)"},
    {10, "Controller's Contact", "13(1.a)"},
    {11, "DPO Contact", "13(1.b)"},
    {12, "Withdraw Consent", "13(2.c)"},
    {13, "Lodge Complaint", "13(2.d)"},
    {14, "Right to Access", "14(2.c)"},
    {15, "Right to Erase", "14(2.c)"},
    {16, "Right to Restrict", "14(2.c)"},
    {17, "Right to Object", "14(2.c)"},
    {18, "Right to Portability", "14(2.c)"},
}};

}  // namespace

const RequirementLabel& label_from_code(int code) {
  if (code == kOtherCode) return kOther;
  if (!is_requirement_code(code)) {
    throw InvalidLabel("label code " + std::to_string(code) + " outside 0..18");
  }
  return kRequirements[static_cast<std::size_t>(code - 1)];
}

std::optional<RequirementLabel> label_from_name(std::string_view name) {
  if (name == kOther.name) return kOther;
  for (const auto& label : kRequirements) {
    if (label.name == name) return label;
  }
  return std::nullopt;
}

const std::array<RequirementLabel, kNumRequirements>& requirement_labels() {
  return kRequirements;
}

}  // namespace gdpr
