#include "gdpr/annotation.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <sstream>

#include "gdpr/errors.hpp"
#include "gdpr/labels.hpp"
#include "internal/binary_io.hpp"
#include "json.hpp"

namespace gdpr {

using nlohmann::ordered_json;

std::string_view to_string(ConsolidationStatus status) noexcept {
  switch (status) {
    case ConsolidationStatus::Accepted: return "Accepted";
    case ConsolidationStatus::Discuss: return "Discuss";
    case ConsolidationStatus::Rejected: return "Rejected";
  }
  return "Rejected";
}

ConsolidationStatus parse_consolidation_status(std::string_view text) {
  if (text == "Accepted") return ConsolidationStatus::Accepted;
  if (text == "Discuss") return ConsolidationStatus::Discuss;
  if (text == "Rejected") return ConsolidationStatus::Rejected;
  throw FormatError("unknown consolidation status '" + std::string(text) + "'");
}

namespace {

void check_label(int code) {
  if (code < 0 || code > kNumRequirements) {
    throw InvalidLabel("label code " + std::to_string(code) + " outside 0.." +
                       std::to_string(kNumRequirements));
  }
}

// Threshold comparison on max/n with slack for fractions like 0.75 * 4.
bool reaches(int max_count, int n, double threshold) {
  return static_cast<double>(max_count) >= threshold * static_cast<double>(n) - 1e-9;
}

}  // namespace

ConsolidationResult consolidate(std::span<const int> labels, int n_annotators,
                                const ConsolidationPolicy& policy) {
  if (n_annotators < 1 || labels.size() != static_cast<std::size_t>(n_annotators)) {
    throw ArityError("consolidate expects " + std::to_string(n_annotators) + " labels, got " +
                     std::to_string(labels.size()));
  }
  std::array<int, kNumRequirements + 1> freq{};
  for (const int code : labels) {
    check_label(code);
    ++freq[static_cast<std::size_t>(code)];
  }
  const int top = *std::max_element(freq.begin(), freq.end());
  const auto top_count = std::count(freq.begin(), freq.end(), top);
  const auto majority = static_cast<int>(std::find(freq.begin(), freq.end(), top) - freq.begin());

  ConsolidationResult r;
  r.agreement = static_cast<double>(top) / static_cast<double>(n_annotators);
  if (top_count == 1 && reaches(top, n_annotators, policy.accept)) {
    r.status = ConsolidationStatus::Accepted;
    r.gold_label = majority;
  } else if (reaches(top, n_annotators, policy.discuss)) {
    r.status = ConsolidationStatus::Discuss;
  } else {
    r.status = ConsolidationStatus::Rejected;
  }
  return r;
}

// --- store -------------------------------------------------------------------------

LabelStore::LabelStore(int n_annotators, ConsolidationPolicy policy)
    : n_annotators_(n_annotators), policy_(policy) {
  if (n_annotators < 1) throw ConfigError("label store needs at least one annotator");
}

void LabelStore::add_segment(const Segment& segment) {
  std::unique_lock lock(mutex_);
  auto& state = segments_[segment.ref()];
  state.segment = segment;
}

void LabelStore::add_documents(const std::vector<PolicyDocument>& documents) {
  std::unique_lock lock(mutex_);
  for (const auto& d : documents) {
    for (const auto& s : d.segments) segments_[s.ref()].segment = s;
  }
}

bool LabelStore::has_segment(const SegmentRef& ref) const {
  std::shared_lock lock(mutex_);
  return segments_.count(ref) != 0;
}

LabelStore::SegmentState& LabelStore::state_for(const SegmentRef& ref) {
  const auto it = segments_.find(ref);
  if (it == segments_.end()) throw NotFound("unknown segment " + to_string(ref));
  return it->second;
}

const LabelStore::SegmentState& LabelStore::state_for(const SegmentRef& ref) const {
  const auto it = segments_.find(ref);
  if (it == segments_.end()) throw NotFound("unknown segment " + to_string(ref));
  return it->second;
}

Segment LabelStore::segment(const SegmentRef& ref) const {
  std::shared_lock lock(mutex_);
  return state_for(ref).segment;
}

void LabelStore::apply_label(SegmentState& state, const AnnotationRecord& record) {
  state.live[record.annotator_id] = record;
  state.audit.push_back(record);
  journal_.push_back(record);
  const bool manual = state.result && state.result->resolved_by.has_value();
  if (manual || state.live.size() != static_cast<std::size_t>(n_annotators_)) return;
  std::vector<int> labels;
  for (const auto& [_, r] : state.live) labels.push_back(r.label);
  auto result = consolidate(labels, n_annotators_, policy_);
  result.segment = state.segment.ref();
  state.result = std::move(result);
}

AnnotationRecord LabelStore::record_label(const SegmentRef& ref, const std::string& annotator_id,
                                          int label, Timestamp at) {
  check_label(label);
  if (annotator_id.empty()) throw ConfigError("annotator id must not be empty");
  std::unique_lock lock(mutex_);
  auto& state = state_for(ref);
  AnnotationRecord record{ref, annotator_id, label, at};
  apply_label(state, record);
  return record;
}

std::optional<AnnotationRecord> LabelStore::live_label(const SegmentRef& ref,
                                                       const std::string& annotator_id) const {
  std::shared_lock lock(mutex_);
  const auto& live = state_for(ref).live;
  const auto it = live.find(annotator_id);
  if (it == live.end()) return std::nullopt;
  return it->second;
}

std::vector<AnnotationRecord> LabelStore::live_labels(const SegmentRef& ref) const {
  std::shared_lock lock(mutex_);
  std::vector<AnnotationRecord> out;
  for (const auto& [_, r] : state_for(ref).live) out.push_back(r);
  return out;
}

std::vector<AnnotationRecord> LabelStore::audit_log(const SegmentRef& ref) const {
  std::shared_lock lock(mutex_);
  return state_for(ref).audit;
}

std::vector<AnnotationRecord> LabelStore::audit_log(const SegmentRef& ref,
                                                    const std::string& annotator_id) const {
  std::shared_lock lock(mutex_);
  std::vector<AnnotationRecord> out;
  for (const auto& r : state_for(ref).audit) {
    if (r.annotator_id == annotator_id) out.push_back(r);
  }
  return out;
}

std::optional<ConsolidationResult> LabelStore::consolidation(const SegmentRef& ref) const {
  std::shared_lock lock(mutex_);
  return state_for(ref).result;
}

std::vector<ConsolidationResult> LabelStore::consolidations() const {
  std::shared_lock lock(mutex_);
  std::vector<ConsolidationResult> out;
  for (const auto& [_, s] : segments_) {
    if (s.result) out.push_back(*s.result);
  }
  return out;
}

ConsolidationResult LabelStore::resolve_discussion(const SegmentRef& ref,
                                                   const Resolution& outcome,
                                                   const std::string& resolver, Timestamp at) {
  if (outcome.label) check_label(*outcome.label);
  std::unique_lock lock(mutex_);
  auto& state = state_for(ref);
  if (!state.result || state.result->status != ConsolidationStatus::Discuss) {
    throw StateError("segment " + to_string(ref) + " is not awaiting discussion");
  }
  auto& r = *state.result;
  r.status = outcome.label ? ConsolidationStatus::Accepted : ConsolidationStatus::Rejected;
  r.gold_label = outcome.label;
  r.resolved_by = resolver;
  r.resolved_at = at;
  return r;
}

std::vector<LabeledSegment> LabelStore::gold_dataset() const {
  std::shared_lock lock(mutex_);
  std::vector<LabeledSegment> out;
  for (const auto& [_, s] : segments_) {
    if (s.result && s.result->status == ConsolidationStatus::Accepted && s.result->gold_label &&
        *s.result->gold_label != kOtherCode) {
      out.push_back({s.segment, *s.result->gold_label});
    }
  }
  return out;
}

// --- persistence -------------------------------------------------------------------

void LabelStore::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::shared_lock lock(mutex_);
  std::string labels;
  for (const auto& r : journal_) {
    ordered_json j;
    j["doc_id"] = r.segment.doc_id;
    j["seg_id"] = r.segment.seg_id;
    j["annotator_id"] = r.annotator_id;
    j["label_code"] = r.label;
    j["submitted_at"] = format_iso8601(r.submitted_at);
    labels += j.dump() + "\n";
  }
  std::string consolidations;
  for (const auto& [_, s] : segments_) {
    if (!s.result) continue;
    const auto& r = *s.result;
    ordered_json j;
    j["doc_id"] = r.segment.doc_id;
    j["seg_id"] = r.segment.seg_id;
    j["status"] = to_string(r.status);
    j["gold_label_code"] = r.gold_label ? ordered_json(*r.gold_label) : ordered_json(nullptr);
    j["agreement"] = r.agreement;
    if (r.resolved_by) {
      j["resolved_by"] = *r.resolved_by;
      j["resolved_at"] = format_iso8601(r.resolved_at.value_or(Timestamp{}));
    }
    consolidations += j.dump() + "\n";
  }
  internal::write_text_file(dir / "labels.jsonl", labels);
  internal::write_text_file(dir / "consolidations.jsonl", consolidations);
}

namespace {

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  if (!std::filesystem::exists(path)) return;
  std::istringstream in(internal::read_text_file(path));
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(number, path.filename().string() + ": " + e.what());
    } catch (const FormatError& e) {
      throw ParseError(number, path.filename().string() + ": " + e.what());
    }
  }
}

}  // namespace

void LabelStore::load(const std::filesystem::path& dir) {
  std::unique_lock lock(mutex_);
  for (auto& [_, s] : segments_) {
    s.live.clear();
    s.audit.clear();
    s.result.reset();
  }
  journal_.clear();
  for_each_json_line(dir / "labels.jsonl", [&](const nlohmann::json& j) {
    AnnotationRecord r;
    r.segment = {j.at("doc_id").get<std::string>(), j.at("seg_id").get<int>()};
    r.annotator_id = j.at("annotator_id").get<std::string>();
    r.label = j.at("label_code").get<int>();
    r.submitted_at = parse_iso8601(j.at("submitted_at").get<std::string>());
    check_label(r.label);
    apply_label(state_for(r.segment), r);
  });
  // Discussion outcomes are the only state not derivable from the labels.
  for_each_json_line(dir / "consolidations.jsonl", [&](const nlohmann::json& j) {
    if (!j.contains("resolved_by")) return;
    const SegmentRef ref{j.at("doc_id").get<std::string>(), j.at("seg_id").get<int>()};
    auto& state = state_for(ref);
    ConsolidationResult r;
    r.segment = ref;
    r.status = parse_consolidation_status(j.at("status").get<std::string>());
    if (!j.at("gold_label_code").is_null()) r.gold_label = j.at("gold_label_code").get<int>();
    r.agreement = j.at("agreement").get<double>();
    r.resolved_by = j.at("resolved_by").get<std::string>();
    r.resolved_at = parse_iso8601(j.at("resolved_at").get<std::string>());
    state.result = std::move(r);
  });
}

// --- gold files --------------------------------------------------------------------

void save_gold(const std::vector<LabeledSegment>& gold, const std::filesystem::path& file) {
  std::string out;
  for (const auto& g : gold) {
    ordered_json j;
    j["doc_id"] = g.segment.doc_id;
    j["seg_id"] = g.segment.seg_id;
    j["label_code"] = g.label;
    out += j.dump() + "\n";
  }
  internal::write_text_file(file, out);
}

std::vector<LabeledSegment> load_gold(const std::filesystem::path& file,
                                      const std::vector<PolicyDocument>& corpus) {
  if (!std::filesystem::exists(file)) throw IoError("cannot open " + file.string());
  std::map<SegmentRef, const Segment*> index;
  for (const auto& d : corpus) {
    for (const auto& s : d.segments) index[s.ref()] = &s;
  }
  std::vector<LabeledSegment> out;
  for_each_json_line(file, [&](const nlohmann::json& j) {
    const SegmentRef ref{j.at("doc_id").get<std::string>(), j.at("seg_id").get<int>()};
    const int code = j.at("label_code").get<int>();
    if (code < 0 || code > kNumRequirements) throw FormatError("label code out of range");
    const auto it = index.find(ref);
    if (it == index.end()) throw FormatError("segment " + to_string(ref) + " is not in the corpus");
    if (code != kOtherCode) out.push_back({*it->second, code});
  });
  return out;
}

}  // namespace gdpr
