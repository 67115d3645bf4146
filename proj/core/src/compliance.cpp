#include "gdpr/compliance.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "gdpr/errors.hpp"
#include "internal/binary_io.hpp"
#include "json.hpp"

namespace gdpr {

using nlohmann::ordered_json;

int ComplianceVector::count() const noexcept {
  return static_cast<int>(std::count(covered.begin(), covered.end(), true));
}

ComplianceVector compliance_from_predictions(const std::string& doc_id,
                                             std::span<const Segment> segments,
                                             std::span<const Prediction> predictions,
                                             double tau) {
  if (segments.empty()) throw EmptyPolicy("policy " + doc_id + " has no segments");
  if (segments.size() != predictions.size()) {
    throw ShapeError("compliance: " + std::to_string(segments.size()) + " segments but " +
                     std::to_string(predictions.size()) + " predictions");
  }
  ComplianceVector v;
  v.doc_id = doc_id;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& p = predictions[i];
    if (!is_requirement_code(p.top_class)) continue;
    const auto idx = static_cast<std::size_t>(class_index_of(p.top_class));
    const double prob = p.probs.at(idx);
    if (prob > tau) v.evidence[idx].push_back({segments[i].seg_id, prob});
  }
  for (std::size_t c = 0; c < v.evidence.size(); ++c) {
    auto& ev = v.evidence[c];
    std::sort(ev.begin(), ev.end(), [](const Evidence& a, const Evidence& b) {
      if (a.probability != b.probability) return a.probability > b.probability;
      return a.seg_id < b.seg_id;
    });
    v.covered[c] = !ev.empty();
  }
  return v;
}

ComplianceVector measure_policy(const CnnClassifier& model, const EmbeddingModel& embeddings,
                                const PolicyDocument& policy, double tau, int threads) {
  if (policy.segments.empty()) throw EmptyPolicy("policy " + policy.doc_id + " has no segments");
  const auto predictions = predict_all(model, embeddings, policy.segments, threads);
  return compliance_from_predictions(policy.doc_id, policy.segments, predictions, tau);
}

std::vector<ComplianceVector> measure_corpus(const CnnClassifier& model,
                                             const EmbeddingModel& embeddings,
                                             const std::vector<PolicyDocument>& corpus,
                                             double tau, int threads) {
  std::vector<ComplianceVector> out;
  out.reserve(corpus.size());
  for (const auto& doc : corpus) {
    if (doc.segments.empty()) continue;
    out.push_back(measure_policy(model, embeddings, doc, tau, threads));
  }
  return out;
}

ComplianceSummary aggregate(std::span<const ComplianceVector> vectors) {
  if (vectors.empty()) throw EmptyDataset("aggregate needs at least one compliance vector");
  ComplianceSummary s;
  s.n_policies = vectors.size();
  for (const auto& v : vectors) {
    for (std::size_t c = 0; c < v.covered.size(); ++c) s.counts[c] += v.covered[c] ? 1 : 0;
    ++s.histogram[static_cast<std::size_t>(v.count())];
  }
  const auto n = static_cast<double>(s.n_policies);
  for (std::size_t c = 0; c < s.counts.size(); ++c) {
    s.fractions[c] = static_cast<double>(s.counts[c]) / n;
  }
  s.full_compliance = static_cast<double>(s.histogram[kNumRequirements]) / n;
  return s;
}

ReportFormat parse_report_format(std::string_view text) {
  if (text == "csv") return ReportFormat::Csv;
  if (text == "json") return ReportFormat::Json;
  if (text == "all") return ReportFormat::All;
  throw ConfigError("unknown report format '" + std::string(text) + "' (csv, json, all)");
}

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fixed6(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

std::string policies_csv(std::span<const ComplianceVector> vectors) {
  std::string out = "doc_id";
  for (const auto& label : requirement_labels()) out += "," + csv_field(label.name);
  out += ",count\n";
  for (const auto& v : vectors) {
    out += csv_field(v.doc_id);
    for (const bool b : v.covered) out += b ? ",1" : ",0";
    out += "," + std::to_string(v.count()) + "\n";
  }
  return out;
}

std::string summary_csv(const ComplianceSummary& s) {
  std::string out = "requirement,count,fraction\n";
  for (const auto& label : requirement_labels()) {
    const auto c = static_cast<std::size_t>(class_index_of(label.code));
    out += csv_field(label.name) + "," + std::to_string(s.counts[c]) + "," + fixed6(s.fractions[c]) +
           "\n";
  }
  return out;
}

ordered_json vector_to_json(const ComplianceVector& v, bool with_evidence) {
  ordered_json j;
  j["doc_id"] = v.doc_id;
  ordered_json codes = ordered_json::array();
  for (std::size_t c = 0; c < v.covered.size(); ++c) {
    if (v.covered[c]) codes.push_back(code_of_class_index(static_cast<int>(c)));
  }
  j["covered"] = codes;
  j["count"] = v.count();
  if (with_evidence) {
    ordered_json ev = ordered_json::object();
    for (std::size_t c = 0; c < v.evidence.size(); ++c) {
      if (v.evidence[c].empty()) continue;
      ordered_json list = ordered_json::array();
      for (const auto& e : v.evidence[c]) list.push_back({{"seg_id", e.seg_id}, {"probability", e.probability}});
      ev[std::to_string(code_of_class_index(static_cast<int>(c)))] = list;
    }
    j["evidence"] = ev;
  }
  return j;
}

}  // namespace

std::string report_json(const ComplianceSummary& summary,
                        std::span<const ComplianceVector> vectors) {
  ordered_json j;
  j["n_policies"] = summary.n_policies;
  j["full_compliance"] = summary.full_compliance;
  j["histogram"] = summary.histogram;
  ordered_json reqs = ordered_json::array();
  for (const auto& label : requirement_labels()) {
    const auto c = static_cast<std::size_t>(class_index_of(label.code));
    reqs.push_back({{"code", label.code},
                    {"name", label.name},
                    {"count", summary.counts[c]},
                    {"fraction", summary.fractions[c]}});
  }
  j["requirements"] = reqs;
  ordered_json pol = ordered_json::array();
  for (const auto& v : vectors) pol.push_back(vector_to_json(v, false));
  j["policies"] = pol;
  return j.dump(2) + "\n";
}

void export_report(const ComplianceSummary& summary, std::span<const ComplianceVector> vectors,
                   const std::filesystem::path& dir, ReportFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  if (format != ReportFormat::Json) {
    internal::write_text_file(dir / "report_policies.csv", policies_csv(vectors));
    internal::write_text_file(dir / "report_summary.csv", summary_csv(summary));
  }
  if (format != ReportFormat::Csv) {
    internal::write_text_file(dir / "report.json", report_json(summary, vectors));
  }
}

void save_compliance(std::span<const ComplianceVector> vectors, const std::filesystem::path& file) {
  std::string out;
  for (const auto& v : vectors) out += vector_to_json(v, true).dump() + "\n";
  internal::write_text_file(file, out);
}

std::vector<ComplianceVector> load_compliance(const std::filesystem::path& file) {
  std::istringstream in(internal::read_text_file(file));
  std::vector<ComplianceVector> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ComplianceVector v;
      v.doc_id = j.at("doc_id").get<std::string>();
      for (const int code : j.at("covered").get<std::vector<int>>()) {
        if (!is_requirement_code(code)) throw FormatError("bad requirement code");
        v.covered[static_cast<std::size_t>(class_index_of(code))] = true;
      }
      if (j.contains("evidence")) {
        for (const auto& [key, list] : j.at("evidence").items()) {
          const int code = std::stoi(key);
          if (!is_requirement_code(code)) throw FormatError("bad requirement code");
          auto& ev = v.evidence[static_cast<std::size_t>(class_index_of(code))];
          for (const auto& e : list) {
            ev.push_back({e.at("seg_id").get<int>(), e.at("probability").get<double>()});
          }
        }
      }
      for (std::size_t c = 0; c < v.covered.size(); ++c) {
        if (v.covered[c] != !v.evidence[c].empty() && j.contains("evidence")) {
          throw FormatError("covered flags disagree with evidence");
        }
      }
      out.push_back(std::move(v));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(number, e.what());
    } catch (const FormatError& e) {
      throw ParseError(number, e.what());
    } catch (const std::logic_error& e) {
      throw ParseError(number, e.what());
    }
  }
  return out;
}

}  // namespace gdpr
