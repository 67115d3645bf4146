#include <gtest/gtest.h>

#include "json.hpp"
#include <sstream>

#include "gdpr/compliance.hpp"
#include "gdpr/errors.hpp"
#include "synthetic_fixture.hpp"
#include "test_support.hpp"

namespace gdpr {
namespace {

using testing::TempDir;

std::vector<Segment> segments_of(const std::string& doc, int n) {
  std::vector<Segment> out;
  for (int i = 0; i < n; ++i) out.push_back({doc, i, "x", {"x"}});
  return out;
}

// Prediction whose top class is `code` with probability p; the rest is spread.
Prediction peaked(int code, float p) {
  std::vector<float> probs(kNumRequirements, (1.0f - p) / (kNumRequirements - 1));
  probs[static_cast<std::size_t>(code - 1)] = p;
  return prediction_from_probs(std::move(probs));
}

TEST(ComplianceVector, CoveredCodesFromPredictions) {
  const auto segs = segments_of("p", 4);
  const std::vector<Prediction> preds{peaked(1, 0.9f), peaked(2, 0.7f), peaked(14, 0.6f),
                                      peaked(5, 0.4f)};
  const auto v = compliance_from_predictions("p", segs, preds, 0.5);
  EXPECT_EQ(v.count(), 3);
  for (int code = 1; code <= 18; ++code) {
    EXPECT_EQ(v.covered[code - 1], code == 1 || code == 2 || code == 14) << code;
  }
  ASSERT_EQ(v.evidence[0].size(), 1u);
  EXPECT_EQ(v.evidence[0][0].seg_id, 0);
  EXPECT_NEAR(v.evidence[0][0].probability, 0.9, 1e-6);
}

TEST(ComplianceVector, EvidenceOrderedByProbability) {
  const auto segs = segments_of("p", 3);
  const std::vector<Prediction> preds{peaked(3, 0.6f), peaked(3, 0.95f), peaked(3, 0.8f)};
  const auto v = compliance_from_predictions("p", segs, preds);
  ASSERT_EQ(v.evidence[2].size(), 3u);
  EXPECT_EQ(v.evidence[2][0].seg_id, 1);
  EXPECT_EQ(v.evidence[2][1].seg_id, 2);
  EXPECT_EQ(v.evidence[2][2].seg_id, 0);
}

TEST(ComplianceVector, AllBelowTauCoversNothing) {
  const auto segs = segments_of("p", 3);
  const std::vector<Prediction> preds{peaked(1, 0.3f), peaked(2, 0.45f), peaked(3, 0.5f)};
  EXPECT_EQ(compliance_from_predictions("p", segs, preds, 0.5).count(), 0);
}

TEST(ComplianceVector, TauOneCoversNothing) {
  const auto segs = segments_of("p", 1);
  const std::vector<Prediction> preds{peaked(4, 1.0f)};
  EXPECT_EQ(compliance_from_predictions("p", segs, preds, 1.0).count(), 0);
}

TEST(ComplianceVector, Errors) {
  const std::vector<Segment> none;
  const std::vector<Prediction> no_preds;
  EXPECT_THROW(compliance_from_predictions("p", none, no_preds), EmptyPolicy);
  const auto segs = segments_of("p", 2);
  const std::vector<Prediction> one{peaked(1, 0.9f)};
  EXPECT_THROW(compliance_from_predictions("p", segs, one), ShapeError);
}

TEST(ComplianceVector, PropertyMonotoneInTau) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(10));
    const auto segs = segments_of("p", n);
    std::vector<Prediction> preds;
    for (int i = 0; i < n; ++i) preds.push_back(prediction_from_probs(testing::random_probs(rng, 18, 8)));
    const double lo = rng.uniform();
    const double hi = lo + (1 - lo) * rng.uniform();
    const auto a = compliance_from_predictions("p", segs, preds, lo);
    const auto b = compliance_from_predictions("p", segs, preds, hi);
    for (std::size_t c = 0; c < 18; ++c) ASSERT_TRUE(!b.covered[c] || a.covered[c]);
    // Oracle: any segment whose top class is c with P > tau.
    for (std::size_t c = 0; c < 18; ++c) {
      bool expect = false;
      for (const auto& p : preds) {
        expect |= p.top_class == static_cast<int>(c) + 1 && p.probs[c] > lo;
      }
      ASSERT_EQ(a.covered[c], expect);
    }
  }
}

ComplianceVector vector_with(const std::string& id, std::initializer_list<int> codes) {
  ComplianceVector v;
  v.doc_id = id;
  for (const int c : codes) v.covered[static_cast<std::size_t>(c - 1)] = true;
  return v;
}

ComplianceVector full(const std::string& id) {
  ComplianceVector v;
  v.doc_id = id;
  v.covered.fill(true);
  return v;
}

TEST(Aggregate, ThreeFullOutOfHundred) {
  std::vector<ComplianceVector> vs;
  for (int i = 0; i < 97; ++i) vs.push_back(vector_with("p" + std::to_string(i), {1, 2}));
  for (int i = 0; i < 3; ++i) vs.push_back(full("f" + std::to_string(i)));
  const auto s = aggregate(vs);
  EXPECT_EQ(s.n_policies, 100u);
  EXPECT_DOUBLE_EQ(s.full_compliance, 0.03);
  EXPECT_EQ(s.histogram[18], 3u);
  EXPECT_EQ(s.histogram[2], 97u);
  EXPECT_EQ(s.counts[0], 100u);
  EXPECT_EQ(s.counts[5], 3u);
  EXPECT_DOUBLE_EQ(s.fractions[5], 0.03);
}

TEST(Aggregate, SingleEmptyVector) {
  const std::vector<ComplianceVector> vs{vector_with("p", {})};
  const auto s = aggregate(vs);
  EXPECT_EQ(s.histogram[0], 1u);
  EXPECT_DOUBLE_EQ(s.full_compliance, 0.0);
  for (const double f : s.fractions) EXPECT_EQ(f, 0.0);
}

TEST(Aggregate, EmptyInputThrows) {
  const std::vector<ComplianceVector> none;
  EXPECT_THROW(aggregate(none), EmptyDataset);
}

TEST(Aggregate, PropertyColumnSumsAndPermutation) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ComplianceVector> vs(1 + rng.below(40));
    std::array<std::size_t, 18> cols{};
    std::array<std::size_t, 19> hist{};
    for (auto& v : vs) {
      int k = 0;
      for (std::size_t c = 0; c < 18; ++c) {
        v.covered[c] = rng.bernoulli(0.7);
        cols[c] += v.covered[c];
        k += v.covered[c];
      }
      ++hist[static_cast<std::size_t>(k)];
    }
    const auto s = aggregate(vs);
    ASSERT_EQ(s.counts, cols);
    ASSERT_EQ(s.histogram, hist);
    for (std::size_t c = 0; c < 18; ++c) {
      ASSERT_DOUBLE_EQ(s.fractions[c], static_cast<double>(cols[c]) / vs.size());
    }
    shuffle(vs.begin(), vs.end(), rng);
    ASSERT_EQ(aggregate(vs), s);
  }
}

TEST(Export, CsvShapeAndColumnOrder) {
  const std::vector<ComplianceVector> vs{vector_with("a", {1, 18}), vector_with("b", {2})};
  TempDir dir;
  export_report(aggregate(vs), vs, dir.path(), ReportFormat::Csv);
  std::istringstream in(testing::slurp(dir / "report_policies.csv"));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[1], "a,1,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,1,2");
  EXPECT_EQ(lines[2], "b,0,1,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,1");
  EXPECT_EQ(lines[0].rfind("doc_id,", 0), 0u);
  EXPECT_TRUE(std::filesystem::exists(dir / "report_summary.csv"));
  EXPECT_FALSE(std::filesystem::exists(dir / "report.json"));
}

TEST(Export, JsonHistogramAndRequirements) {
  const std::vector<ComplianceVector> vs{vector_with("a", {3}), full("b")};
  const auto j = nlohmann::json::parse(report_json(aggregate(vs), vs));
  ASSERT_EQ(j.at("histogram").size(), 19u);
  EXPECT_EQ(j.at("histogram")[1], 1);
  EXPECT_EQ(j.at("histogram")[18], 1);
  EXPECT_DOUBLE_EQ(j.at("full_compliance").get<double>(), 0.5);
  const auto& reqs = j.at("requirements");
  ASSERT_EQ(reqs.size(), 18u);
  for (int c = 0; c < 18; ++c) EXPECT_EQ(reqs[c].at("code"), c + 1);
  EXPECT_EQ(reqs[2].at("count"), 2);
  EXPECT_EQ(j.at("policies").size(), 2u);
}

TEST(Export, FormatNames) {
  EXPECT_EQ(parse_report_format("json"), ReportFormat::Json);
  EXPECT_THROW(parse_report_format("xml"), ConfigError);
}

TEST(Export, SaveLoadRoundTrip) {
  const auto segs = segments_of("p", 3);
  const std::vector<Prediction> preds{peaked(1, 0.9f), peaked(1, 0.7f), peaked(9, 0.8f)};
  const std::vector<ComplianceVector> vs{compliance_from_predictions("p", segs, preds),
                                         vector_with("q", {})};
  TempDir dir;
  save_compliance(vs, dir / "c.jsonl");
  EXPECT_EQ(load_compliance(dir / "c.jsonl"), vs);
}

TEST(MeasurePolicy, PlantedPolicyCoversEverything) {
  const auto& f = testing::trained_synthetic();
  Rng rng(77);
  PolicyDocument doc;
  doc.doc_id = "planted";
  for (int code = 1; code <= 18; ++code) {
    const auto text = f.vocab.sentence(code, rng) + " " + f.vocab.sentence(code, rng);
    doc.segments.push_back({doc.doc_id, code - 1, text, normalize(text)});
  }
  const auto v = measure_policy(f.model, f.embeddings, doc, 0.5);
  EXPECT_EQ(v.count(), 18);
  // Dropping a requirement's segment uncovers it.
  doc.segments.erase(doc.segments.begin() + 4);
  EXPECT_FALSE(measure_policy(f.model, f.embeddings, doc, 0.5).covered[4]);
  EXPECT_EQ(measure_policy(f.model, f.embeddings, doc, 0.5, 2),
            measure_policy(f.model, f.embeddings, doc, 0.5, 1));
}

TEST(MeasureCorpus, SkipsEmptyPolicies) {
  const auto& f = testing::trained_synthetic();
  auto docs = f.test.documents;
  PolicyDocument empty;
  empty.doc_id = "empty";
  docs.insert(docs.begin() + 1, empty);
  const auto vs = measure_corpus(f.model, f.embeddings, docs);
  ASSERT_EQ(vs.size(), f.test.documents.size());
  EXPECT_EQ(vs[1].doc_id, f.test.documents[1].doc_id);
}

}  // namespace
}  // namespace gdpr
