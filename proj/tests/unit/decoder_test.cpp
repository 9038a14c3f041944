#include "../support/brute_force.hpp"
#include "leona/decoder.hpp"
#include "leona/evaluator.hpp"

#include <gtest/gtest.h>

using namespace leona;
using leona::testing::random_emissions;
using leona::testing::random_params;

namespace {

SlotPrediction spans_of(const std::string& slot, std::size_t J,
                        std::vector<std::tuple<std::size_t, std::size_t, double>> spans) {
  SlotPrediction p;
  p.slot_type = slot;
  p.labels.assign(J, Tag::O);
  for (auto [s, e, c] : spans) {
    p.labels[s] = Tag::B;
    for (std::size_t j = s + 1; j <= e; ++j) p.labels[j] = Tag::I;
    p.spans.push_back({s, e, c, slot});
  }
  return p;
}

// Arbitrary, possibly inconsistent spans: overlapping, NaN or out-of-range confidences.
std::vector<SlotPrediction> adversarial(SplitMix64& rng, std::size_t J) {
  std::vector<SlotPrediction> out;
  const std::size_t n_slots = 1 + rng.below(4);
  for (std::size_t k = 0; k < n_slots; ++k) {
    SlotPrediction p;
    p.slot_type = std::string(1, static_cast<char>('a' + k));
    p.labels.assign(J, Tag::O);
    const std::size_t n = rng.below(4);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t s = rng.below(J);
      const std::size_t e = s + rng.below(J - s);
      double c = rng.uniform(-0.5, 1.5);
      if (rng.below(10) == 0) c = std::nan("");
      if (rng.below(10) == 0) c = 0.5;
      p.spans.push_back({s, e, c, p.slot_type});
    }
    out.push_back(std::move(p));
  }
  return out;
}

void expect_consistent(const MergedPrediction& m) {
  EXPECT_TRUE(is_iob_valid(m.labels));
  const auto spans = extract_spans(m.labels);
  EXPECT_EQ(spans.size(), m.spans.size());
  for (std::size_t a = 0; a < m.spans.size(); ++a)
    for (std::size_t b = a + 1; b < m.spans.size(); ++b)
      EXPECT_FALSE(m.spans[a].range().overlaps(m.spans[b].range()));
}

}  // namespace

TEST(Decoder, DecodedSpansAreTheRunsWithBoundedConfidence) {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t J = 1 + rng.below(10);
    const auto emis = random_emissions(rng, J, 4.0);
    const auto params = random_params(rng);
    for (auto mode : {ConfidenceMode::span_marginals, ConfidenceMode::path_probability}) {
      const auto p = decode_slot("s", emis, params, mode);
      EXPECT_TRUE(is_iob_valid(p.labels));
      const auto runs = tag_runs(p.labels);
      ASSERT_EQ(runs.size(), p.spans.size());
      for (std::size_t i = 0; i < runs.size(); ++i) {
        EXPECT_EQ(runs[i], p.spans[i].range());
        EXPECT_GE(p.spans[i].confidence, 0.0);
        EXPECT_LE(p.spans[i].confidence, 1.0);
      }
    }
  }
}

TEST(Decoder, SpanConfidenceIsGeometricMeanOfMarginals) {
  const crf::CrfParams params = crf::CrfParams::iob();
  const crf::Emissions emis = {{0, 0, 2}, {3, 0, 0}, {0, 2.5, 0}, {0, 0, 1}};
  const auto p = decode_slot("s", emis, params);
  ASSERT_EQ(p.spans.size(), 1u);
  const auto m = crf::marginals(emis, params);
  EXPECT_NEAR(p.spans[0].confidence, std::sqrt(m[1][0] * m[2][1]), 1e-12);
  const auto q = decode_slot("s", emis, params, ConfidenceMode::path_probability);
  EXPECT_NEAR(q.spans[0].confidence, std::exp(crf::viterbi(emis, params).path_log_prob), 1e-12);
}

TEST(Decoder, MergeWithoutConflictsIsTheUnion) {
  const auto m = merge({spans_of("city", 6, {{4, 5, 0.7}}), spans_of("artist", 6, {{0, 1, 0.4}})}, 6);
  EXPECT_EQ(m.labels, (std::vector<std::string>{"B-artist", "I-artist", "O", "O", "B-city", "I-city"}));
}

TEST(Decoder, HigherConfidenceWinsAndLoserIsDropped) {
  const auto m = merge({spans_of("restaurant_name", 14, {{8, 10, 0.6}}),
                        spans_of("city", 14, {{8, 10, 0.9}, {12, 13, 0.3}})},
                       14);
  EXPECT_EQ(m.labels[8], "B-city");
  EXPECT_EQ(m.labels[10], "I-city");
  EXPECT_EQ(m.labels[12], "B-city");
  for (const auto& l : m.labels) EXPECT_EQ(l.find("restaurant"), std::string::npos);
}

TEST(Decoder, TiesGoToLongerSpanThenSmallerSlotName) {
  auto m = merge({spans_of("b_slot", 5, {{1, 2, 0.5}}), spans_of("a_slot", 5, {{2, 2, 0.5}})}, 5);
  EXPECT_EQ(m.labels[1], "B-b_slot");
  m = merge({spans_of("zeta", 5, {{1, 2, 0.5}}), spans_of("alpha", 5, {{2, 3, 0.5}})}, 5);
  EXPECT_EQ(m.labels[2], "B-alpha");
  EXPECT_EQ(m.labels[1], "O");
}

TEST(Decoder, MergeRejectsInconsistentInput) {
  EXPECT_THROW(merge({spans_of("a", 4, {}), spans_of("b", 5, {})}, 4), std::invalid_argument);
  SlotPrediction bad = spans_of("a", 4, {});
  bad.spans.push_back({2, 7, 0.5, "a"});
  EXPECT_THROW(merge({bad}, 4), std::invalid_argument);
}

TEST(Decoder, MergeIsValidDeterministicAndIdempotentOnAdversarialInput) {
  SplitMix64 rng(77);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t J = 1 + rng.below(12);
    const auto preds = adversarial(rng, J);
    const auto m = merge(preds, J);
    expect_consistent(m);
    EXPECT_EQ(merge(preds, J).labels, m.labels);
    const auto again = merge(rewrap(m), J);
    EXPECT_EQ(again.labels, m.labels);
  }
}

TEST(Decoder, RandomEmissionDecodesNeverBreakIob) {
  SplitMix64 rng(4242);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t J = 1 + rng.below(15);
    std::vector<SlotPrediction> preds;
    for (const char* s : {"x", "y", "z"})
      preds.push_back(decode_slot(s, random_emissions(rng, J, 6.0), random_params(rng, 4.0)));
    for (const auto& p : preds) EXPECT_TRUE(is_iob_valid(p.labels));
    expect_consistent(merge(preds, J));
  }
}

TEST(Decoder, PredictionFilesRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "leona-preds.jsonl";
  std::vector<PredictionRecord> recs = {{"a", {"x", "y"}, std::vector<std::string>{"B-s", "O"}, {"O", "O"}},
                                        {"b", {"z"}, std::nullopt, {"B-t"}}};
  write_file_atomic(path, predictions_jsonl(recs));
  const auto back = load_predictions(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].gold, recs[0].gold);
  EXPECT_FALSE(back[1].gold.has_value());
  EXPECT_EQ(back[1].pred, recs[1].pred);
  write_file_atomic(path, "{\"id\":\"a\",\"tokens\":[\"x\"],\"pred\":[\"O\",\"O\"]}\n");
  EXPECT_THROW(load_predictions(path), ValidationError);
}
