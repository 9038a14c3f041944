#include "leona/evaluator.hpp"

#include <gtest/gtest.h>

using namespace leona;

namespace {

using Labels = std::vector<std::string>;

EvalItem item(Labels gold, Labels pred, std::string domain = "d") {
  return {"id", std::move(domain), std::move(gold), std::move(pred)};
}

}  // namespace

TEST(Evaluator, ExtractsSpans) {
  EXPECT_EQ(extract_spans({"O", "B-city", "I-city", "O"}), (std::vector<Span>{{1, 2, "city"}}));
  EXPECT_TRUE(extract_spans({"O", "O"}).empty());
  EXPECT_EQ(extract_spans({"B-a", "B-a"}), (std::vector<Span>{{0, 0, "a"}, {1, 1, "a"}}));
  EXPECT_THROW(extract_spans({"O", "I-a"}), IobError);
}

TEST(Evaluator, RenderingInvertsExtraction) {
  SplitMix64 rng(12);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t J = 1 + rng.below(10);
    std::vector<Span> spans;
    std::size_t j = rng.below(3);
    while (j < J) {
      const std::size_t e = std::min(J - 1, j + rng.below(3));
      spans.push_back({j, e, rng.below(2) ? "a" : "b"});
      j = e + 1 + rng.below(3);
    }
    EXPECT_EQ(extract_spans(render_spans(spans, J)), spans);
  }
}

TEST(Evaluator, IdenticalLabelsScorePerfectly) {
  const Labels l = {"B-a", "I-a", "O", "B-b"};
  const auto r = span_f1({item(l, l)});
  EXPECT_EQ(r.micro.f1(), 1.0);
  EXPECT_EQ(r.micro.precision(), 1.0);
  EXPECT_EQ(r.micro.recall(), 1.0);
}

TEST(Evaluator, HandBuiltPrecisionRecall) {
  const auto r = span_f1({item({"O", "B-city", "I-city", "O", "O"}, {"O", "B-city", "I-city", "O", "B-date"})});
  EXPECT_DOUBLE_EQ(r.micro.precision(), 0.5);
  EXPECT_DOUBLE_EQ(r.micro.recall(), 1.0);
  EXPECT_DOUBLE_EQ(r.micro.f1(), 2.0 / 3.0);
  EXPECT_EQ(r.per_slot.at("date").fp, 1u);
}

TEST(Evaluator, WrongTypeOrBoundaryIsBothFalsePositiveAndFalseNegative) {
  auto r = span_f1({item({"O", "B-city", "I-city"}, {"O", "B-state", "I-state"})});
  EXPECT_EQ(r.micro.tp, 0u);
  EXPECT_EQ(r.micro.fp, 1u);
  EXPECT_EQ(r.micro.fn, 1u);
  r = span_f1({item({"O", "B-city", "I-city"}, {"O", "B-city", "O"})});
  EXPECT_EQ(r.micro.fp, 1u);
  EXPECT_EQ(r.micro.fn, 1u);
}

TEST(Evaluator, EmptyDenominatorsScoreZero) {
  const auto r = span_f1({item({"O"}, {"O"})});
  EXPECT_EQ(r.micro.f1(), 0.0);
  EXPECT_TRUE(r.micro.empty());
}

TEST(Evaluator, SeenAndUnseenAreScoredSeparately) {
  // seen slot "city": 1 tp, 1 fn.  unseen slot "salon": 1 tp, 1 fp.
  const std::vector<EvalItem> items = {
      item({"B-city", "O", "B-salon", "O"}, {"B-city", "O", "B-salon", "B-salon"}),
      item({"B-city", "O"}, {"O", "O"}),
  };
  const std::set<std::string> train = {"city"};
  const auto r = span_f1(items, &train);
  ASSERT_TRUE(r.seen && r.unseen);
  EXPECT_DOUBLE_EQ(r.seen->precision(), 1.0);
  EXPECT_DOUBLE_EQ(r.seen->recall(), 0.5);
  EXPECT_DOUBLE_EQ(r.seen->f1(), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.unseen->precision(), 0.5);
  EXPECT_DOUBLE_EQ(r.unseen->recall(), 1.0);
  const std::set<std::string> none;
  const auto all_unseen = span_f1(items, &none);
  EXPECT_FALSE(all_unseen.seen.has_value());
  EXPECT_EQ(report_json(all_unseen)["seen"], nullptr);
  EXPECT_NE(report_text(all_unseen).find("seen F1: N/A"), std::string::npos);
}

TEST(Evaluator, PerDomainTotalsMatchMicro) {
  const auto r = span_f1({item({"B-a", "O"}, {"B-a", "B-b"}, "x"), item({"B-c"}, {"O"}, "y")});
  Counts total;
  for (const auto& [_, c] : r.per_domain) total += c;
  EXPECT_EQ(total.tp, r.micro.tp);
  EXPECT_EQ(total.fp, r.micro.fp);
  EXPECT_EQ(total.fn, r.micro.fn);
}

TEST(Evaluator, LengthMismatchIsAnError) {
  EXPECT_THROW(span_f1({item({"O", "O"}, {"O"})}), ValidationError);
}

TEST(Evaluator, AlignmentListsOrphans) {
  const std::vector<PredictionRecord> gold = {{"a", {"x"}, std::nullopt, {"B-s"}},
                                              {"b", {"y"}, std::nullopt, {"O"}}};
  const std::vector<PredictionRecord> pred = {{"a", {"x"}, std::nullopt, {"O"}},
                                              {"c", {"z"}, std::nullopt, {"O"}}};
  try {
    align(gold, pred);
    FAIL() << "expected an alignment error";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("prediction-only c"), std::string::npos);
    EXPECT_NE(msg.find("gold-only b"), std::string::npos);
  }
  const auto items = align(gold, {pred[0], {"b", {"y"}, std::nullopt, {"O"}}}, {{"a", "dom"}});
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[0].gold, (Labels{"B-s"}));
  EXPECT_EQ(items[0].domain, "dom");
}

TEST(Evaluator, FiveRunAggregation) {
  const auto a = aggregate({0.5, 0.6, 0.7, 0.8, 0.9});
  EXPECT_EQ(a.n, 5u);
  EXPECT_NEAR(a.mean, 0.7, 1e-12);
  EXPECT_NEAR(a.stdev, std::sqrt(0.025), 1e-12);
  EXPECT_EQ(format_aggregate(a), "0.7000 ± 0.1581");
  EXPECT_EQ(aggregate({0.3}).stdev, 0.0);
  EXPECT_THROW(aggregate({}), std::invalid_argument);
}
