#include "../support/brute_force.hpp"

#include <gtest/gtest.h>

using namespace leona;
using namespace leona::crf;
using leona::testing::enumerate;
using leona::testing::random_emissions;
using leona::testing::random_params;
using leona::testing::sequence_score;

TEST(Crf, MatchesBruteForceOnRandomInstances) {
  SplitMix64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t J = 1 + rng.below(6);
    const auto emis = random_emissions(rng, J);
    const auto p = random_params(rng);
    const auto ref = enumerate(emis, p);

    EXPECT_NEAR(log_partition(emis, p), ref.log_z, 1e-8);
    const Decoded d = viterbi(emis, p);
    EXPECT_EQ(d.tags, ref.best) << "trial " << trial;
    EXPECT_NEAR(d.path_log_prob, ref.best_score - ref.log_z, 1e-8);
    EXPECT_NEAR(ref.probability_mass, 1.0, 1e-9);

    const auto m = marginals(emis, p);
    for (std::size_t j = 0; j < J; ++j) {
      double row = 0.0;
      for (std::size_t t = 0; t < kNumTags; ++t) {
        EXPECT_NEAR(m[j][t], ref.marginals[j][t], 1e-8);
        row += m[j][t];
      }
      EXPECT_NEAR(row, 1.0, 1e-9);
    }
    EXPECT_NEAR(log_likelihood(emis, ref.best, p), ref.best_score - ref.log_z, 1e-8);
  }
}

TEST(Crf, ForbiddenMovesGetNoMass) {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t J = 2 + rng.below(5);
    const auto emis = random_emissions(rng, J, 8.0);
    const auto p = random_params(rng);
    const auto m = marginals(emis, p);
    EXPECT_LT(m[0][index_of(Tag::I)], 1e-300 + 1e-12);
    EXPECT_TRUE(is_iob_valid(viterbi(emis, p).tags));
  }
}

TEST(Crf, ViterbiAvoidsIAfterOEvenWhenEmissionsDemandIt) {
  CrfParams p = CrfParams::iob();
  Emissions e = {{0, 0, 5}, {0, 9, 0}, {0, 9, 0}};
  const auto d = viterbi(e, p);
  EXPECT_TRUE(is_iob_valid(d.tags));
  EXPECT_EQ(to_string(d.tags), "B I I");
}

TEST(Crf, ZeroScoresDecodeToAllOutside) {
  const CrfParams p = CrfParams::iob();
  for (std::size_t J = 1; J <= 6; ++J) {
    const Emissions e(J, Row{0, 0, 0});
    EXPECT_EQ(viterbi(e, p).tags, std::vector<Tag>(J, Tag::O));
  }
}

TEST(Crf, TiesPreferOutsideThenBegin) {
  CrfParams p = CrfParams::iob();
  // B and I tie at position 1 after a B; I is never chosen over B.
  Emissions e = {{3, 0, 0}, {1, 1, 0}};
  EXPECT_EQ(to_string(viterbi(e, p).tags), "B B");
  e = {{1, 0, 1}};
  EXPECT_EQ(to_string(viterbi(e, p).tags), "O");
}

TEST(Crf, PathProbabilityIsAtMostOne) {
  SplitMix64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto emis = random_emissions(rng, 1 + rng.below(8), 20.0);
    const auto p = random_params(rng, 5.0);
    const auto d = viterbi(emis, p);
    EXPECT_LE(d.path_log_prob, 0.0);
    EXPECT_NEAR(sequence_score(emis, p, d.tags) - log_partition(emis, p), d.path_log_prob, 1e-9);
  }
}

TEST(Crf, EmptyInputIsRejected) {
  const CrfParams p = CrfParams::iob();
  EXPECT_THROW(log_partition({}, p), std::invalid_argument);
  EXPECT_THROW(viterbi({}, p), std::invalid_argument);
}

TEST(Crf, NllGradientIsExpectedMinusObservedCounts) {
  SplitMix64 rng(3);
  const auto emis = random_emissions(rng, 4);
  const auto p = random_params(rng);
  Tensor et(Shape{4, 3}), tt(Shape{3, 3}), st(Shape{3, 1}), nt(Shape{3, 1});
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t c = 0; c < 3; ++c) et.at(j, c) = emis[j][c];
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) tt.at(a, b) = p.transitions[a][b];
    st[a] = p.start[a];
    nt[a] = p.end[a];
  }
  const std::vector<Tag> gold = {Tag::O, Tag::B, Tag::I, Tag::O};
  Tape t;
  Var ev = t.variable(et);
  Var loss = neg_log_likelihood(ev, t.variable(tt), t.variable(st), t.variable(nt), gold);
  EXPECT_NEAR(loss.value()[0], -log_likelihood(emis, gold, p), 1e-12);
  t.backward(loss);
  const Tensor g = t.grad(ev);
  const auto m = marginals(emis, p);
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t c = 0; c < 3; ++c)
      EXPECT_NEAR(g.at(j, c), m[j][c] - (index_of(gold[j]) == c ? 1.0 : 0.0), 1e-10);
}
