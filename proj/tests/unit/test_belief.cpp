#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "priorclip/belief.hpp"
#include "priorclip/errors.hpp"
#include "priorclip/ops.hpp"
#include "priorclip/verify.hpp"

using namespace priorclip;

namespace {

BeliefMatrix belief_of(std::vector<double> w) {
  const std::size_t n = w.size();
  return {Tensor({1, n}, std::move(w))};
}

// Tokens A, B, C as distinguishable one-hot-ish rows.
Tensor abc() { return Tensor::matrix({{1, 0}, {0, 1}, {1, 1}}); }

}  // namespace

TEST(Belief, TwoColumnsSoftmax) {
  auto m = belief_matrix(Tensor::matrix({{1, 0}}), Tensor::matrix({{1, 0}, {0, 1}})).values();
  EXPECT_NEAR(m[0], 0.7310585786300049, 1e-12);
  EXPECT_NEAR(m[1], 0.2689414213699951, 1e-12);
}

TEST(Belief, OrthogonalInstructionGivesUniform) {
  auto m = belief_matrix(Tensor::matrix({{0, 0, 1}}), Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {2, 3, 0}})).values();
  for (double v : m) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Belief, ScalingInstructionKeepsArgmax) {
  Tensor tokens = Tensor::matrix({{0.3, -1}, {2, 0.5}, {-1, 1}});
  for (double alpha : {0.1, 1.0, 7.0}) {
    auto m = belief_matrix(Tensor::matrix({{alpha, 0.2 * alpha}}), tokens).values();
    EXPECT_EQ(std::max_element(m.begin(), m.end()) - m.begin(), 1);
  }
}

TEST(Belief, WidthMismatchThrows) {
  EXPECT_THROW(belief_matrix(Tensor::matrix({{1, 0, 0}}), abc()), DimensionError);
}

TEST(Ranks, Examples) {
  EXPECT_EQ(ranks(std::vector<double>{0.5, 0.2, 0.3}), (RankVector{3, 1, 2}));
  EXPECT_EQ(ranks(std::vector<double>{0.4, 0.4, 0.2}), (RankVector{2, 2, 1}));
  EXPECT_EQ(ranks(std::vector<double>{0.25, 0.25, 0.25, 0.25}), (RankVector{1, 1, 1, 1}));
}

TEST(HardFilter, KeepsTopTwo) {
  auto r = hard_filter(abc(), belief_of({0.2, 0.5, 0.3}), 2);
  EXPECT_EQ(r.kept_indices, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(r.tokens.to_vector(), (std::vector<double>{0, 1, 1, 1}));
}

TEST(HardFilter, FullSizeSortsEverything) {
  auto r = hard_filter(abc(), belief_of({0.2, 0.5, 0.3}), 3);
  EXPECT_EQ(r.kept_indices, (std::vector<std::size_t>{1, 2, 0}));
}

TEST(HardFilter, TieAtCutoffKeepsLowerIndex) {
  auto r = hard_filter(abc(), belief_of({0.4, 0.4, 0.2}), 1);
  EXPECT_EQ(r.kept_indices, (std::vector<std::size_t>{0}));
}

TEST(HardFilter, OutOfRangeIsConfigError) {
  EXPECT_THROW(hard_filter(abc(), belief_of({0.2, 0.5, 0.3}), 0), ConfigError);
  EXPECT_THROW(hard_filter(abc(), belief_of({0.2, 0.5, 0.3}), 4), ConfigError);
}

TEST(SoftReweight, AggregateOfTwoTokens) {
  auto r = soft_reweight(Tensor::matrix({{1, 0}, {0, 1}}), belief_of({0.5, 0.5}), RefineMode::soft_aggregate);
  EXPECT_EQ(r.tokens.shape(), (Shape{1, 2}));
  EXPECT_DOUBLE_EQ(r.tokens.at(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(r.tokens.at(0, 1), 1.5);
}

TEST(SoftReweight, SequenceOfTwoTokens) {
  auto r = soft_reweight(Tensor::matrix({{1, 0}, {0, 1}}), belief_of({0.5, 0.5}), RefineMode::soft_sequence);
  EXPECT_EQ(r.tokens.to_vector(), (std::vector<double>{1.5, 0, 0, 1.5}));
}

TEST(SoftReweight, UniformBeliefGivesEqualWeights) {
  const std::size_t n = 5;
  std::vector<double> ones(n * 3, 1.0);
  auto r = soft_reweight(Tensor({n, 3}, ones), belief_of(std::vector<double>(n, 1.0 / n)), RefineMode::soft_sequence);
  for (double v : r.tokens.values()) EXPECT_NEAR(v, 1.0 / n + 1.0, 1e-15);
}

TEST(SoftReweight, WeightsBoundedByBeliefPlusOne) {
  Rng rng(4);
  for (int c = 0; c < 50; ++c) {
    std::vector<double> b(6);
    double s = 0;
    for (auto& v : b) s += (v = rng.uniform());
    for (auto& v : b) v /= s;
    std::vector<double> ones(6, 1.0);
    auto r = soft_reweight(Tensor({6, 1}, ones), belief_of(b), RefineMode::soft_sequence);
    for (std::size_t l = 0; l < 6; ++l) {
      EXPECT_GT(r.tokens.at(l, 0), b[l]);
      EXPECT_LE(r.tokens.at(l, 0), b[l] + 1.0);
    }
  }
}

TEST(SoftReweight, GradientReachesBeliefsNotRanks) {
  Tensor belief = Tensor({1, 2}, {0.7, 0.3}, true);
  Tensor tokens = Tensor::matrix({{1, 0}, {0, 1}});
  ops::sum(soft_reweight(tokens, BeliefMatrix{belief}, RefineMode::soft_aggregate).tokens).backward();
  EXPECT_DOUBLE_EQ(belief.grad()[0], 1.0);
  EXPECT_DOUBLE_EQ(belief.grad()[1], 1.0);
}

TEST(BatchRefine, MatchesSingleSample) {
  Rng rng(8);
  std::vector<double> tok(2 * 4 * 3), fi(2 * 3);
  for (auto& v : tok) v = rng.normal();
  for (auto& v : fi) v = rng.normal();
  Tensor tokens({8, 3}, tok), f_ins({2, 3}, fi);
  Tensor bel = batch_belief(f_ins, tokens, 4);
  auto hard = batch_refine(tokens, bel, 4, RefineMode::hard, 2);
  for (std::size_t b = 0; b < 2; ++b) {
    Tensor t = ops::gather_rows(tokens, std::vector<std::size_t>{4 * b, 4 * b + 1, 4 * b + 2, 4 * b + 3});
    Tensor f = ops::gather_rows(f_ins, std::vector<std::size_t>{b});
    BeliefMatrix m = belief_matrix(f, t);
    for (std::size_t l = 0; l < 4; ++l) EXPECT_NEAR(bel.at(b, l), m.values()[l], 1e-15);
    EXPECT_EQ(hard.kept_indices[b], hard_filter(t, m, 2).kept_indices);
  }
}

TEST(BeliefOracles, RankAndHardFilter) {
  EXPECT_TRUE(check_rank_oracle(1000, 1).passed);
  EXPECT_TRUE(check_hard_filter_oracle(1000, 2).passed);
}
