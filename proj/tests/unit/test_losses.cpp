#include <cmath>

#include <gtest/gtest.h>

#include "priorclip/errors.hpp"
#include "priorclip/losses.hpp"
#include "priorclip/ops.hpp"
#include "priorclip/verify.hpp"

using namespace priorclip;

namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.normal();
  return Tensor({r, c}, v);
}

}  // namespace

TEST(Contrastive, SinglePairIsZero) {
  EXPECT_NEAR(contrastive_loss(Tensor::matrix({{1, 2}}), Tensor::matrix({{-3, 1}}), 0.07).item(), 0.0, 1e-15);
}

TEST(Contrastive, IdenticalEmbeddingsGiveTwoLogTwo) {
  Tensor u = Tensor::matrix({{0.6, 0.8}, {0.6, 0.8}});
  EXPECT_NEAR(contrastive_loss(u, u, 0.07).item(), 2.0 * std::log(2.0), 1e-12);
}

TEST(Contrastive, SeparatedPairsSaturate) {
  Tensor u = Tensor::matrix({{1, 0}, {0, 1}});
  EXPECT_LT(contrastive_loss(u, u, 0.01).item(), 1e-40);
}

TEST(Contrastive, EmptyBatchIsInputError) {
  try {
    contrastive_loss(Tensor::zeros({0, 2}), Tensor::zeros({0, 2}), 0.07);
    FAIL() << "no error for an empty batch";
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::input);
  }
}

TEST(Affiliation, SameClassIdenticalEmbeddingsGiveLogTwo) {
  Tensor u = Tensor::matrix({{0.6, 0.8}, {0.6, 0.8}});
  std::vector<std::size_t> labels = {1, 1};
  EXPECT_NEAR(affiliation_loss(u, u, labels, 2, 1.0 / 0.07).item(), std::log(2.0), 1e-12);
}

TEST(Affiliation, ZeroScaleGivesLogBatch) {
  Rng rng(3);
  std::vector<std::size_t> labels = {0, 2, 2, 1, 0};
  double l = affiliation_loss(random_matrix(rng, 5, 3), random_matrix(rng, 5, 3), labels, 3, 0.0).item();
  EXPECT_NEAR(l, std::log(5.0), 1e-12);
}

TEST(Affiliation, DistinctLabelsHalveContrastive) {
  Rng rng(4);
  Tensor v = random_matrix(rng, 2, 4), t = random_matrix(rng, 2, 4);
  std::vector<std::size_t> labels = {0, 1};
  double la = affiliation_loss(v, t, labels, 2, 1.0 / 0.07, 1e-12).item();
  EXPECT_NEAR(la, 0.5 * contrastive_loss(v, t, 0.07).item(), 1e-6);
}

TEST(Affiliation, LabelOutOfRangeAndZeroRows) {
  Tensor u = Tensor::matrix({{1, 0}, {0, 1}});
  std::vector<std::size_t> bad = {0, 2};
  EXPECT_THROW(affiliation_loss(u, u, bad, 2, 1.0), InputError);
  std::vector<std::size_t> ok = {0, 1};
  EXPECT_THROW(affiliation_loss(Tensor::matrix({{0, 0}, {0, 1}}), u, ok, 2, 1.0), DegenerateInputError);
}

TEST(Losses, PermutationInvariantAndNonNegative) {
  Rng rng(5);
  Tensor v = random_matrix(rng, 6, 3), t = random_matrix(rng, 6, 3);
  std::vector<std::size_t> labels = {0, 1, 1, 2, 0, 2};
  const std::vector<std::size_t> perm = {3, 5, 0, 1, 4, 2};
  std::vector<std::size_t> plabels;
  for (auto p : perm) plabels.push_back(labels[p]);
  Tensor pv = ops::gather_rows(v, perm), pt = ops::gather_rows(t, perm);
  double lc = contrastive_loss(v, t, 0.07).item(), la = affiliation_loss(v, t, labels, 3, 1 / 0.07).item();
  EXPECT_NEAR(contrastive_loss(pv, pt, 0.07).item(), lc, 1e-12);
  EXPECT_NEAR(affiliation_loss(pv, pt, plabels, 3, 1 / 0.07).item(), la, 1e-12);
  EXPECT_GE(lc, 0.0);
  EXPECT_GE(la, 0.0);
}

TEST(TotalLoss, WeightedSum) {
  EXPECT_DOUBLE_EQ(total_loss(1.0, 0.5, 1.0), 1.5);
  EXPECT_DOUBLE_EQ(total_loss(1.0, 0.5, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(total_loss(1.0, 0.0, 3.0), 1.0);
  EXPECT_DOUBLE_EQ(total_loss(Tensor::scalar(1.0), Tensor::scalar(0.5), 2.0).item(), 2.0);
}

TEST(LossConfig, Validation) {
  LossConfig c;
  EXPECT_NO_THROW(c.validate());
  c.tau = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.epsilon = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.lambda_cs = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(LossOracles, LoopOracleAndUniqueLabels) {
  auto oracle = check_affiliation_oracle(200, 7);
  EXPECT_TRUE(oracle.passed) << oracle.detail;
  auto unique = check_unique_label_reduction(100, 8);
  EXPECT_TRUE(unique.passed) << unique.detail;
}

TEST(LossGradients, BothLosses) {
  VerifyOptions opt;
  opt.seeds = 20;
  for (const char* target : {"contrastive_loss", "affiliation_loss"}) {
    auto r = check_gradients(target, opt);
    EXPECT_TRUE(r.passed) << r.detail;
  }
}
