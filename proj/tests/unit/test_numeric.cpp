#include <cmath>

#include <gtest/gtest.h>

#include "priorclip/errors.hpp"
#include "priorclip/grad_check.hpp"
#include "priorclip/ops.hpp"
#include "priorclip/rng.hpp"

using namespace priorclip;

namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, bool grad = true) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.normal();
  return Tensor({r, c}, v, grad);
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tensor a = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  Tensor eye = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  EXPECT_EQ(ops::matmul(a, eye).to_vector(), a.to_vector());
}

TEST(Matmul, RowTimesColumn) {
  Tensor out = ops::matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}}));
  ASSERT_EQ(out.shape(), (Shape{1, 1}));
  EXPECT_DOUBLE_EQ(out.item(), 11.0);
}

TEST(Matmul, ZeroAnnihilates) {
  Tensor out = ops::matmul(Tensor::zeros({2, 3}), Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}));
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, InnerDimensionMismatchThrows) {
  EXPECT_THROW(ops::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST(Softmax, UniformOnEqualScores) {
  auto p = ops::softmax(Tensor::vector({0, 0, 0}), 0).to_vector();
  for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, TwoScores) {
  auto p = ops::softmax(Tensor::vector({1, 0}), 0).to_vector();
  EXPECT_NEAR(p[0], 0.7310585786300049, 1e-12);
  EXPECT_NEAR(p[1], 0.2689414213699951, 1e-12);
}

TEST(Softmax, LargeScoreStaysFinite) {
  auto p = ops::softmax(Tensor::vector({1000, 0}), 0).to_vector();
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_GE(p[1], 0.0);
  EXPECT_LT(p[1], 1e-300);
}

TEST(Softmax, ShiftInvariantAndSumsToOne) {
  Rng rng(3);
  Tensor x = random_matrix(rng, 4, 7, false);
  auto a = ops::softmax(x, 1).to_vector();
  auto b = ops::softmax(ops::add_scalar(x, 12.5), 1).to_vector();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 7; ++c) s += a[r * 7 + c];
    EXPECT_NEAR(s, 1.0, 1e-14);
  }
}

TEST(LayerNorm, ConstantRowMapsToZero) {
  auto y = ops::layer_norm(Tensor::matrix({{5, 5, 5, 5}}), Tensor::full({4}, 1.0), Tensor::zeros({4})).to_vector();
  for (double v : y) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, SymmetricPairIsAlreadyNormalized) {
  auto y = ops::layer_norm(Tensor::matrix({{1, -1}}), Tensor::full({2}, 1.0), Tensor::zeros({2})).to_vector();
  EXPECT_NEAR(y[0], 1.0, 1e-5);
  EXPECT_NEAR(y[1], -1.0, 1e-5);
}

TEST(LayerNorm, ZeroGammaReturnsBeta) {
  Rng rng(1);
  auto y = ops::layer_norm(random_matrix(rng, 3, 4, false), Tensor::zeros({4}), Tensor::vector({1, 2, 3, 4}));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(y.at(r, c), double(c + 1));
}

TEST(L2Normalize, Examples) {
  auto y = ops::l2_normalize(Tensor::matrix({{3, 4}})).to_vector();
  EXPECT_DOUBLE_EQ(y[0], 0.6);
  EXPECT_DOUBLE_EQ(y[1], 0.8);
  auto u = ops::l2_normalize(Tensor::matrix({{0, 1}})).to_vector();
  EXPECT_EQ(u, (std::vector<double>{0, 1}));
  EXPECT_THROW(ops::l2_normalize(Tensor::matrix({{0, 0}})), DegenerateInputError);
}

TEST(Autograd, BackwardOnNonScalarIsContractError) {
  Tensor x = Tensor::vector({1, 2}, true);
  EXPECT_THROW(ops::scale(x, 2.0).backward(), ContractError);
}

TEST(Autograd, SumOfSquaresGradient) {
  Tensor x = Tensor::vector({1, 2}, true);
  ops::sum(ops::mul(x, x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
  Tensor x = Tensor::vector({1, 2}, true);
  NoGradGuard guard;
  EXPECT_FALSE(ops::scale(x, 2.0).requires_grad());
}

TEST(Autograd, NonFiniteOutputThrows) {
  EXPECT_THROW(ops::exp(Tensor::vector({1e6})), NumericError);
}

TEST(Precision, F32RoundsOutputs) {
  Tensor x = Tensor::vector({1.0 / 3.0});
  PrecisionGuard guard(Precision::f32);
  double y = ops::scale(x, 1.0).item();
  EXPECT_EQ(y, static_cast<double>(static_cast<float>(1.0 / 3.0)));
}

TEST(GradCheck, SumOfSquares) {
  Tensor x = Tensor::vector({1, 2}, true);
  double err = grad_check([](const Tensor& t) { return ops::sum(ops::mul(t, t)); }, x);
  EXPECT_LT(err, 1e-8);
}

TEST(GradCheck, ConstantFunctionHasZeroError) {
  Tensor x = Tensor::vector({1, 2}, true);
  double err = grad_check([](const Tensor& t) { return ops::sum(ops::scale(t, 0.0)); }, x);
  EXPECT_EQ(err, 0.0);
}

// Each differentiable op against central differences at random points.
TEST(GradCheck, OpsAcrossSeeds) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(mix_seed(seed, "ops"));
    Tensor a = random_matrix(rng, 3, 4), b = random_matrix(rng, 4, 2), c = random_matrix(rng, 3, 4);
    Tensor g = random_matrix(rng, 1, 4), bias = random_matrix(rng, 1, 4);
    Tensor w = random_matrix(rng, 3, 1);
    Tensor bv = ops::reshape(bias, {4});
    std::size_t targets[3] = {1, 3, 0};
    Rng fixed(seed);
    Tensor ra = random_matrix(fixed, 3, 4, false), rb = random_matrix(fixed, 3, 2, false);
    auto rd = [](const Tensor& out, const Tensor& r) { return ops::sum(ops::mul(out, r)); };

    EXPECT_LT(grad_check([&](const std::vector<Tensor>& in) { return rd(ops::matmul(in[0], in[1]), rb); }, {a, b}), 1e-5)
        << "matmul seed " << seed;
    EXPECT_LT(grad_check([&](const std::vector<Tensor>& in) { return rd(ops::mul(in[0], in[1]), ra); }, {a, c}), 1e-5)
        << "mul seed " << seed;
    EXPECT_LT(grad_check([&](const Tensor& x) { return rd(ops::softmax(x, 1), ra); }, a), 1e-5) << "softmax seed " << seed;
    EXPECT_LT(grad_check([&](const Tensor& x) { return rd(ops::softmax(x, 0), ra); }, a), 1e-5) << "softmax0 " << seed;
    EXPECT_LT(grad_check([&](const Tensor& x) { return rd(ops::log_softmax(x, 1), ra); }, a), 1e-5) << "logsm " << seed;
    EXPECT_LT(grad_check([&](const Tensor& x) { return rd(ops::gelu(x), ra); }, a), 1e-5) << "gelu seed " << seed;
    EXPECT_LT(grad_check([&](const Tensor& x) { return rd(ops::l2_normalize(x), ra); }, a), 1e-5) << "l2 seed " << seed;
    EXPECT_LT(grad_check(
                  [&](const std::vector<Tensor>& in) {
                    return rd(ops::layer_norm(in[0], ops::reshape(in[1], {4}), ops::reshape(in[2], {4})), ra);
                  },
                  {a, g, bias}),
              1e-5)
        << "layer_norm seed " << seed;
    EXPECT_LT(grad_check([&](const std::vector<Tensor>& in) { return rd(ops::scale_rows(in[0], ops::reshape(in[1], {3})), ra); },
                         {a, w}),
              1e-5)
        << "scale_rows seed " << seed;
    EXPECT_LT(grad_check([&](const Tensor& x) { return ops::cross_entropy(x, targets); }, a), 1e-5) << "ce seed " << seed;
    EXPECT_LT(grad_check([&](const Tensor& x) { return rd(ops::add_bias(ops::exp(ops::scale(x, 0.3)), bv), ra); }, a), 1e-5)
        << "exp seed " << seed;
  }
}

TEST(GradCheck, AttentionCore) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    ops::AttentionLayout layout{2, 3, 4, 2, {4, 2}};
    Tensor q = random_matrix(rng, 6, 4), k = random_matrix(rng, 8, 4), v = random_matrix(rng, 8, 4);
    Tensor r = random_matrix(rng, 6, 4, false);
    double err = grad_check(
        [&](const std::vector<Tensor>& in) { return ops::sum(ops::mul(ops::attention(in[0], in[1], in[2], layout), r)); },
        {q, k, v});
    EXPECT_LT(err, 1e-5) << "seed " << seed;
  }
}

TEST(Rng, SeededStreamsRepeat) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c(42);
  c.next_u64();
  Rng d(0);
  d.restore(c.state());
  EXPECT_EQ(c.normal(), d.normal());
  EXPECT_NE(mix_seed(1, "a"), mix_seed(1, "b"));
}

TEST(Rng, BelowStaysInRange) {
  Rng rng(9);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(rng.below(7), 7u);
}
