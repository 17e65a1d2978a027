#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "deitfake/errors.hpp"
#include "deitfake/rng.hpp"
#include "deitfake/tensor.hpp"
#include "fd.hpp"

namespace deitfake {
namespace {

using testing::central_difference;
using testing::rel_error;
using testing::run_backward;

Tensor random_tensor(Shape shape, std::uint64_t seed, bool grad = true) {
  RngStream rng(seed);
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  t.set_requires_grad(grad);
  return t;
}

double sum_of(const Tensor& t) {
  double s = 0.0;
  for (float v : t.data()) s += v;
  return s;
}

// Gradient of a scalar-valued composite against central differences for
// every element of every input.
void expect_gradients_match(std::vector<Tensor> inputs, const std::function<Tensor()>& build, double h = 1e-3,
                            double tol = 1e-2) {
  for (auto& x : inputs) x.clear_grad();
  run_backward(build);
  auto value = [&] { return static_cast<double>(build().item()); };
  for (auto& x : inputs) {
    ASSERT_TRUE(x.has_grad());
    const std::vector<float> analytic(x.grad().begin(), x.grad().end());
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const double numeric = central_difference(x, i, value, h);
      EXPECT_LT(rel_error(analytic[i], numeric), tol) << "element " << i << ": analytic " << analytic[i]
                                                      << " numeric " << numeric;
    }
  }
}

TEST(TensorTest, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<float>(5)), DimensionError);
  EXPECT_THROW(Tensor(Shape{2, 0}), DimensionError);
  Tensor t(Shape{2, 3}, 1.5f);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.dim(1), 3u);
}

TEST(TensorTest, CopiesShareStorageAndCloneDoesNot) {
  Tensor a(Shape{2}, 1.0f);
  Tensor b = a;
  Tensor c = a.clone();
  a.data()[0] = 5.0f;
  EXPECT_EQ(b.data()[0], 5.0f);
  EXPECT_EQ(c.data()[0], 1.0f);
  EXPECT_TRUE(a.same_storage(b));
  EXPECT_FALSE(a.same_storage(c));
}

TEST(MatmulTest, IdentityLeavesMatrixUnchanged) {
  const Tensor eye(Shape{2, 2}, {1, 0, 0, 1});
  const Tensor m(Shape{2, 2}, {1, 2, 3, 4});
  const Tensor out = ops::matmul(eye, m);
  EXPECT_EQ(std::vector<float>(out.data().begin(), out.data().end()), (std::vector<float>{1, 2, 3, 4}));
}

TEST(MatmulTest, RowTimesColumn) {
  const Tensor out = ops::matmul(Tensor(Shape{1, 2}, {1, 2}), Tensor(Shape{2, 1}, {3, 4}));
  ASSERT_EQ(out.shape(), (Shape{1, 1}));
  EXPECT_EQ(out.item(), 11.0f);
}

TEST(MatmulTest, InnerExtentMismatchIsDimensionError) {
  EXPECT_THROW(ops::matmul(Tensor(Shape{2, 3}), Tensor(Shape{2, 3})), DimensionError);
}

TEST(MatmulTest, GradientOfSumIsOnesTimesBTransposed) {
  Tensor a = random_tensor({3, 4}, 1);
  Tensor b = random_tensor({4, 2}, 2, false);
  run_backward([&] { return ops::sum(ops::matmul(a, b)); });
  // d sum(ab) / d a[i][k] = sum_j b[k][j]
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      const double expect = b.data()[k * 2] + b.data()[k * 2 + 1];
      EXPECT_NEAR(a.grad()[i * 4 + k], expect, 1e-6);
    }
  }
  auto value = [&] { return sum_of(ops::matmul(a, b)); };
  const std::vector<float> analytic(a.grad().begin(), a.grad().end());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    EXPECT_LT(rel_error(analytic[i], central_difference(a, i, value, 1e-4)), 1e-3);
  }
}

TEST(MatmulTest, AssociativeOnRandomChains) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor a = random_tensor({8, 8}, seed * 3, false);
    const Tensor b = random_tensor({8, 8}, seed * 3 + 1, false);
    const Tensor c = random_tensor({8, 8}, seed * 3 + 2, false);
    const Tensor left = ops::matmul(ops::matmul(a, b), c);
    const Tensor right = ops::matmul(a, ops::matmul(b, c));
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < left.numel(); ++i) {
      num += std::pow(left.data()[i] - right.data()[i], 2);
      den += std::pow(left.data()[i], 2);
    }
    EXPECT_LT(std::sqrt(num / den), 1e-4);
  }
}

TEST(MatmulTest, BatchedGradients) {
  Tensor a = random_tensor({2, 3, 4}, 3);
  Tensor b = random_tensor({2, 4, 2}, 4);
  const Tensor w = random_tensor({2, 3, 2}, 5, false);
  expect_gradients_match({a, b}, [&] { return ops::sum(ops::mul(ops::matmul(a, b), w)); });
}

TEST(SoftmaxTest, SymmetricInputGivesUniform) {
  const Tensor p = ops::softmax(Tensor(Shape{2}, {0, 0}));
  EXPECT_FLOAT_EQ(p.data()[0], 0.5f);
  EXPECT_FLOAT_EQ(p.data()[1], 0.5f);
}

TEST(SoftmaxTest, LargeLogitsDoNotOverflow) {
  const Tensor p = ops::softmax(Tensor(Shape{2}, {1000, 0}));
  EXPECT_NEAR(p.data()[0], 1.0, 1e-6);
  EXPECT_NEAR(p.data()[1], 0.0, 1e-6);
}

TEST(SoftmaxTest, MatchesScalarOracle) {
  const Tensor p = ops::softmax(Tensor(Shape{3}, {1, 2, 3}));
  const double z = std::exp(-2.0) + std::exp(-1.0) + 1.0;
  EXPECT_NEAR(p.data()[0], std::exp(-2.0) / z, 1e-6);
  EXPECT_NEAR(p.data()[1], std::exp(-1.0) / z, 1e-6);
  EXPECT_NEAR(p.data()[2], 1.0 / z, 1e-6);
  EXPECT_NEAR(p.data()[0], 0.09003, 1e-5);
  EXPECT_NEAR(p.data()[1], 0.24473, 1e-5);
  EXPECT_NEAR(p.data()[2], 0.66524, 1e-5);
}

TEST(SoftmaxTest, RowsAreProbabilityVectorsAndOrderPreserving) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Tensor x = random_tensor({4, 7}, seed, false);
    for (float& v : x.data()) v *= 30.0f;
    const Tensor p = ops::softmax(x);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) {
        const float pj = p.data()[r * 7 + j];
        EXPECT_GE(pj, 0.0f);
        s += pj;
        for (std::size_t k = 0; k < 7; ++k) {
          if (x.data()[r * 7 + j] < x.data()[r * 7 + k]) {
            EXPECT_LE(pj, p.data()[r * 7 + k]);
          }
        }
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(SoftmaxTest, ScalarHasNoClassAxis) { EXPECT_THROW(ops::softmax(Tensor::scalar(1.0f)), DimensionError); }

TEST(SoftmaxTest, Gradients) {
  Tensor x = random_tensor({3, 5}, 7);
  const Tensor w = random_tensor({3, 5}, 8, false);
  expect_gradients_match({x}, [&] { return ops::sum(ops::mul(ops::softmax(x), w)); });
}

TEST(LayerNormTest, ConstantSliceMapsToZero) {
  const Tensor out = ops::layer_norm(Tensor(Shape{3}, {5, 5, 5}), Tensor(Shape{3}, 1.0f), Tensor(Shape{3}, 0.0f), 1e-6f);
  for (float v : out.data()) EXPECT_EQ(v, 0.0f);
}

TEST(LayerNormTest, StandardizesWithoutEps) {
  const Tensor out = ops::layer_norm(Tensor(Shape{3}, {1, 2, 3}), Tensor(Shape{3}, 1.0f), Tensor(Shape{3}, 0.0f), 0.0f);
  const double s = std::sqrt(2.0 / 3.0);
  EXPECT_NEAR(out.data()[0], -1.0 / s, 1e-6);
  EXPECT_NEAR(out.data()[1], 0.0, 1e-6);
  EXPECT_NEAR(out.data()[2], 1.0 / s, 1e-6);
  EXPECT_NEAR(out.data()[2], 1.2247, 1e-4);
}

TEST(LayerNormTest, ZeroGainGivesBias) {
  const Tensor out =
      ops::layer_norm(random_tensor({4, 6}, 9, false), Tensor(Shape{6}, 0.0f), Tensor(Shape{6}, 7.0f), 1e-6f);
  for (float v : out.data()) EXPECT_EQ(v, 7.0f);
}

TEST(LayerNormTest, SlicesHaveZeroMeanUnitVariance) {
  Tensor x = random_tensor({5, 16}, 10, false);
  for (float& v : x.data()) v = v * 4.0f + 3.0f;
  const Tensor out = ops::layer_norm(x, Tensor(Shape{16}, 1.0f), Tensor(Shape{16}, 0.0f), 1e-6f);
  for (std::size_t r = 0; r < 5; ++r) {
    double mu = 0.0;
    double var = 0.0;
    for (std::size_t j = 0; j < 16; ++j) mu += out.data()[r * 16 + j];
    mu /= 16.0;
    for (std::size_t j = 0; j < 16; ++j) var += std::pow(out.data()[r * 16 + j] - mu, 2);
    var /= 16.0;
    EXPECT_NEAR(mu, 0.0, 1e-5);
    EXPECT_NEAR(var, 1.0, 1e-5);
  }
}

TEST(LayerNormTest, GainShapeMismatchIsDimensionError) {
  EXPECT_THROW(ops::layer_norm(Tensor(Shape{2, 4}), Tensor(Shape{3}), Tensor(Shape{4}), 1e-6f), DimensionError);
}

TEST(LayerNormTest, Gradients) {
  Tensor x = random_tensor({3, 6}, 11);
  Tensor gain = random_tensor({6}, 12);
  Tensor bias = random_tensor({6}, 13);
  const Tensor w = random_tensor({3, 6}, 14, false);
  expect_gradients_match({x, gain, bias}, [&] { return ops::sum(ops::mul(ops::layer_norm(x, gain, bias, 1e-5f), w)); });
}

TEST(GeluTest, ScalarOracles) {
  EXPECT_EQ(gelu_scalar(0.0), 0.0);
  EXPECT_NEAR(gelu_scalar(10.0), 10.0, 1e-4);
  // tanh form; the exact erf form gives 0.84134 here.
  EXPECT_NEAR(gelu_scalar(1.0), 0.84119, 1e-5);
  const Tensor out = ops::gelu(Tensor(Shape{3}, {0.0f, 1.0f, 10.0f}));
  EXPECT_EQ(out.data()[0], 0.0f);
  EXPECT_NEAR(out.data()[1], 0.84119, 1e-5);
  EXPECT_NEAR(out.data()[2], 10.0, 1e-4);
}

TEST(GeluTest, Gradients) {
  Tensor x = random_tensor({10}, 15);
  for (float& v : x.data()) v *= 3.0f;
  expect_gradients_match({x}, [&] { return ops::sum(ops::gelu(x)); });
}

TEST(BackwardTest, SumGivesOnes) {
  Tensor x = random_tensor({2, 3, 4}, 16);
  run_backward([&] { return ops::sum(x); });
  for (float g : x.grad()) EXPECT_EQ(g, 1.0f);
}

TEST(BackwardTest, SquareGivesTwiceInput) {
  Tensor x(Shape{3}, {1, 2, 3});
  x.set_requires_grad(true);
  run_backward([&] { return ops::sum(ops::mul(x, x)); });
  EXPECT_EQ(std::vector<float>(x.grad().begin(), x.grad().end()), (std::vector<float>{2, 4, 6}));
}

TEST(BackwardTest, FanOutAccumulates) {
  Tensor x(Shape{2}, {1, 2});
  x.set_requires_grad(true);
  run_backward([&] { return ops::sum(ops::add(ops::scale(x, 3.0f), x)); });
  EXPECT_EQ(x.grad()[0], 4.0f);
  EXPECT_EQ(x.grad()[1], 4.0f);
  // A second pass adds on top until the caller zeroes.
  run_backward([&] { return ops::sum(x); });
  EXPECT_EQ(x.grad()[0], 5.0f);
  x.zero_grad();
  EXPECT_EQ(x.grad()[0], 0.0f);
}

TEST(BackwardTest, NonScalarLossIsContractError) {
  Tensor x = random_tensor({3}, 17);
  GradTape tape;
  Tensor y;
  {
    GradTape::Recording rec(tape);
    y = ops::scale(x, 2.0f);
  }
  EXPECT_THROW(backward(y, tape), ContractError);
}

TEST(BackwardTest, SecondReplayIsStateError) {
  Tensor x = random_tensor({3}, 18);
  GradTape tape;
  Tensor y;
  {
    GradTape::Recording rec(tape);
    y = ops::sum(x);
  }
  backward(y, tape);
  EXPECT_TRUE(tape.consumed());
  EXPECT_THROW(backward(y, tape), StateError);
  tape.reset();
  EXPECT_FALSE(tape.consumed());
}

TEST(BackwardTest, TapeRecordsInExecutionOrder) {
  Tensor x = random_tensor({2, 2}, 19);
  GradTape tape;
  {
    GradTape::Recording rec(tape);
    ops::sum(ops::gelu(ops::matmul(x, x)));
  }
  EXPECT_EQ(tape.op_names(), (std::vector<std::string>{"matmul", "gelu", "sum"}));
}

TEST(BackwardTest, NothingRecordedWithoutTrackedInputs) {
  const Tensor x = random_tensor({2, 2}, 20, false);
  GradTape tape;
  {
    GradTape::Recording rec(tape);
    ops::sum(ops::matmul(x, x));
  }
  EXPECT_EQ(tape.size(), 0u);
}

TEST(ShapeOpsTest, Gradients) {
  Tensor x = random_tensor({2, 3, 4}, 21);
  Tensor y = random_tensor({2, 1, 4}, 22);
  Tensor bias = random_tensor({4}, 23);
  const Tensor w = random_tensor({3, 2, 4}, 24, false);
  expect_gradients_match({x, y, bias}, [&] {
    Tensor c = ops::concat(y, x, 1);                    // [2,4,4]
    Tensor s = ops::select(c, 1, 1);                    // [2,4]
    Tensor p = ops::permute(ops::add_bias(x, bias), {1, 0, 2});  // [3,2,4]
    Tensor t = ops::transpose(ops::reshape(s, {2, 4}));  // [4,2]
    return ops::add(ops::sum(ops::mul(p, w)), ops::mean(ops::mul(t, t)));
  });
}

TEST(ShapeOpsTest, BroadcastLeadingGradientSumsCopies) {
  Tensor x = random_tensor({1, 3}, 25);
  run_backward([&] { return ops::sum(ops::broadcast_leading(x, 4)); });
  for (float g : x.grad()) EXPECT_EQ(g, 4.0f);
}

TEST(ShapeOpsTest, BadShapesAreDimensionErrors) {
  EXPECT_THROW(ops::add(Tensor(Shape{2}), Tensor(Shape{3})), DimensionError);
  EXPECT_THROW(ops::add_bias(Tensor(Shape{2, 3}), Tensor(Shape{2})), DimensionError);
  EXPECT_THROW(ops::reshape(Tensor(Shape{2, 3}), {4}), DimensionError);
  EXPECT_THROW(ops::permute(Tensor(Shape{2, 3}), {0, 0}), DimensionError);
  EXPECT_THROW(ops::select(Tensor(Shape{2, 3}), 1, 3), DimensionError);
}

TEST(NumericTest, NonFiniteOutputIsReported) {
  Tensor big(Shape{2}, 3e38f);
  EXPECT_THROW(ops::scale(big, 10.0f), NumericError);
}

}  // namespace
}  // namespace deitfake
