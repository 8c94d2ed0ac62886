#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "menan/checkpoint.hpp"
#include "menan/error.hpp"
#include "menan/ops.hpp"
#include "menan/optim.hpp"
#include "menan/params.hpp"
#include "op_cases.hpp"

using namespace menan;
using namespace menan::numerics;

TEST(Ops, MatmulIdentity) {
  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto c = matmul(a, eye);
  EXPECT_EQ(c.shape(), (Shape{2, 2}));
  EXPECT_EQ(std::vector<double>(c.values().begin(), c.values().end()),
            (std::vector<double>{1, 2, 3, 4}));
}

TEST(Ops, MatmulInnerDimensionMismatch) {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 2});
  EXPECT_THROW(matmul(a, b), DimensionError);
}

TEST(Ops, PreluPiecewise) {
  auto slope = Tensor::from({1}, {0.25});
  auto y = prelu(Tensor::from({2}, {-2.0, 3.0}), slope);
  EXPECT_DOUBLE_EQ(y[0], -0.5);
  EXPECT_DOUBLE_EQ(y[1], 3.0);
}

TEST(Ops, SoftmaxOfZerosIsUniform) {
  auto y = softmax(Tensor::zeros({4}));
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Ops, LogOfNonPositiveRaises) {
  EXPECT_THROW(log(Tensor::from({2}, {1.0, 0.0})), NumericError);
}

TEST(Ops, NonFiniteValuesRejected) {
  EXPECT_THROW(Tensor::from({1}, {std::nan("")}), NumericError);
  auto big = Tensor::from({1}, {1e300});
  EXPECT_THROW(mul(big, big), NumericError);
}

TEST(Ops, ConvOutputLength) {
  EXPECT_EQ(conv1d_output_length(1397, 10, 2), 694u);
  EXPECT_EQ(conv1d_output_length(694, 5, 2), 345u);
  EXPECT_EQ(conv1d_output_length(9, 10, 2), 0u);
  auto x = Tensor::zeros({9, 3});
  auto w = Tensor::zeros({2, 10, 3});
  auto b = Tensor::zeros({2});
  EXPECT_THROW(conv1d(x, w, b, 2), DimensionError);
}

TEST(Ops, ConvMatchesDirectSum) {
  std::mt19937_64 rng(3);
  auto x = test_support::random_tensor({11, 3}, rng);
  auto w = test_support::random_tensor({2, 4, 3}, rng);
  auto b = test_support::random_tensor({2}, rng);
  auto y = conv1d(x, w, b, 3);
  ASSERT_EQ(y.shape(), (Shape{3, 2}));
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t o = 0; o < 2; ++o) {
      double acc = b[o];
      for (std::size_t k = 0; k < 4; ++k)
        for (std::size_t c = 0; c < 3; ++c)
          acc += w[(o * 4 + k) * 3 + c] * x[(t * 3 + k) * 3 + c];
      EXPECT_NEAR(y[t * 2 + o], acc, 1e-12);
    }
}

TEST(Ops, PoolingMatchesBruteForce) {
  std::mt19937_64 rng(5);
  auto x = test_support::random_tensor({7, 3}, rng);
  auto m = mean_time(x), s = std_time(x, 0.0), mx = max_time(x);
  for (std::size_t c = 0; c < 3; ++c) {
    double mu = 0, best = -1e9;
    for (std::size_t t = 0; t < 7; ++t) {
      mu += x[t * 3 + c] / 7.0;
      best = std::max(best, x[t * 3 + c]);
    }
    double var = 0;
    for (std::size_t t = 0; t < 7; ++t) var += std::pow(x[t * 3 + c] - mu, 2) / 7.0;
    EXPECT_NEAR(m[c], mu, 1e-12);
    EXPECT_NEAR(s[c], std::sqrt(var), 1e-12);
    EXPECT_EQ(mx[c], best);
  }
}

TEST(Autodiff, SumOfSquares) {
  auto w = Tensor::from({3}, {1, 2, 3}, true);
  backward(sum(mul(w, w)));
  ASSERT_TRUE(w.has_grad());
  EXPECT_DOUBLE_EQ(w.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(w.grad()[1], 4.0);
  EXPECT_DOUBLE_EQ(w.grad()[2], 6.0);
}

TEST(Autodiff, NonScalarLossRejected) {
  auto w = Tensor::from({3}, {1, 2, 3}, true);
  EXPECT_THROW(backward(mul(w, w)), UsageError);
}

TEST(Autodiff, FrozenTensorGetsNoGradient) {
  ParamSet frozen("a"), live("b");
  auto a = frozen.add("w", Tensor::from({2}, {1, 2}));
  auto b = live.add("w", Tensor::from({2}, {3, 4}));
  frozen.set_frozen(true);
  backward(sum(mul(a, b)));
  EXPECT_FALSE(a.has_grad());
  ASSERT_TRUE(b.has_grad());
  EXPECT_DOUBLE_EQ(b.grad()[1], 2.0);
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
  auto x = Tensor::from({1}, {3.0}, true);
  auto y = mul(x, x);
  backward(sum(add(y, y)));  // d(2x²)/dx = 4x
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Autodiff, ScaleGradReversesOnlyBackward) {
  auto x = Tensor::from({2}, {1.0, -2.0}, true);
  auto y = scale_grad(x, -0.5);
  EXPECT_EQ(y[0], 1.0);
  EXPECT_EQ(y[1], -2.0);
  backward(sum(mul(y, y)));
  EXPECT_DOUBLE_EQ(x.grad()[0], -0.5 * 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -0.5 * -4.0);
}

TEST(Autodiff, GradientCheckEveryOp) {
  std::mt19937_64 rng(20240917);
  std::map<std::string, int> seen;
  for (int round = 0; round < 20; ++round) {
    for (auto& c : test_support::make_op_cases(rng)) {
      double err = test_support::gradient_check(c.op, c.inputs, rng);
      EXPECT_LT(err, 1e-4) << c.name << " round " << round;
      ++seen[c.name];
    }
  }
  EXPECT_EQ(seen.size(), 20u);
  for (const auto& [name, n] : seen) EXPECT_GE(n, 20) << name;
}

TEST(Adam, LearningRateSchedule) {
  EXPECT_DOUBLE_EQ(polynomial_lr(1e-3, 0, 100, 0.9), 1e-3);
  EXPECT_NEAR(polynomial_lr(1e-3, 50, 100, 0.9), 1e-3 * std::pow(0.5, 0.9), 1e-18);
  EXPECT_DOUBLE_EQ(polynomial_lr(1e-3, 100, 100, 0.9), 0.0);
  EXPECT_DOUBLE_EQ(polynomial_lr(1e-3, 7, 0, 0.9), 1e-3);
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
  // m1 = 0.1, v1 = 0.001; bias-corrected both are 1 -> step = lr/(1+eps).
  ParamSet set("p");
  auto w = set.add("w", Tensor::from({1}, {0.0}));
  Adam adam(AdamConfig{.lr = 1e-3, .total_steps = 0});
  adam.attach(set);
  backward(sum(w));
  adam.step(0);
  EXPECT_NEAR(w[0], -1e-3 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  ParamSet set("p");
  auto w = set.add("w", Tensor::from({2}, {0.3, -0.7}));
  Adam adam;
  adam.attach(set);
  backward(sum(scale(w, 0.0)));
  adam.step(0);
  EXPECT_EQ(w[0], 0.3);
  EXPECT_EQ(w[1], -0.7);
}

TEST(Adam, FrozenSetBitwiseUnchanged) {
  std::mt19937_64 rng(1);
  ParamSet a("a"), b("b");
  auto wa = a.add("w", test_support::random_tensor({3, 3}, rng));
  auto wb = b.add("w", test_support::random_tensor({3, 3}, rng));
  Adam adam;
  adam.attach(a);
  adam.attach(b);
  a.set_frozen(true);
  const auto before = a.hash();
  for (int i = 0; i < 25; ++i) {
    a.zero_grad();
    b.zero_grad();
    backward(sum(matmul(wa, wb)));
    adam.step(i);
  }
  EXPECT_EQ(a.hash(), before);
  EXPECT_NE(b.hash(), 0u);
}

TEST(Checkpoint, RoundTripPreservesValuesAndMoments) {
  std::mt19937_64 rng(9);
  ParamSet set("enc");
  auto w = set.add("w", test_support::random_tensor({2, 3}, rng));
  Adam adam;
  adam.attach(set);
  backward(sum(mul(w, w)));
  adam.step(0);

  Checkpoint ckpt;
  ckpt.step = 17;
  ckpt.metadata = R"({"regime":"menan"})";
  append_params(ckpt, set);
  append_moments(ckpt, adam);
  auto path = std::filesystem::temp_directory_path() / "menan_ckpt_test.bin";
  write_checkpoint(path, ckpt);
  auto back = read_checkpoint(path);
  std::filesystem::remove(path);

  EXPECT_EQ(back.step, 17u);
  EXPECT_EQ(back.metadata, ckpt.metadata);
  ParamSet other("enc");
  auto w2 = other.add("w", Tensor::zeros({2, 3}));
  load_params(back, other);
  EXPECT_EQ(other.hash(), set.hash());
  Adam adam2;
  adam2.attach(other);
  load_moments(back, adam2);
  EXPECT_EQ(adam2.moments()[0].second->v, adam.moments()[0].second->v);
}

TEST(Checkpoint, ShapeMismatchRejected) {
  ParamSet set("enc");
  set.add("w", Tensor::zeros({2, 3}));
  Checkpoint ckpt;
  append_params(ckpt, set);
  ParamSet other("enc");
  other.add("w", Tensor::zeros({3, 2}));
  EXPECT_THROW(load_params(ckpt, other), DimensionError);
}

TEST(Checkpoint, GarbageFileRejected) {
  auto path = std::filesystem::temp_directory_path() / "menan_not_ckpt.bin";
  { std::ofstream(path) << "hello"; }
  EXPECT_THROW(read_checkpoint(path), IoError);
  std::filesystem::remove(path);
}
