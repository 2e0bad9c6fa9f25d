#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "gradcheck.hpp"
#include "hcbm/ops.hpp"

namespace hcbm::ad {
namespace {

using hcbm::testing::random_tensor;

Tensor iota(Shape shape) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(i) * 0.25f - 3.0f;
  return t;
}

TEST(Tensor, RejectsMismatchedValueCount) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<float>(5)), ShapeError);
  EXPECT_EQ(Tensor(Shape{2, 3}).numel(), 6u);
}

TEST(Ops, Conv2dIdentityImpulseKernel) {
  Tape tape;
  const Tensor img = iota({2, 3, 7, 5});
  Parameter k("k", Tensor({3, 3, 3, 3})), b("b", Tensor({3}));
  for (std::size_t c = 0; c < 3; ++c) k.value[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0f;
  auto out = conv2d(tape.input(img), tape.parameter(k), tape.parameter(b));
  EXPECT_EQ(out.value(), img);
}

TEST(Ops, Conv2dMatchesDirectLoop) {
  std::mt19937_64 rng(3);
  const auto x = random_tensor({1, 2, 5, 6}, rng).cast<float>();
  const auto k = random_tensor({3, 2, 3, 3}, rng).cast<float>();
  const auto b = random_tensor({3}, rng).cast<float>();
  Tape tape;
  Parameter kp("k", k), bp("b", b);
  const auto out = conv2d(tape.input(x), tape.parameter(kp), tape.parameter(bp)).value();
  for (std::size_t o = 0; o < 3; ++o) {
    for (int y = 0; y < 5; ++y) {
      for (int xx = 0; xx < 6; ++xx) {
        double acc = b[o];
        for (std::size_t c = 0; c < 2; ++c) {
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const int yy = y + dy, xs = xx + dx;
              if (yy < 0 || yy >= 5 || xs < 0 || xs >= 6) continue;
              acc += double(k[((o * 2 + c) * 3 + std::size_t(dy + 1)) * 3 + std::size_t(dx + 1)]) *
                     x[(c * 5 + std::size_t(yy)) * 6 + std::size_t(xs)];
            }
          }
        }
        EXPECT_NEAR(out[(o * 5 + std::size_t(y)) * 6 + std::size_t(xx)], acc, 1e-5);
      }
    }
  }
}

TEST(Ops, Conv2dShapeErrors) {
  Tape tape;
  Parameter k("k", Tensor({4, 2, 3, 3})), b("b", Tensor({4})), even("e", Tensor({4, 3, 2, 2}));
  auto x = tape.input(Tensor({1, 3, 8, 8}));
  EXPECT_THROW(conv2d(x, tape.parameter(k), tape.parameter(b)), ShapeError);
  EXPECT_THROW(conv2d(x, tape.parameter(even), tape.parameter(b)), ShapeError);
}

TEST(Ops, MaxPoolHalvesSpatialSize) {
  Tape tape;
  auto out = maxpool2d(tape.input(Tensor({2, 3, 64, 64})), 2);
  EXPECT_EQ(out.shape(), (Shape{2, 3, 32, 32}));
  Tape t2;
  auto small = maxpool2d(t2.input(Tensor({1, 1, 2, 2}, {1.0f, 4.0f, -2.0f, 3.0f})), 2);
  EXPECT_EQ(small.value()[0], 4.0f);
}

TEST(Ops, AddZeroAndSingleConcatAreIdentities) {
  Tape tape;
  const Tensor x = iota({3, 4});
  auto xv = tape.input(x);
  EXPECT_EQ(add(xv, tape.input(Tensor({3, 4}))).value(), x);
  const Var parts[] = {xv};
  EXPECT_EQ(concat(std::span<const Var>(parts), 1).value(), x);
  EXPECT_THROW(add(xv, tape.input(Tensor({4, 3}))), ShapeError);
}

TEST(Ops, ConcatAlongFeatureAxis) {
  Tape tape;
  const Var parts[] = {tape.input(Tensor({2, 1}, {1, 2})), tape.input(Tensor({2, 2}, {3, 4, 5, 6}))};
  EXPECT_EQ(concat(std::span<const Var>(parts), 1).value(), Tensor({2, 3}, {1, 3, 4, 2, 5, 6}));
}

TEST(Ops, ShapeErrorNamesBothShapes) {
  Tape tape;
  try {
    add(tape.input(Tensor({2, 3})), tape.input(Tensor({3, 2})));
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3, 2]"), std::string::npos) << msg;
  }
}

TEST(Losses, UniformLogitsGiveLogP) {
  for (int p : {2, 10, 21}) {
    Tape tape;
    std::vector<int> labels{0, p - 1, p / 2};
    auto loss = softmax_cross_entropy(tape.input(Tensor({3, std::size_t(p)}, 0.7f)),
                                      std::span<const int>(labels));
    EXPECT_NEAR(loss.value()[0], std::log(double(p)), 1e-6);
  }
}

TEST(Losses, BceAtZeroLogitIsLnTwo) {
  Tape tape;
  auto loss = binary_cross_entropy(tape.input(Tensor({2, 5})), Tensor({2, 5}, {1, 0, 1, 1, 0, 0, 0, 1, 0, 1}));
  EXPECT_NEAR(loss.value()[0], std::numbers::ln2, 1e-6);
}

TEST(Losses, ScaledOneHotLogitsApproachZeroMonotonically) {
  double prev = std::numeric_limits<double>::infinity();
  for (float scale : {1.0f, 10.0f, 100.0f}) {
    Tape tape;
    Tensor logits({2, 4});
    logits[1] = scale;
    logits[4 + 3] = scale;
    std::vector<int> labels{1, 3};
    const double loss = softmax_cross_entropy(tape.input(logits), std::span<const int>(labels)).value()[0];
    EXPECT_LT(loss, prev);
    prev = loss;
  }
  EXPECT_LT(prev, 1e-30 + 1e-6);
}

TEST(Losses, NonFiniteAndBadLabels) {
  Tape tape;
  std::vector<int> labels{0};
  Tensor bad({1, 3});
  bad[1] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(softmax_cross_entropy(tape.input(bad), std::span<const int>(labels)), NumericError);
  std::vector<int> out_of_range{3};
  EXPECT_THROW(softmax_cross_entropy(tape.input(Tensor({1, 3})), std::span<const int>(out_of_range)),
               InvalidConfigError);
  Tensor inf({1, 2});
  inf[0] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(binary_cross_entropy(tape.input(inf), Tensor({1, 2})), NumericError);
}

TEST(Backward, SumOfTwoXHasGradientTwo) {
  Tape tape;
  auto x = tape.input(iota({4, 3}), true);
  tape.backward(sum(scale(x, 2.0f)));
  const auto g = tape.grad(x);
  for (float v : g.values()) EXPECT_EQ(v, 2.0f);
}

TEST(Backward, SigmoidSlopeAtZeroIsQuarter) {
  Tape tape;
  auto x = tape.input(Tensor({1}), true);
  tape.backward(sum(sigmoid(x)));
  EXPECT_FLOAT_EQ(tape.grad(x)[0], 0.25f);
}

TEST(Backward, DisconnectedOutputIsGraphError) {
  Tape tape;
  auto x = tape.input(iota({3}), false);
  EXPECT_THROW(tape.backward(sum(x)), GraphError);
  EXPECT_THROW(tape.input_gradient(sum(x), x), GraphError);
}

TEST(Backward, InputGradientLeavesConstantParametersUntouched) {
  Tape tape;
  Parameter w("w", Tensor({2, 3}, 0.5f)), b("b", Tensor({2}));
  auto x = tape.input(iota({1, 3}), true);
  auto y = sum(linear(x, tape.parameter(w, false), tape.parameter(b, false)));
  const auto g = tape.input_gradient(y, x);
  for (float v : g.values()) EXPECT_FLOAT_EQ(v, 1.0f);
  for (float v : w.grad.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Backward, ParameterGradientsAccumulateAcrossSweeps) {
  Parameter w("w", Tensor({1, 2}, 1.0f)), b("b", Tensor({1}));
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(sum(linear(tape.input(Tensor({1, 2}, {3.0f, 4.0f})), tape.parameter(w), tape.parameter(b))));
  }
  EXPECT_EQ(w.grad, Tensor({1, 2}, {6.0f, 8.0f}));
  EXPECT_EQ(b.grad[0], 2.0f);
}

TEST(Backward, Linearity) {
  std::mt19937_64 rng(8);
  auto net = hcbm::testing::make_random_net(4);
  auto grads = [&](double a, double b) {
    hcbm::testing::DTape tape;
    auto x = tape.input(net.x, true);
    std::vector<hcbm::testing::DVar> p;
    for (auto& prm : net.params) p.push_back(tape.parameter(prm, false));
    auto l1 = net.loss(tape, x, p);
    auto l2 = sum(mul(sigmoid(x), x));
    tape.backward(add(scale(l1, a), scale(l2, b)));
    return tape.grad(x);
  };
  const auto g1 = grads(1, 0), g2 = grads(0, 1), g = grads(2.5, -0.75);
  for (std::size_t i = 0; i < g.numel(); ++i) EXPECT_NEAR(g[i], 2.5 * g1[i] - 0.75 * g2[i], 1e-12);
}

TEST(Backward, StraightThroughThreshold) {
  Tape tape;
  auto p = tape.input(Tensor({4}, {0.2f, 0.5f, 0.51f, 0.9f}), true);
  auto bits = threshold_ste(p);
  EXPECT_EQ(bits.value(), Tensor({4}, {0, 0, 1, 1}));
  tape.backward(sum(scale(bits, 3.0f)));
  const auto g = tape.grad(p);
  for (float v : g.values()) EXPECT_EQ(v, 3.0f);
}

TEST(Dropout, IdentityInEvalModeAndAtZero) {
  std::mt19937_64 rng(1);
  Tape tape;
  const Tensor x = iota({4, 8});
  auto xv = tape.input(x);
  EXPECT_EQ(dropout(xv, 0.5, Mode::eval, rng).value(), x);
  EXPECT_EQ(dropout(xv, 0.0, Mode::train, rng).value(), x);
}

TEST(Dropout, TrainModeZeroesAndRescales) {
  std::mt19937_64 rng(2);
  Tape tape;
  const Tensor x({100, 100}, 1.0f);
  const auto y = dropout(tape.input(x), 0.25, Mode::train, rng).value();
  std::size_t kept = 0;
  for (float v : y.values()) {
    EXPECT_TRUE(v == 0.0f || std::abs(v - 1.0f / 0.75f) < 1e-6f);
    kept += v != 0.0f;
  }
  EXPECT_NEAR(kept / 10000.0, 0.75, 0.02);
}

class GradientCheck : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(GradientCheck, RandomNetworkMatchesCentralDifferences) {
  auto net = hcbm::testing::make_random_net(GetParam());
  const auto res = hcbm::testing::gradient_check(net.loss, net.x, net.params);
  EXPECT_GT(res.checked, 100u);
  EXPECT_LT(res.max_rel_error, 1e-3) << res.worst;
}

INSTANTIATE_TEST_SUITE_P(Seeds, GradientCheck, ::testing::Range<std::uint64_t>(100, 106));

TEST(Elementwise, SignClampProject) {
  EXPECT_EQ(sign(Tensor({3}, {-3.0f, 0.0f, 0.5f})), Tensor({3}, {-1, 0, 1}));
  EXPECT_EQ(clamp(Tensor({3}, {-3.0f, 0.0f, 5.0f}), -1.0f, 1.0f), Tensor({3}, {-1, 0, 1}));
  EXPECT_THROW(clamp(Tensor({1}), 1.0f, -1.0f), InvalidConfigError);

  std::mt19937_64 rng(4);
  const auto x = random_tensor({50}, rng).cast<float>();
  const float eps = 0.03f;
  Tensor far = x;
  for (auto& v : far.values()) v += 2 * eps;
  const auto p = project_linf(far, x, eps);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_FLOAT_EQ(p[i], x[i] + eps);
  EXPECT_LE(linf_distance(p, x), double(eps));
  EXPECT_EQ(project_linf(p, x, eps), p);  // idempotent
  EXPECT_EQ(project_linf(far, x, std::numeric_limits<float>::infinity()), far);
  EXPECT_THROW(project_linf(far, x, -1.0f), InvalidConfigError);
}

TEST(Elementwise, ProjectionBoundIsExactOnAwkwardValues) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(-3.0f, 3.0f);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor x({64}), y({64});
    for (std::size_t i = 0; i < 64; ++i) {
      x[i] = u(rng);
      y[i] = u(rng);
    }
    const float eps = std::uniform_real_distribution<float>(0.0f, 0.5f)(rng);
    EXPECT_LE(linf_distance(project_linf(y, x, eps), x), double(eps));
  }
}

}  // namespace
}  // namespace hcbm::ad
