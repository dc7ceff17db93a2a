#include <gtest/gtest.h>

#include <cmath>

#include "pretext_forge/losses.hpp"
#include "pretext_forge/rng.hpp"

using namespace pforge;

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  EXPECT_NEAR(cross_entropy({{0, 0, 0, 0}}, {2}), std::log(4.0), 1e-9);
  EXPECT_NEAR(cross_entropy({{3, 3, 3, 3}, {-1, -1, -1, -1}}, {0, 3}), std::log(4.0), 1e-9);
  const auto t = nn::cross_entropy(nn::Tensor<double>::from({1, 4}, {0, 0, 0, 0}), {1});
  EXPECT_NEAR(t.item(), std::log(4.0), 1e-12);
}

TEST(CrossEntropy, ConfidentCorrectIsNearZero) {
  EXPECT_LT(cross_entropy({{50, 0, 0, 0}}, {0}), 1e-12);
  EXPECT_NEAR(cross_entropy({{1000, 0}}, {1}), 1000.0, 1e-9);
}

TEST(CrossEntropy, Errors) {
  auto code = [](auto f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  EXPECT_EQ(code([] { cross_entropy({{0, 0}}, {2}); }), ErrorCode::InvalidTarget);
  EXPECT_EQ(code([] { cross_entropy({{0, 0}}, {-1}); }), ErrorCode::InvalidTarget);
  EXPECT_EQ(code([] { cross_entropy({{0}}, {0}); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(code([] { cross_entropy({}, {}); }), ErrorCode::EmptyInput);
  EXPECT_EQ(code([] { nn::cross_entropy(nn::Tensor<double>::from({1, 3}, {0, 0, 0}), {3}); }), ErrorCode::InvalidTarget);
}

TEST(Cgan, HalfHalf) {
  EXPECT_NEAR(cgan_value({0.5}, {0.5}), -1.386294, 1e-6);
  EXPECT_NEAR(cgan_value({0.5, 0.5}, {0.5, 0.5}), -2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(discriminator_loss({0.5}, {0.5}), 2 * std::log(2.0), 1e-12);
  const auto t = cgan_value(nn::Tensor<double>::from({1, 1}, {0.5}), nn::Tensor<double>::from({1, 1}, {0.5}));
  EXPECT_NEAR(t.item(), -1.386294, 1e-6);
}

TEST(Cgan, ClampedAtExtremes) {
  const double v = cgan_value({0.0}, {1.0});
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, 2 * std::log(kProbabilityClamp), 1e-6);
  EXPECT_NEAR(cgan_value({1.0}, {0.0}), 0.0, 1e-6);
  EXPECT_THROW(cgan_value({0.5}, {}), Error);
}

TEST(Generator, Objectives) {
  EXPECT_NEAR(generator_adversarial_loss({0.5}), std::log(2.0), 1e-12);
  EXPECT_NEAR(generator_adversarial_loss({0.5}, GeneratorObjective::saturating), -std::log(2.0), 1e-12);
  EXPECT_TRUE(std::isfinite(generator_adversarial_loss({0.0})));
}

TEST(ColorLoss, IsCganPlusAlphaL1) {
  LossWeights w;
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double c = rng.uniform(-5, 5), d = rng.uniform(0, 2);
    ASSERT_EQ(color_loss(c, d, w), c + 100 * d);
  }
  const auto t = color_loss(nn::Tensor<double>::scalar(0.75), nn::Tensor<double>::scalar(0.125), w);
  EXPECT_EQ(t.item(), 0.75 + 100 * 0.125);
}

TEST(TotalLoss, UnitComponentsQuarterWeights) {
  LossWeights w;
  EXPECT_NEAR(total_loss(1, 1, 1, 1, w), 1.0, 1e-9);
  const auto one = nn::Tensor<double>::scalar(1);
  EXPECT_NEAR(total_loss(one, one, one, one, w).item(), 1.0, 1e-9);
  w.gamma = {1, 0, 0, 0};
  EXPECT_EQ(total_loss(2, 3, 4, 5, w), 2.0);
}

TEST(TotalLoss, LinearInComponents) {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    LossWeights w;
    for (auto& g : w.gamma) g = rng.uniform(0, 1);
    std::array<double, 4> a{}, b{};
    for (auto& v : a) v = rng.uniform(0, 3);
    for (auto& v : b) v = rng.uniform(0, 3);
    const double lhs = total_loss(a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3], w);
    const double rhs = total_loss(a[0], a[1], a[2], a[3], w) + total_loss(b[0], b[1], b[2], b[3], w);
    ASSERT_NEAR(lhs, rhs, 1e-12);
  }
}

TEST(L1, MeanAbsoluteDifference) {
  AbImage a(2, 1), b(2, 1);
  a.pixels = {1, 2, 3, 4};
  b.pixels = {0, 2, 5, 1};
  EXPECT_DOUBLE_EQ(l1_ab(a, b), (1 + 0 + 2 + 3) / 4.0);
  EXPECT_EQ(l1_ab(a, a), 0.0);
  EXPECT_THROW(l1_ab(a, AbImage(1, 1)), Error);
  const auto t = nn::l1_loss(nn::Tensor<double>::from({4}, {1, 2, 3, 4}), nn::Tensor<double>::from({4}, {0, 2, 5, 1}));
  EXPECT_DOUBLE_EQ(t.item(), 1.5);
}

TEST(Weights, Validation) {
  LossWeights w;
  w.gamma[2] = -0.1;
  EXPECT_THROW(w.validate(), Error);
  w = {};
  w.alpha = std::nan("");
  EXPECT_THROW(w.validate(), Error);
}

TEST(LogFields, RoundTrip) {
  LossReport r{1.5, 0.25, 3.0, 0.125, -0.5, 0.01, 1.2, 8};
  const auto kv = parse_key_values(format_loss_fields(r));
  EXPECT_EQ(kv.at("color"), "1.5");
  EXPECT_EQ(kv.at("N"), "8");
  EXPECT_EQ(std::stod(kv.at("l1")), 0.01);
  for (const char* k : {"color", "rotation", "puzzle", "categ", "cgan", "l1", "total", "N"}) EXPECT_TRUE(kv.count(k));
}
