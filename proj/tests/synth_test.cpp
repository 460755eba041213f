#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace geoproto;
using namespace geoproto::synth;

namespace {

double arclength_quadrature(double a, double b) {
  // Composite Simpson on |d/ds (s cos s, s sin s)| = sqrt(1 + s^2).
  const int n = 20000;
  const double h = (b - a) / n;
  double sum = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double s = a + i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    sum += w * std::sqrt(1.0 + s * s);
  }
  return sum * h / 3.0;
}

}  // namespace

TEST(SwissRoll, GeodesicOracles) {
  auto s = gen_swiss_roll(20, 0.0, 1);
  EXPECT_EQ(s.geodesic(3, 3), 0.0);
  s.intrinsic(1, 0) = s.intrinsic(0, 0);
  s.intrinsic(0, 1) = 0.0;
  s.intrinsic(1, 1) = 5.0;
  EXPECT_DOUBLE_EQ(s.geodesic(0, 1), 5.0);
}

TEST(SwissRoll, ArclengthMatchesQuadrature) {
  const auto s = gen_swiss_roll(50, 0.0, 2);
  for (Index i = 0; i + 1 < 50; i += 2) {
    const double a = std::min(s.intrinsic(i, 0), s.intrinsic(i + 1, 0));
    const double b = std::max(s.intrinsic(i, 0), s.intrinsic(i + 1, 0));
    EXPECT_NEAR(swiss_roll_arclength(b) - swiss_roll_arclength(a), arclength_quadrature(a, b), 1e-6);
  }
}

TEST(SwissRoll, ShapeRangesAndDeterminism) {
  const auto a = gen_swiss_roll(500, 0.0, 3);
  const auto b = gen_swiss_roll(500, 0.0, 3);
  EXPECT_TRUE(a.data.features == b.data.features);
  EXPECT_EQ(a.data.dim(), 3);
  EXPECT_EQ(a.data.class_count, 1);
  for (Index i = 0; i < 500; ++i) {
    const double s = a.intrinsic(i, 0);
    EXPECT_GE(s, 1.5 * std::numbers::pi);
    EXPECT_LE(s, 4.5 * std::numbers::pi);
    EXPECT_NEAR(a.data.features(i, 0), s * std::cos(s), 1e-12);
    EXPECT_NEAR(a.data.features(i, 2), s * std::sin(s), 1e-12);
    EXPECT_NEAR(a.data.features(i, 1), a.intrinsic(i, 1), 1e-12);
  }
}

TEST(SwissRoll, OracleIsSymmetricMetric) {
  const auto s = gen_swiss_roll(300, 0.5, 4);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 500; ++t) {
    const Index i = rng() % 300, j = rng() % 300, k = rng() % 300;
    EXPECT_EQ(s.geodesic(i, j), s.geodesic(j, i));
    EXPECT_LE(s.geodesic(i, k), s.geodesic(i, j) + s.geodesic(j, k) + 1e-12);
  }
}

TEST(Circles, GeodesicOracles) {
  auto s = gen_circles(4, 1.0, 2.0, 0.0, 5);
  s.intrinsic(0, 0) = 0.0;
  s.intrinsic(1, 0) = std::numbers::pi;
  EXPECT_NEAR(s.geodesic(0, 1), std::numbers::pi, 1e-15);
  s.intrinsic(0, 0) = 0.1;
  s.intrinsic(1, 0) = 2.0 * std::numbers::pi - 0.1;
  EXPECT_NEAR(s.geodesic(0, 1), 0.2, 1e-12);
  s.intrinsic(2, 0) = 0.0;
  s.intrinsic(3, 0) = std::numbers::pi;
  EXPECT_NEAR(s.geodesic(2, 3), 2.0 * std::numbers::pi, 1e-14);
  EXPECT_THROW(s.geodesic(0, 3), Error);
}

TEST(Circles, BalancedAndOnRadius) {
  const auto s = gen_circles(600, 1.0, 1.3, 0.0, 6);
  EXPECT_EQ(s.data.class_rows(1).size(), 300u);
  EXPECT_EQ(s.data.class_rows(2).size(), 300u);
  for (Index i = 0; i < 600; ++i)
    EXPECT_NEAR(s.data.features.row(i).norm(), i < 300 ? 1.0 : 1.3, 1e-12);
  EXPECT_THROW(gen_circles(5, 1.0, 2.0, 0.0, 0), Error);
  EXPECT_THROW(gen_circles(4, 2.0, 1.0, 0.0, 0), Error);
}

TEST(Spearman, HandExamples) {
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {1, 2, 3}), 1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3}, {3, 2, 1}), -1.0);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {1, 3, 2, 4}), 0.8, 1e-15);
  try {
    spearman({1, 1, 1}, {1, 2, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConstantInput);
  }
}

TEST(Spearman, InvariantUnderMonotoneTransforms) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> a(200), b(200);
  for (int i = 0; i < 200; ++i) {
    a[i] = n(rng);
    b[i] = a[i] + n(rng);
  }
  std::vector<double> fa(200), fb(200);
  for (int i = 0; i < 200; ++i) {
    fa[i] = std::exp(a[i]);
    fb[i] = b[i] * b[i] * b[i] + 2.0;
  }
  EXPECT_NEAR(spearman(a, b), spearman(fa, fb), 1e-14);
}

TEST(Spearman, TiesUseAverageRanks) {
  EXPECT_EQ(average_ranks({10, 20, 20, 30}), (std::vector<double>{1, 2.5, 2.5, 4}));
}

TEST(Ece, HandExamples) {
  EXPECT_NEAR(ece({0.8, 0.8, 0.8, 0.8, 0.8}, {true, true, true, true, false}, 1), 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(ece({1.0, 1.0, 1.0}, {false, false, false}, 10), 1.0);
  std::vector<double> conf;
  std::vector<bool> correct;
  for (int i = 0; i < 5; ++i) {
    conf.push_back(0.2);
    correct.push_back(false);
  }
  for (int i = 0; i < 5; ++i) {
    conf.push_back(0.9);
    correct.push_back(true);
  }
  EXPECT_NEAR(ece(conf, correct, 2), 0.15, 1e-15);
}

TEST(Softmax, SumsToOneAndIsShiftInvariant) {
  Vector s(3);
  s << 1.0, 2.0, 1000.0;
  const Vector p = softmax(s);
  EXPECT_NEAR(p.sum(), 1.0, 1e-15);
  EXPECT_TRUE(((softmax(s.array() + 5.0) - p).cwiseAbs().array() < 1e-15).all());
}
