#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

using namespace geoproto;
using geoproto::testing::random_matrix;
using geoproto::testing::random_vector;

namespace {

ClassManifold random_manifold(std::uint64_t seed, Index n, Index d, int k, int L, int t, Normalization norm) {
  GraphConfig g;
  g.k = k;
  DiffusionConfig c;
  c.L = L;
  c.t = t;
  c.normalization = norm;
  return fit_class_manifold(random_matrix(n, d, seed), g, c);
}

ClassManifold two_node_manifold() {
  Matrix x(2, 2);
  x << 0, 0, 1, 0;
  GraphConfig g;
  g.k = 1;
  DiffusionConfig c;
  c.L = 1;
  c.t = 1;
  c.normalization = Normalization::none;
  return fit_class_manifold(x, g, c);
}

// Bandwidth held at sigma(z), matching the Jacobian's stop-gradient.
Matrix central_differences(const ClassManifold& m, const Vector& z, NystromMode mode) {
  const double h = 1e-5 * (1.0 + z.norm());
  const double sigma = query_bandwidth(m, z);
  Matrix j(m.cfg.L, z.size());
  for (Index c = 0; c < z.size(); ++c) {
    Vector up = z, down = z;
    up(c) += h;
    down(c) -= h;
    j.col(c) = (extend_fixed_bandwidth(m, up, sigma, mode).coords - extend_fixed_bandwidth(m, down, sigma, mode).coords) /
               (2.0 * h);
  }
  return j;
}

}  // namespace

TEST(Extend, LandmarksReproduceStoredCoordinates) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto norm = static_cast<Normalization>(trial % 3);
    const auto m = random_manifold(rng(), 30 + static_cast<Index>(rng() % 70), 2 + static_cast<Index>(rng() % 6),
                                   4 + static_cast<int>(rng() % 8), 8, 1 + static_cast<int>(rng() % 4), norm);
    for (Index i = 0; i < m.size(); ++i) {
      const auto e = extend(m, m.landmarks().row(i).transpose());
      const Vector expect = m.landmark_coords.row(i).transpose();
      EXPECT_LE((e.coords - expect).norm(), 1e-8 * std::max(expect.norm(), 1.0)) << "trial " << trial << " row " << i;
    }
  }
}

TEST(Extend, LandmarkCoordsMatchDiffusionCoords) {
  const auto m = random_manifold(4, 50, 3, 6, 10, 4, Normalization::zca);
  EXPECT_LE(geoproto::testing::max_abs(m.landmark_coords - diffusion_coords(m.basis, m.cfg).coords), 1e-12);
}

TEST(Extend, EquidistantQueryHasZeroAntisymmetricCoordinate) {
  const auto m = two_node_manifold();
  Vector z(2);
  z << 0.5, 0.3;
  const auto e = extend(m, z);
  EXPECT_NEAR(e.coords(0), 0.0, 1e-15);
  const Matrix jac = extend_jacobian(m, z);
  EXPECT_NEAR(jac(0, 1), 0.0, 1e-15);
}

TEST(Extend, FarQueryIsOffManifold) {
  const auto m = random_manifold(5, 20, 3, 4, 4, 2, Normalization::none);
  const auto e = extend(m, Vector::Constant(3, 1e6));
  EXPECT_TRUE(e.off_manifold);
  EXPECT_LT(e.total_affinity, kOffManifoldAffinity);
  EXPECT_TRUE(e.coords.allFinite());
  EXPECT_FALSE(extend(m, m.landmarks().row(0).transpose()).off_manifold);
}

TEST(Extend, DimensionMismatch) {
  const auto m = random_manifold(5, 20, 3, 4, 4, 2, Normalization::none);
  try {
    extend(m, Vector::Zero(4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(Extend, NearNullEigenvaluesGiveZeroCoordinates) {
  // Identical points: complete graph with unit weights, so lambda_l = 0 for l >= 1.
  const Matrix x = Matrix::Ones(4, 2);
  GraphConfig g;
  g.k = 3;
  DiffusionConfig c;
  c.L = 3;
  c.normalization = Normalization::none;
  const auto m = fit_class_manifold(x, g, c);
  ASSERT_LE(m.basis.eigenvalues.tail(3).cwiseAbs().maxCoeff(), kEigenvalueFloor);
  const auto e = extend(m, Vector::Constant(2, 1.0 + 1e-13));
  EXPECT_TRUE(e.coords.isZero(0.0));
  EXPECT_TRUE(extend_jacobian(m, Vector::Constant(2, 1.5)).isZero(0.0));
}

TEST(ExtendJacobian, MatchesCentralDifferences) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const auto norm = static_cast<Normalization>(trial % 3);
    const auto mode = trial % 2 == 0 ? NystromMode::row : NystromMode::paper;
    const Index d = 2 + static_cast<Index>(rng() % 10);
    const auto m = random_manifold(rng(), 20 + static_cast<Index>(rng() % 60), d, 3 + static_cast<int>(rng() % 8), 6,
                                   1 + static_cast<int>(rng() % 3), norm);
    const Index anchor = static_cast<Index>(rng() % m.size());
    const Vector z = m.landmarks().row(anchor).transpose() + random_vector(d, rng(), 0.3);
    const Matrix analytic = extend_jacobian(m, z, mode);
    const Matrix numeric = central_differences(m, z, mode);
    EXPECT_LE(geoproto::testing::relative_error(analytic, numeric), 1e-4) << "trial " << trial;
  }
}

TEST(ExtendJacobian, FixedBandwidthMapAgreesWithExtendOffLandmarks) {
  const auto m = random_manifold(8, 30, 4, 5, 6, 2, Normalization::zca);
  const Vector z = random_vector(4, 3);
  EXPECT_TRUE(extend(m, z).coords == extend_fixed_bandwidth(m, z, query_bandwidth(m, z)).coords);
}

TEST(ExtendJacobian, ConstantShiftOfEigenvectorInRowMode) {
  auto m = random_manifold(9, 40, 3, 5, 4, 3, Normalization::none);
  const Vector z = m.landmarks().row(2).transpose() + random_vector(3, 1, 0.2);
  const auto before = extend(m, z);
  const Matrix jac_before = extend_jacobian(m, z);
  const int l = 2;
  const double delta = 0.37;
  m.basis.eigenvectors.col(l).array() += delta;
  const auto after = extend(m, z);
  const double lambda = m.basis.eigenvalues(l);
  EXPECT_NEAR(after.coords(l - 1) - before.coords(l - 1), std::pow(lambda, m.cfg.t - 1) * delta, 1e-12);
  EXPECT_LE((extend_jacobian(m, z).row(l - 1) - jac_before.row(l - 1)).norm(), 1e-12 * (1.0 + jac_before.norm()));
}

TEST(ExtendProperties, PermutingLandmarksLeavesExtensionUnchanged) {
  const Matrix x = random_matrix(40, 3, 13);
  IndexList perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
  Matrix shuffled(40, 3);
  for (Index i = 0; i < 40; ++i) shuffled.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
  GraphConfig g;
  g.k = 6;
  DiffusionConfig c;
  c.L = 5;
  c.normalization = Normalization::none;
  const auto a = fit_class_manifold(x, g, c);
  const auto b = fit_class_manifold(shuffled, g, c);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Vector z = random_vector(3, 100 + s);
    const Vector ea = extend(a, z).coords, eb = extend(b, z).coords;
    EXPECT_LE((ea.cwiseAbs() - eb.cwiseAbs()).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(ExtendProperties, RowAndPaperModesRankLandmarksIdenticallyOnRegularGraph) {
  // Regular simplex: all distances equal, so every degree is equal.
  const Matrix x = Matrix::Identity(6, 6);
  GraphConfig g;
  g.k = 5;
  DiffusionConfig c;
  c.L = 5;
  c.t = 1;
  c.normalization = Normalization::none;
  const auto m = fit_class_manifold(x, g, c);
  ASSERT_LE(m.graph.degrees.maxCoeff() - m.graph.degrees.minCoeff(), 1e-15);
  auto ranking = [&](const Vector& e) {
    IndexList order(6);
    std::iota(order.begin(), order.end(), 0);
    const Vector d = (m.landmark_coords.rowwise() - e.transpose()).rowwise().norm();
    std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) { return d(i) < d(j); });
    return order;
  };
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Vector z = x.row(static_cast<Index>(s % 6)).transpose() + random_vector(6, s, 0.2);
    EXPECT_EQ(ranking(extend(m, z, NystromMode::row).coords), ranking(extend(m, z, NystromMode::paper).coords));
  }
}
