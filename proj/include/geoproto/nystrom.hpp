#pragma once

// Fitted per-class manifold and the out-of-sample (Nystrom) extension of its
// diffusion coordinates to arbitrary feature vectors, with analytic Jacobian.

#include "geoproto/error.hpp"
#include "geoproto/graph.hpp"
#include "geoproto/spectral.hpp"
#include "geoproto/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace geoproto {

/// row:   weights a_j / sum_j a_j (row-stochastic, exact in-sample reconstruction).
/// paper: weights a_j / d_j with the training degrees.
enum class NystromMode { row, paper };

inline std::string_view to_string(NystromMode m) { return m == NystromMode::row ? "row" : "paper"; }

inline constexpr double kOffManifoldAffinity = 1e-12;
inline constexpr double kEigenvalueFloor = 1e-10;

struct ClassManifold {
  ClassGraph graph;
  SpectralBasis basis;
  /// Effective config: L is already clamped to the basis.
  DiffusionConfig cfg;
  NormState norm;
  Matrix landmark_coords;
  int k_oos = 0;
  /// Rows of the source feature set the landmarks were taken from (may be empty).
  IndexList landmark_indices;

  Index size() const { return graph.size(); }
  Index dim() const { return graph.node_features.cols(); }
  const Matrix& landmarks() const { return graph.node_features; }
};

inline ClassManifold fit_class_manifold(const Matrix& landmarks, const GraphConfig& graph_cfg,
                                        const DiffusionConfig& diff_cfg, IndexList source_indices = {},
                                        EigenSolver solver = EigenSolver::automatic) {
  if (diff_cfg.t < 1) fail(ErrorKind::InvalidConfig, "t must be a positive integer");
  ClassManifold m;
  m.graph = build_class_graph(landmarks, graph_cfg);
  m.basis = fit_spectral_basis(m.graph, diff_cfg.L, solver);
  m.cfg = diff_cfg;
  m.cfg.L = m.basis.L;
  auto coords = diffusion_coords(m.basis, m.cfg);
  m.norm = std::move(coords.state);
  m.landmark_coords = std::move(coords.coords);
  m.k_oos = graph_cfg.k;
  m.landmark_indices = std::move(source_indices);
  return m;
}

struct Embedding {
  Vector coords;
  double total_affinity = 0.0;
  bool off_manifold = false;
};

namespace detail {

struct KernelRow {
  Vector affinity;
  double sigma = 0.0;
  /// Landmark that z coincides with exactly, or -1.
  Index coincident = -1;
};

inline Vector squared_distances(const ClassManifold& m, const Vector& z) {
  if (z.size() != m.dim())
    fail(ErrorKind::DimensionMismatch, "query has " + std::to_string(z.size()) +
                                           " features, manifold has " + std::to_string(m.dim()));
  return (m.landmarks().rowwise() - z.transpose()).rowwise().squaredNorm();
}

inline double bandwidth_from(const ClassManifold& m, const Vector& d2) {
  std::vector<double> sorted(d2.data(), d2.data() + d2.size());
  const auto kth = static_cast<std::size_t>(std::min<Index>(m.k_oos, d2.size()) - 1);
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(kth), sorted.end());
  return std::max(std::sqrt(sorted[kth]), m.graph.sigma_floor);
}

inline Vector dense_affinity(const ClassManifold& m, const Vector& d2, double sigma) {
  return (-d2.array() / (sigma * m.graph.scales.array())).exp().matrix();
}

inline KernelRow dense_kernel_row(const ClassManifold& m, const Vector& z) {
  const Vector d2 = squared_distances(m, z);
  KernelRow row;
  for (Index j = 0; j < d2.size() && row.coincident < 0; ++j)
    if (d2(j) == 0.0 && m.landmarks().row(j).transpose() == z) row.coincident = j;
  row.sigma = bandwidth_from(m, d2);
  row.affinity = dense_affinity(m, d2, row.sigma);
  return row;
}

/// lambda_l^t / lambda_l, or 0 for near-null eigenvalues.
inline Vector coordinate_factors(const ClassManifold& m) {
  Vector f(m.cfg.L);
  for (int l = 1; l <= m.cfg.L; ++l) {
    const double lambda = m.basis.eigenvalues(l);
    f(l - 1) = std::abs(lambda) <= kEigenvalueFloor ? 0.0 : ipow(lambda, m.cfg.t) / lambda;
  }
  return f;
}

/// Eigen-combination of a kernel row `a` against the landmarks.
inline Embedding combine(const ClassManifold& m, const Vector& a, NystromMode mode) {
  Embedding e;
  e.total_affinity = a.sum();
  e.off_manifold = e.total_affinity < kOffManifoldAffinity;
  const Vector p = mode == NystromMode::row ? Vector(a / std::max(e.total_affinity, kOffManifoldAffinity))
                                            : Vector(a.cwiseQuotient(m.basis.degrees));
  const Vector g = m.basis.eigenvectors.middleCols(1, m.cfg.L).transpose() * p;
  e.coords = m.norm.apply(Vector(coordinate_factors(m).cwiseProduct(g)));
  return e;
}

}  // namespace detail

/// sigma(z): distance from z to its k_oos-th nearest landmark, floored like the graph scales.
inline double query_bandwidth(const ClassManifold& m, const Vector& z) {
  return detail::bandwidth_from(m, detail::squared_distances(m, z));
}

/// The smooth map behind extend: dense kernel row with the bandwidth held at
/// `sigma`. extend_jacobian is its exact derivative at sigma = sigma(z).
inline Embedding extend_fixed_bandwidth(const ClassManifold& m, const Vector& z, double sigma,
                                        NystromMode mode = NystromMode::row) {
  return detail::combine(m, detail::dense_affinity(m, detail::squared_distances(m, z), sigma), mode);
}

/// Nystrom-extended diffusion coordinates of z, normalized like the landmarks.
///
/// The kernel is evaluated densely against every landmark with bandwidth
/// sigma(z). When z is bitwise equal to a landmark the graph's own affinity
/// row is used instead, so in-sample points reproduce their stored coordinates.
inline Embedding extend(const ClassManifold& m, const Vector& z, NystromMode mode = NystromMode::row) {
  const auto row = detail::dense_kernel_row(m, z);
  if (row.coincident < 0) return detail::combine(m, row.affinity, mode);
  Vector a = Vector::Zero(m.size());
  for (SparseMatrix::InnerIterator it(m.graph.affinity, row.coincident); it; ++it) a(it.col()) = it.value();
  return detail::combine(m, a, mode);
}

/// Batch extend over the rows of `z`.
inline Matrix extend_rows(const ClassManifold& m, const Matrix& z, NystromMode mode = NystromMode::row) {
  Matrix out(z.rows(), m.cfg.L);
  for (Index r = 0; r < z.rows(); ++r) out.row(r) = extend(m, z.row(r).transpose(), mode).coords.transpose();
  return out;
}

/// d coords / d z (L x D) of the dense kernel map, with sigma(z) held constant.
/// At exact landmark coincidences this is the derivative of the surrounding
/// dense map (the single in-sample point does not change it).
inline Matrix extend_jacobian(const ClassManifold& m, const Vector& z, NystromMode mode = NystromMode::row) {
  const Index n = m.size();
  const auto row = detail::dense_kernel_row(m, z);
  const Matrix& x = m.landmarks();

  // grad_a.row(j) = d a_j / d z
  Matrix grad_a(n, m.dim());
  for (Index j = 0; j < n; ++j)
    grad_a.row(j) = (-2.0 * row.affinity(j) / (row.sigma * m.graph.scales(j))) * (z.transpose() - x.row(j));

  const auto psi = m.basis.eigenvectors.middleCols(1, m.cfg.L);
  Matrix weights;  // n x L, d g_l / d z = sum_j weights(j, l) * grad_a.row(j)
  if (mode == NystromMode::row) {
    const double total = row.affinity.sum();
    if (total < kOffManifoldAffinity) {
      weights = psi / kOffManifoldAffinity;
    } else {
      const RowVector g = (row.affinity / total).transpose() * psi;
      weights = (psi.rowwise() - g) / total;
    }
  } else {
    weights = m.basis.degrees.cwiseInverse().asDiagonal() * psi;
  }

  Matrix raw = weights.transpose() * grad_a;
  raw = detail::coordinate_factors(m).asDiagonal() * raw;
  return m.norm.apply_jacobian(raw);
}

}  // namespace geoproto
