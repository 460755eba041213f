#pragma once

// Diffusion-map spectral basis of a class graph, diffusion coordinates and
// diffusion distances, plus coordinate normalization (none / energy / zca).

#include "geoproto/error.hpp"
#include "geoproto/graph.hpp"
#include "geoproto/types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace geoproto {

enum class Normalization { none, energy, zca };

inline std::string_view to_string(Normalization n) {
  switch (n) {
    case Normalization::none: return "none";
    case Normalization::energy: return "energy";
    case Normalization::zca: return "zca";
  }
  return "none";
}

struct DiffusionConfig {
  int t = 4;
  /// Number of non-trivial coordinates (psi_0 is never part of the embedding).
  int L = 32;
  Normalization normalization = Normalization::zca;
  /// ZCA regularizer, relative to the mean eigenvalue of the coordinate covariance.
  double zca_epsilon = 1e-6;
};

/// Eigenpairs (lambda_0..lambda_L, psi_0..psi_L) of P = D^-1 W, descending by
/// signed eigenvalue. Each psi has its largest-magnitude entry positive.
struct SpectralBasis {
  Vector eigenvalues;
  Matrix eigenvectors;
  int L = 0;
  int requested_L = 0;
  Vector degrees;

  bool clamped() const { return L < requested_L; }
};

enum class EigenSolver { automatic, dense, lanczos };

inline constexpr Index kDenseSolverLimit = 2048;

namespace detail {

/// S = D^-1/2 W D^-1/2, exactly symmetric.
inline SparseMatrix symmetric_conjugate(const ClassGraph& g) {
  const Vector isd = g.degrees.cwiseSqrt().cwiseInverse();
  SparseMatrix s = g.affinity;
  for (Index i = 0; i < s.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(s, i); it; ++it)
      it.valueRef() = it.value() * (isd(it.row()) * isd(it.col()));
  return s;
}

struct EigenPairs {
  Vector values;   // descending
  Matrix vectors;  // orthonormal columns
};

inline EigenPairs top_eigenpairs_dense(const SparseMatrix& s, Index count) {
  const Matrix dense = Matrix(s);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(dense);
  if (solver.info() != Eigen::Success) fail(ErrorKind::NoConvergence, "dense eigensolver failed");
  const Index n = dense.rows();
  EigenPairs out;
  out.values.resize(count);
  out.vectors.resize(n, count);
  for (Index c = 0; c < count; ++c) {
    out.values(c) = solver.eigenvalues()(n - 1 - c);
    out.vectors.col(c) = solver.eigenvectors().col(n - 1 - c);
  }
  return out;
}

/// Lanczos with full reorthogonalization; grows the Krylov space until the
/// `count` largest Ritz pairs have residual <= tol.
inline EigenPairs top_eigenpairs_lanczos(const SparseMatrix& s, Index count, double tol = 1e-11) {
  const Index n = s.rows();
  const Index max_dim = std::min<Index>(n, std::max<Index>(20 * count, 1000));
  Matrix q(n, max_dim);
  std::vector<double> alpha, beta;

  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> normal;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal(rng);
  v.normalize();

  auto orthogonalize = [&](Vector& w, Index upto) {
    for (int pass = 0; pass < 2; ++pass)
      w -= q.leftCols(upto) * (q.leftCols(upto).transpose() * w);
  };

  Index m = 0;
  while (true) {
    q.col(m) = v;
    Vector w = s * v;
    const double a = q.col(m).dot(w);
    alpha.push_back(a);
    orthogonalize(w, m + 1);
    double b = w.norm();
    ++m;

    const bool full = (m == max_dim);
    bool invariant = b < 1e-13;
    if (m >= count && (m % 20 == 0 || full || invariant)) {
      Matrix t = Matrix::Zero(m, m);
      for (Index i = 0; i < m; ++i) {
        t(i, i) = alpha[static_cast<std::size_t>(i)];
        if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[static_cast<std::size_t>(i)];
      }
      Eigen::SelfAdjointEigenSolver<Matrix> tri(t);
      bool converged = true;
      for (Index c = 0; c < count; ++c)
        if (std::abs(b * tri.eigenvectors()(m - 1, m - 1 - c)) > tol) converged = false;
      if ((converged && !invariant) || (invariant && m == n)) {
        EigenPairs out;
        out.values.resize(count);
        out.vectors.resize(n, count);
        for (Index c = 0; c < count; ++c) {
          out.values(c) = tri.eigenvalues()(m - 1 - c);
          out.vectors.col(c) = (q.leftCols(m) * tri.eigenvectors().col(m - 1 - c)).normalized();
        }
        return out;
      }
    }
    if (full) fail(ErrorKind::NoConvergence, "Lanczos did not converge within " +
                                                 std::to_string(max_dim) + " iterations");
    if (invariant) {
      // Krylov space exhausted: continue from a fresh direction orthogonal to it.
      for (Index i = 0; i < n; ++i) w(i) = normal(rng);
      orthogonalize(w, m);
      b = 0.0;
      v = w.normalized();
    } else {
      v = w / b;
    }
    beta.push_back(b);
  }
}

}  // namespace detail

inline SpectralBasis fit_spectral_basis(const ClassGraph& g, int L,
                                        EigenSolver solver = EigenSolver::automatic) {
  if (L < 1) fail(ErrorKind::InvalidConfig, "L must be a positive integer");
  const Index n = g.size();
  SpectralBasis basis;
  basis.requested_L = L;
  basis.L = static_cast<int>(std::min<Index>(L, n - 1));
  basis.degrees = g.degrees;

  const Index count = basis.L + 1;
  const SparseMatrix s = detail::symmetric_conjugate(g);
  const bool dense = solver == EigenSolver::dense ||
                     (solver == EigenSolver::automatic && n <= kDenseSolverLimit);
  auto pairs = dense ? detail::top_eigenpairs_dense(s, count)
                     : detail::top_eigenpairs_lanczos(s, count);

  basis.eigenvalues = pairs.values;
  basis.eigenvectors = g.degrees.cwiseSqrt().cwiseInverse().asDiagonal() * pairs.vectors;
  for (Index c = 0; c < count; ++c) {
    Index at = 0;
    basis.eigenvectors.col(c).cwiseAbs().maxCoeff(&at);
    if (basis.eigenvectors(at, c) < 0.0) basis.eigenvectors.col(c) *= -1.0;
  }
  return basis;
}

/// max over retained l of ||P psi_l - lambda_l psi_l||_inf / max(1, ||psi_l||_inf)
inline double eigen_residual(const ClassGraph& g, const SpectralBasis& basis) {
  double worst = 0.0;
  for (Index c = 0; c < basis.eigenvectors.cols(); ++c) {
    const Vector psi = basis.eigenvectors.col(c);
    const Vector r = g.transition * psi - basis.eigenvalues(c) * psi;
    worst = std::max(worst, r.cwiseAbs().maxCoeff() / std::max(1.0, psi.cwiseAbs().maxCoeff()));
  }
  return worst;
}

/// Affine map applied to raw diffusion coordinates: y = T (x - mean).
struct NormState {
  Normalization mode = Normalization::none;
  Vector mean;
  Matrix transform;

  Vector apply(const Vector& raw) const {
    switch (mode) {
      case Normalization::none: return raw;
      case Normalization::energy: return raw.cwiseProduct(transform.diagonal());
      case Normalization::zca: return transform * (raw - mean);
    }
    return raw;
  }

  /// Row-wise apply.
  Matrix apply_rows(const Matrix& raw) const {
    switch (mode) {
      case Normalization::none: return raw;
      case Normalization::energy: return raw * transform.diagonal().asDiagonal();
      case Normalization::zca: return (raw.rowwise() - mean.transpose()) * transform.transpose();
    }
    return raw;
  }

  /// Chain rule through the (linear) normalization.
  Matrix apply_jacobian(const Matrix& raw_jacobian) const {
    switch (mode) {
      case Normalization::none: return raw_jacobian;
      case Normalization::energy: return transform.diagonal().asDiagonal() * raw_jacobian;
      case Normalization::zca: return transform * raw_jacobian;
    }
    return raw_jacobian;
  }
};

struct NormalizedCoords {
  Matrix coords;
  NormState state;
};

/// Fits the normalization on `coords` (n x L) and applies it.
///  energy: every column scaled to unit sum of squares (all-zero columns untouched).
///  zca:    centered, then multiplied by U (Lambda + eps I)^-1/2 U^T where
///          U Lambda U^T is the sample covariance (1/(n-1)) and eps is
///          zca_epsilon times the mean covariance eigenvalue.
inline NormalizedCoords normalize_coords(const Matrix& coords, Normalization mode,
                                         double zca_epsilon = 1e-6) {
  const Index n = coords.rows();
  const Index l = coords.cols();
  NormalizedCoords out;
  out.state.mode = mode;
  out.state.mean = Vector::Zero(l);
  out.state.transform = Matrix::Identity(l, l);
  if (mode == Normalization::none) {
    out.coords = coords;
    return out;
  }
  if (n < 2) fail(ErrorKind::InvalidArgument, "normalization needs at least 2 rows");

  if (mode == Normalization::energy) {
    for (Index c = 0; c < l; ++c) {
      const double energy = coords.col(c).norm();
      out.state.transform(c, c) = energy > 0.0 ? 1.0 / energy : 1.0;
    }
  } else {
    if (!(zca_epsilon > 0.0)) fail(ErrorKind::InvalidConfig, "zca_epsilon must be positive");
    out.state.mean = coords.colwise().mean().transpose();
    const Matrix centered = coords.rowwise() - out.state.mean.transpose();
    const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    const Vector lambda = eig.eigenvalues().cwiseMax(0.0);
    const double mean_eig = lambda.mean();
    const double eps = zca_epsilon * (mean_eig > 0.0 ? mean_eig : 1.0);
    const Vector inv_sqrt = (lambda.array() + eps).rsqrt().matrix();
    out.state.transform = eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
  }
  out.coords = out.state.apply_rows(coords);
  return out;
}

/// Row i = (lambda_1^t psi_1(i), ..., lambda_L^t psi_L(i)), un-normalized.
inline Matrix raw_diffusion_coords(const SpectralBasis& basis, int t, int L) {
  if (L > basis.L)
    fail(ErrorKind::InvalidArgument, "requested L = " + std::to_string(L) + " exceeds basis L = " +
                                         std::to_string(basis.L));
  Matrix out(basis.eigenvectors.rows(), L);
  for (int l = 1; l <= L; ++l) out.col(l - 1) = ipow(basis.eigenvalues(l), t) * basis.eigenvectors.col(l);
  return out;
}

inline NormalizedCoords diffusion_coords(const SpectralBasis& basis, const DiffusionConfig& cfg) {
  return normalize_coords(raw_diffusion_coords(basis, cfg.t, cfg.L), cfg.normalization, cfg.zca_epsilon);
}

/// sqrt(sum_{l=1..L} lambda_l^{2t} (psi_l(i) - psi_l(j))^2)
inline double diffusion_distance(const SpectralBasis& basis, Index i, Index j, const DiffusionConfig& cfg) {
  if (cfg.L > basis.L) fail(ErrorKind::InvalidArgument, "L exceeds basis");
  double sum = 0.0;
  for (int l = 1; l <= cfg.L; ++l) {
    const double diff = basis.eigenvectors(i, l) - basis.eigenvectors(j, l);
    sum += ipow(basis.eigenvalues(l), 2 * cfg.t) * diff * diff;
  }
  return std::sqrt(sum);
}

}  // namespace geoproto
