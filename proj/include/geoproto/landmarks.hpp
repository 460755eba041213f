#pragma once

// Landmark selection (random / k-means, per-class / global pool) and the
// periodic manifold refit schedule.

#include "geoproto/error.hpp"
#include "geoproto/features_io.hpp"
#include "geoproto/nystrom.hpp"
#include "geoproto/parallel.hpp"
#include "geoproto/types.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

namespace geoproto {

enum class LandmarkSelection { random, kmeans };
enum class LandmarkPool { per_class, global };

inline std::string_view to_string(LandmarkSelection s) { return s == LandmarkSelection::random ? "random" : "kmeans"; }
inline std::string_view to_string(LandmarkPool p) { return p == LandmarkPool::per_class ? "per_class" : "global"; }

struct LandmarkConfig {
  LandmarkSelection selection = LandmarkSelection::kmeans;
  LandmarkPool pool = LandmarkPool::per_class;
  /// Per class for per_class, in total for global.
  int count = 768;
  /// Refit every this many epochs; 0 keeps landmarks fixed.
  int update_every = 20;
  std::uint64_t seed = 0;
  int kmeans_max_iters = 100;
};

struct LandmarkSet {
  /// indices[c - 1]: sorted source rows chosen for class c.
  std::vector<IndexList> indices;
  int epoch_fitted = 0;
};

struct KMeansResult {
  Matrix centroids;
  IndexList assignment;
  /// Within-cluster sum of squares after each Lloyd iteration.
  std::vector<double> wcss;
  int iterations = 0;
};

namespace detail {

inline Index nearest_centroid(const Matrix& centroids, const Eigen::Ref<const RowVector>& x, double* d2_out = nullptr) {
  Index best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (Index c = 0; c < centroids.rows(); ++c) {
    const double d2 = (centroids.row(c) - x).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = c;
    }
  }
  if (d2_out) *d2_out = best_d2;
  return best;
}

inline double wcss(const Matrix& x, const Matrix& centroids, const IndexList& assignment) {
  double total = 0.0;
  for (Index i = 0; i < x.rows(); ++i)
    total += (x.row(i) - centroids.row(assignment[static_cast<std::size_t>(i)])).squaredNorm();
  return total;
}

}  // namespace detail

/// k-means++ seeding followed by Lloyd iterations. Empty clusters are reseeded
/// with the point farthest from its centroid (taken from a cluster of size > 1).
inline KMeansResult kmeans(const Matrix& x, int clusters, std::uint64_t seed, int max_iters) {
  const Index n = x.rows();
  if (clusters < 1 || clusters > n)
    fail(ErrorKind::InvalidArgument, "k-means needs 1 <= clusters <= n");
  if (max_iters < 1) fail(ErrorKind::InvalidConfig, "kmeans_max_iters must be at least 1");

  std::mt19937_64 rng(seed);
  KMeansResult out;
  out.centroids.resize(clusters, x.cols());
  std::vector<double> closest(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  Index first = std::uniform_int_distribution<Index>(0, n - 1)(rng);
  out.centroids.row(0) = x.row(first);
  for (int c = 1; c < clusters; ++c) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
      closest[static_cast<std::size_t>(i)] =
          std::min(closest[static_cast<std::size_t>(i)], (x.row(i) - out.centroids.row(c - 1)).squaredNorm());
      total += closest[static_cast<std::size_t>(i)];
    }
    Index pick = 0;
    if (total > 0.0) {
      std::discrete_distribution<Index> dist(closest.begin(), closest.end());
      pick = dist(rng);
    } else {
      pick = std::uniform_int_distribution<Index>(0, n - 1)(rng);
    }
    out.centroids.row(c) = x.row(pick);
  }

  out.assignment.assign(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) out.assignment[static_cast<std::size_t>(i)] = detail::nearest_centroid(out.centroids, x.row(i));

  for (int it = 0; it < max_iters; ++it) {
    // Update step, with farthest-point repair of empty clusters.
    std::vector<Index> sizes(static_cast<std::size_t>(clusters), 0);
    for (Index a : out.assignment) ++sizes[static_cast<std::size_t>(a)];
    for (int c = 0; c < clusters; ++c) {
      if (sizes[static_cast<std::size_t>(c)] != 0) continue;
      Index far = -1;
      double far_d2 = -1.0;
      for (Index i = 0; i < n; ++i) {
        const Index a = out.assignment[static_cast<std::size_t>(i)];
        if (sizes[static_cast<std::size_t>(a)] < 2) continue;
        const double d2 = (x.row(i) - out.centroids.row(a)).squaredNorm();
        if (d2 > far_d2) {
          far_d2 = d2;
          far = i;
        }
      }
      ensure(far >= 0, "k-means repair found no donor point");
      --sizes[static_cast<std::size_t>(out.assignment[static_cast<std::size_t>(far)])];
      out.assignment[static_cast<std::size_t>(far)] = c;
      sizes[static_cast<std::size_t>(c)] = 1;
    }
    Matrix sums = Matrix::Zero(clusters, x.cols());
    for (Index i = 0; i < n; ++i) sums.row(out.assignment[static_cast<std::size_t>(i)]) += x.row(i);
    for (int c = 0; c < clusters; ++c)
      out.centroids.row(c) = sums.row(c) / static_cast<double>(sizes[static_cast<std::size_t>(c)]);
    out.wcss.push_back(detail::wcss(x, out.centroids, out.assignment));
    out.iterations = it + 1;

    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      const Index a = detail::nearest_centroid(out.centroids, x.row(i));
      if (a != out.assignment[static_cast<std::size_t>(i)]) {
        out.assignment[static_cast<std::size_t>(i)] = a;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return out;
}

/// Each centroid snapped to its nearest not-yet-taken row of x; sorted result.
inline IndexList snap_to_rows(const Matrix& x, const Matrix& centroids) {
  std::vector<bool> taken(static_cast<std::size_t>(x.rows()), false);
  IndexList rows;
  for (Index c = 0; c < centroids.rows(); ++c) {
    Index best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < x.rows(); ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      const double d2 = (x.row(i) - centroids.row(c)).squaredNorm();
      if (d2 < best_d2) {
        best_d2 = d2;
        best = i;
      }
    }
    taken[static_cast<std::size_t>(best)] = true;
    rows.push_back(best);
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

/// `min_per_class` is the graph's k + 1.
inline LandmarkSet select_landmarks(const FeatureSet& fs, const LandmarkConfig& cfg, int min_per_class,
                                    std::vector<std::string>* warnings = nullptr) {
  if (cfg.count < 1) fail(ErrorKind::CountTooSmall, "landmark count must be positive");
  if (cfg.pool == LandmarkPool::per_class && cfg.count < min_per_class)
    fail(ErrorKind::CountTooSmall, "landmark count " + std::to_string(cfg.count) + " is below k + 1 = " +
                                       std::to_string(min_per_class));
  LandmarkSet set;
  set.indices.resize(static_cast<std::size_t>(fs.class_count));
  std::mt19937_64 rng(cfg.seed);

  if (cfg.pool == LandmarkPool::per_class) {
    for (ClassId c = 1; c <= fs.class_count; ++c) {
      const IndexList rows = fs.class_rows(c);
      auto& out = set.indices[static_cast<std::size_t>(c - 1)];
      const auto n_c = static_cast<int>(rows.size());
      if (cfg.count >= n_c) {
        if (cfg.count > n_c && warnings)
          warnings->push_back("class " + std::to_string(c) + ": landmark count " + std::to_string(cfg.count) +
                              " exceeds " + std::to_string(n_c) + " samples; using all of them");
        out = rows;
        continue;
      }
      if (cfg.selection == LandmarkSelection::random) {
        std::sample(rows.begin(), rows.end(), std::back_inserter(out), cfg.count, rng);
      } else {
        const Matrix x = fs.rows(rows);
        const auto km = kmeans(x, cfg.count, cfg.seed + static_cast<std::uint64_t>(c), cfg.kmeans_max_iters);
        for (Index local : snap_to_rows(x, km.centroids)) out.push_back(rows[static_cast<std::size_t>(local)]);
      }
      std::sort(out.begin(), out.end());
    }
  } else {
    IndexList chosen;
    if (cfg.count >= fs.size()) {
      if (cfg.count > fs.size() && warnings)
        warnings->push_back("global landmark count exceeds sample count; using all samples");
      for (Index i = 0; i < fs.size(); ++i) chosen.push_back(i);
    } else if (cfg.selection == LandmarkSelection::random) {
      IndexList all(static_cast<std::size_t>(fs.size()));
      for (Index i = 0; i < fs.size(); ++i) all[static_cast<std::size_t>(i)] = i;
      std::sample(all.begin(), all.end(), std::back_inserter(chosen), cfg.count, rng);
    } else {
      const auto km = kmeans(fs.features, cfg.count, cfg.seed, cfg.kmeans_max_iters);
      chosen = snap_to_rows(fs.features, km.centroids);
    }
    std::sort(chosen.begin(), chosen.end());
    for (Index i : chosen) set.indices[static_cast<std::size_t>(fs.labels[static_cast<std::size_t>(i)] - 1)].push_back(i);
    for (ClassId c = 1; c <= fs.class_count; ++c)
      if (set.indices[static_cast<std::size_t>(c - 1)].empty())
        fail(ErrorKind::CountTooSmall, "global landmark pool left class " + std::to_string(c) + " without landmarks");
  }
  return set;
}

inline bool should_refresh(int epoch, const LandmarkConfig& cfg) {
  return cfg.update_every > 0 && epoch % cfg.update_every == 0;
}

/// Fitted manifolds, indexed by class id - 1.
using ManifoldSet = std::vector<ClassManifold>;

/// Full refit: select landmarks, then graph + basis + coordinates per class.
/// Any class failure aborts the whole refresh.
inline ManifoldSet refresh_manifolds(const FeatureSet& fs, const LandmarkConfig& lcfg, const GraphConfig& gcfg,
                                     const DiffusionConfig& dcfg, int threads = 1,
                                     std::vector<std::string>* warnings = nullptr) {
  const auto set = select_landmarks(fs, lcfg, gcfg.k + 1, warnings);
  ManifoldSet manifolds(static_cast<std::size_t>(fs.class_count));
  parallel_for(fs.class_count, threads, [&](std::ptrdiff_t c) {
    const auto& idx = set.indices[static_cast<std::size_t>(c)];
    manifolds[static_cast<std::size_t>(c)] = fit_class_manifold(fs.rows(idx), gcfg, dcfg, idx);
  });
  if (warnings)
    for (std::size_t c = 0; c < manifolds.size(); ++c)
      if (manifolds[c].basis.clamped())
        warnings->push_back("class " + std::to_string(c + 1) + ": L clamped from " +
                            std::to_string(manifolds[c].basis.requested_L) + " to " +
                            std::to_string(manifolds[c].basis.L));
  return manifolds;
}

/// Readers take a snapshot and keep a consistent manifold set for the whole
/// query, while a refresh publishes a replacement.
class ManifoldStore {
 public:
  std::shared_ptr<const ManifoldSet> snapshot() const {
    std::lock_guard lock(mutex_);
    return current_;
  }

  void publish(ManifoldSet manifolds) {
    auto next = std::make_shared<const ManifoldSet>(std::move(manifolds));
    std::lock_guard lock(mutex_);
    current_ = std::move(next);
  }

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const ManifoldSet> current_;
};

}  // namespace geoproto
