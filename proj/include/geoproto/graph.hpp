#pragma once

// Per-class kNN affinity graph with self-tuning (local) Gaussian bandwidths.

#include "geoproto/error.hpp"
#include "geoproto/types.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

namespace geoproto {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct GraphConfig {
  int k = 20;
  bool local_scaling = true;
  /// Bandwidth floor, relative to the feature-space diameter (or 1 when the diameter is 0).
  double epsilon_sigma = 1e-12;
  bool connect_components = true;
};

struct ClassGraph {
  /// Off-diagonal edges (i < j), sorted. The diagonal is always present with weight 1.
  std::vector<std::pair<Index, Index>> edges;
  SparseMatrix affinity;
  Vector degrees;
  SparseMatrix transition;
  Vector scales;
  Matrix node_features;
  int k = 0;
  double sigma_floor = 0.0;
  int bridges_added = 0;

  Index size() const { return node_features.rows(); }
};

struct GraphDiagnostics {
  int components = 0;
  double avg_path_length = 0.0;
};

namespace detail {

/// Squared Euclidean distances, bitwise symmetric.
inline Matrix pairwise_sq_distances(const Matrix& x) {
  const Index n = x.rows();
  const Matrix xt = x.transpose();
  Matrix d2 = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = j + 1; i < n; ++i) {
      const double v = (xt.col(i) - xt.col(j)).squaredNorm();
      d2(i, j) = v;
      d2(j, i) = v;
    }
  return d2;
}

/// k nearest neighbors of every row (self excluded), ordered by (distance, index).
inline std::vector<IndexList> knn_lists(const Matrix& d2, int k) {
  const Index n = d2.rows();
  std::vector<IndexList> out(static_cast<std::size_t>(n));
  IndexList order;
  for (Index i = 0; i < n; ++i) {
    order.clear();
    for (Index j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index a, Index b) {
      return d2(i, a) < d2(i, b) || (d2(i, a) == d2(i, b) && a < b);
    });
    out[static_cast<std::size_t>(i)].assign(order.begin(), order.begin() + k);
  }
  return out;
}

class DisjointSets {
 public:
  explicit DisjointSets(Index n) : parent_(static_cast<std::size_t>(n)) {
    std::iota(parent_.begin(), parent_.end(), Index{0});
  }
  Index find(Index a) {
    while (parent_[static_cast<std::size_t>(a)] != a) {
      auto& p = parent_[static_cast<std::size_t>(a)];
      p = parent_[static_cast<std::size_t>(p)];
      a = p;
    }
    return a;
  }
  bool unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (b < a) std::swap(a, b);
    parent_[static_cast<std::size_t>(b)] = a;
    return true;
  }

 private:
  IndexList parent_;
};

inline std::vector<IndexList> adjacency(Index n, const std::vector<std::pair<Index, Index>>& edges) {
  std::vector<IndexList> adj(static_cast<std::size_t>(n));
  for (auto [i, j] : edges) {
    adj[static_cast<std::size_t>(i)].push_back(j);
    adj[static_cast<std::size_t>(j)].push_back(i);
  }
  return adj;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Assembles W (unit diagonal), degrees and P = D^-1 W from an edge list.
inline void assemble_operators(ClassGraph& g, const std::vector<double>& edge_weights) {
  const Index n = g.size();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(n) + 2 * g.edges.size());
  for (Index i = 0; i < n; ++i) triplets.emplace_back(i, i, 1.0);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [i, j] = g.edges[e];
    triplets.emplace_back(i, j, edge_weights[e]);
    triplets.emplace_back(j, i, edge_weights[e]);
  }
  g.affinity = SparseMatrix(n, n);
  g.affinity.setFromTriplets(triplets.begin(), triplets.end());
  g.affinity.makeCompressed();

  g.degrees = Vector::Zero(n);
  for (Index i = 0; i < n; ++i)
    for (SparseMatrix::InnerIterator it(g.affinity, i); it; ++it) g.degrees(i) += it.value();

  g.transition = g.affinity;
  for (Index i = 0; i < n; ++i)
    for (SparseMatrix::InnerIterator it(g.transition, i); it; ++it) it.valueRef() /= g.degrees(i);
}

inline ClassGraph build_class_graph(const Matrix& x, const GraphConfig& cfg) {
  const Index n = x.rows();
  if (cfg.epsilon_sigma <= 0.0)
    fail(ErrorKind::DegenerateScale, "epsilon_sigma must be positive");
  if (n < 2) fail(ErrorKind::TooFewSamples, "graph needs at least 2 samples, got " + std::to_string(n));
  if (cfg.k < 1) fail(ErrorKind::InvalidConfig, "k must be at least 1");
  if (cfg.k > n - 1)
    fail(ErrorKind::KTooLarge,
         "k = " + std::to_string(cfg.k) + " exceeds n - 1 = " + std::to_string(n - 1));

  ClassGraph g;
  g.node_features = x;
  g.k = cfg.k;

  const Matrix d2 = detail::pairwise_sq_distances(x);
  const double diameter = std::sqrt(d2.maxCoeff());
  g.sigma_floor = cfg.epsilon_sigma * (diameter > 0.0 ? diameter : 1.0);

  const auto knn = detail::knn_lists(d2, cfg.k);
  std::vector<double> kth(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    kth[static_cast<std::size_t>(i)] = std::sqrt(d2(i, knn[static_cast<std::size_t>(i)].back()));

  g.scales.resize(n);
  if (cfg.local_scaling) {
    for (Index i = 0; i < n; ++i) g.scales(i) = std::max(kth[static_cast<std::size_t>(i)], g.sigma_floor);
  } else {
    g.scales.setConstant(std::max(detail::median(kth), g.sigma_floor));
  }

  for (Index i = 0; i < n; ++i)
    for (Index j : knn[static_cast<std::size_t>(i)]) g.edges.emplace_back(std::min(i, j), std::max(i, j));
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());

  if (cfg.connect_components) {
    detail::DisjointSets sets(n);
    Index components = n;
    for (auto [i, j] : g.edges)
      if (sets.unite(i, j)) --components;
    // Kruskal-style: repeatedly add the shortest cross-component pair.
    while (components > 1) {
      Index bi = -1, bj = -1;
      double best = 0.0;
      for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) {
          if (sets.find(i) == sets.find(j)) continue;
          if (bi < 0 || d2(i, j) < best) {
            best = d2(i, j);
            bi = i;
            bj = j;
          }
        }
      sets.unite(bi, bj);
      --components;
      g.edges.emplace_back(bi, bj);
      ++g.bridges_added;
    }
    std::sort(g.edges.begin(), g.edges.end());
  }

  std::vector<double> weights;
  weights.reserve(g.edges.size());
  for (auto [i, j] : g.edges) weights.push_back(std::exp(-d2(i, j) / (g.scales(i) * g.scales(j))));
  assemble_operators(g, weights);
  return g;
}

/// max_i |sum_j P_ij - 1|
inline double transition_rows_check(const ClassGraph& g) {
  double worst = 0.0;
  for (Index i = 0; i < g.transition.outerSize(); ++i) {
    double s = 0.0;
    for (SparseMatrix::InnerIterator it(g.transition, i); it; ++it) s += it.value();
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

/// Connected components of the off-diagonal edge set, and the mean
/// unweighted shortest-path length over node pairs of the largest component.
inline GraphDiagnostics graph_diagnostics(const ClassGraph& g) {
  const Index n = g.size();
  const auto adj = detail::adjacency(n, g.edges);
  std::vector<int> comp(static_cast<std::size_t>(n), -1);
  std::vector<IndexList> members;
  for (Index s = 0; s < n; ++s) {
    if (comp[static_cast<std::size_t>(s)] >= 0) continue;
    const int id = static_cast<int>(members.size());
    members.emplace_back();
    std::queue<Index> q;
    q.push(s);
    comp[static_cast<std::size_t>(s)] = id;
    while (!q.empty()) {
      const Index u = q.front();
      q.pop();
      members.back().push_back(u);
      for (Index v : adj[static_cast<std::size_t>(u)])
        if (comp[static_cast<std::size_t>(v)] < 0) {
          comp[static_cast<std::size_t>(v)] = id;
          q.push(v);
        }
    }
  }

  GraphDiagnostics out;
  out.components = static_cast<int>(members.size());
  std::size_t largest = 0;
  for (std::size_t c = 1; c < members.size(); ++c)
    if (members[c].size() > members[largest].size()) largest = c;
  const auto& nodes = members[largest];
  if (nodes.size() < 2) return out;

  double total = 0.0;
  std::vector<int> dist(static_cast<std::size_t>(n));
  for (Index s : nodes) {
    std::fill(dist.begin(), dist.end(), -1);
    std::queue<Index> q;
    q.push(s);
    dist[static_cast<std::size_t>(s)] = 0;
    while (!q.empty()) {
      const Index u = q.front();
      q.pop();
      for (Index v : adj[static_cast<std::size_t>(u)])
        if (dist[static_cast<std::size_t>(v)] < 0) {
          dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
          q.push(v);
        }
    }
    for (Index t : nodes)
      if (t > s) total += dist[static_cast<std::size_t>(t)];
  }
  const double pairs = 0.5 * static_cast<double>(nodes.size()) * static_cast<double>(nodes.size() - 1);
  out.avg_path_length = total / pairs;
  return out;
}

}  // namespace geoproto
