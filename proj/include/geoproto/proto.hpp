#pragma once

// Prototype bank, anchoring onto candidate features, intra-class matching,
// similarity aggregation and a full-batch gradient trainer.

#include "geoproto/error.hpp"
#include "geoproto/features_io.hpp"
#include "geoproto/landmarks.hpp"
#include "geoproto/nystrom.hpp"
#include "geoproto/parallel.hpp"
#include "geoproto/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace geoproto {

/// diffusion: distances in each class's diffusion space (the model).
/// euclidean: distances in raw feature space (ablation baseline).
enum class MatchMetric { diffusion, euclidean };

inline std::string_view to_string(MatchMetric m) { return m == MatchMetric::diffusion ? "diffusion" : "euclidean"; }

struct ClassPrototypes {
  /// m x D learnable vectors.
  Matrix vectors;
  /// m x D candidate features the prototypes are anchored to.
  Matrix anchored;
  /// Candidate row per prototype, -1 before the first projection.
  IndexList anchor_index;
  /// m x E embeddings of the anchored prototypes in the class space.
  Matrix anchored_coords;
  /// Non-negative head weights; prototype i feeds only its own class logit.
  Vector head;
};

struct PrototypeBank {
  int m = 10;
  double epsilon_sim = 1e-4;
  MatchMetric metric = MatchMetric::diffusion;
  NystromMode mode = NystromMode::row;
  /// classes[c - 1]
  std::vector<ClassPrototypes> classes;

  int class_count() const { return static_cast<int>(classes.size()); }
  bool projected() const {
    return !classes.empty() && std::all_of(classes.begin(), classes.end(), [](const ClassPrototypes& p) {
      return std::all_of(p.anchor_index.begin(), p.anchor_index.end(), [](Index i) { return i >= 0; });
    });
  }
};

/// Per-class candidate features eligible as prototype anchors (candidates[c - 1]).
using CandidatePool = std::vector<Matrix>;

inline CandidatePool default_candidates(const FeatureSet& fs) {
  CandidatePool pool;
  for (ClassId c = 1; c <= fs.class_count; ++c) pool.push_back(fs.class_features(c));
  return pool;
}

/// log((d^2 + 1) / (d^2 + eps)): strictly decreasing in d >= 0 for eps < 1.
inline double similarity(double d, double eps) {
  const double d2 = d * d;
  return std::log((d2 + 1.0) / (d2 + eps));
}

/// Embedding of z in the class space used for matching.
inline Vector embed(const ClassManifold* manifold, const Vector& z, const PrototypeBank& bank,
                    bool* off_manifold = nullptr) {
  if (bank.metric == MatchMetric::euclidean) return z;
  const auto e = extend(*manifold, z, bank.mode);
  if (off_manifold) *off_manifold = e.off_manifold;
  return e.coords;
}

inline Matrix embed_rows(const ClassManifold* manifold, const Matrix& z, const PrototypeBank& bank) {
  if (bank.metric == MatchMetric::euclidean) return z;
  return extend_rows(*manifold, z, bank.mode);
}

/// Smooth dense-kernel embedding used for the learnable prototypes during
/// training; embed_jacobian is its exact derivative.
inline Vector embed_relaxed(const ClassManifold* manifold, const Vector& z, const PrototypeBank& bank) {
  if (bank.metric == MatchMetric::euclidean) return z;
  return extend_fixed_bandwidth(*manifold, z, query_bandwidth(*manifold, z), bank.mode).coords;
}

inline Matrix embed_jacobian(const ClassManifold* manifold, const Vector& z, const PrototypeBank& bank) {
  if (bank.metric == MatchMetric::euclidean) return Matrix::Identity(z.size(), z.size());
  return extend_jacobian(*manifold, z, bank.mode);
}

namespace detail {

inline const ClassManifold* manifold_for(const ManifoldSet& manifolds, const PrototypeBank& bank, int c) {
  if (bank.metric == MatchMetric::euclidean) return nullptr;
  if (c >= static_cast<int>(manifolds.size()))
    fail(ErrorKind::InvalidArgument, "no manifold fitted for class " + std::to_string(c + 1));
  return &manifolds[static_cast<std::size_t>(c)];
}

}  // namespace detail

/// Prototypes initialized from distinct random candidate rows (seeded), head weights 1.
inline PrototypeBank init_prototypes(const CandidatePool& pool, int m, std::uint64_t seed,
                                     double epsilon_sim = 1e-4, MatchMetric metric = MatchMetric::diffusion,
                                     NystromMode mode = NystromMode::row) {
  if (m < 1) fail(ErrorKind::InvalidConfig, "m must be at least 1");
  if (!(epsilon_sim > 0.0 && epsilon_sim < 1.0)) fail(ErrorKind::InvalidConfig, "epsilon_sim must be in (0, 1)");
  PrototypeBank bank;
  bank.m = m;
  bank.epsilon_sim = epsilon_sim;
  bank.metric = metric;
  bank.mode = mode;
  std::mt19937_64 rng(seed);
  for (std::size_t c = 0; c < pool.size(); ++c) {
    const Matrix& cand = pool[c];
    if (cand.rows() == 0) fail(ErrorKind::InvalidArgument, "empty candidate pool for class " + std::to_string(c + 1));
    IndexList order(static_cast<std::size_t>(cand.rows()));
    for (Index i = 0; i < cand.rows(); ++i) order[static_cast<std::size_t>(i)] = i;
    std::shuffle(order.begin(), order.end(), rng);
    ClassPrototypes p;
    p.vectors.resize(m, cand.cols());
    for (int i = 0; i < m; ++i) p.vectors.row(i) = cand.row(order[static_cast<std::size_t>(i) % order.size()]);
    p.anchored = p.vectors;
    p.anchor_index.assign(static_cast<std::size_t>(m), -1);
    p.head = Vector::Ones(m);
    bank.classes.push_back(std::move(p));
  }
  return bank;
}

/// Anchors every prototype to the candidate nearest in its class space
/// (ties to the lowest candidate index). The learnable vectors are replaced by
/// their anchors.
inline PrototypeBank project_prototypes(const PrototypeBank& bank, const ManifoldSet& manifolds,
                                        const CandidatePool& pool, int threads = 1,
                                        std::vector<std::string>* warnings = nullptr) {
  if (pool.size() != bank.classes.size())
    fail(ErrorKind::InvalidArgument, "candidate pool and prototype bank disagree on class count");
  PrototypeBank out = bank;
  const int classes = bank.class_count();
  std::vector<std::vector<std::string>> notes(static_cast<std::size_t>(classes));
  parallel_for(classes, threads, [&](std::ptrdiff_t c) {
    const auto* manifold = detail::manifold_for(manifolds, bank, static_cast<int>(c));
    const Matrix& cand = pool[static_cast<std::size_t>(c)];
    if (cand.rows() == 0) fail(ErrorKind::InvalidArgument, "empty candidate pool");
    const Matrix cand_emb = embed_rows(manifold, cand, bank);
    auto& p = out.classes[static_cast<std::size_t>(c)];
    p.anchored.resize(bank.m, cand.cols());
    p.anchored_coords.resize(bank.m, cand_emb.cols());
    for (int i = 0; i < bank.m; ++i) {
      bool off = false;
      const Vector e = embed(manifold, p.vectors.row(i).transpose(), bank, &off);
      if (off)
        notes[static_cast<std::size_t>(c)].push_back("class " + std::to_string(c + 1) + " prototype " +
                                                     std::to_string(i) + " embeds off-manifold");
      Index best = 0;
      double best_d2 = std::numeric_limits<double>::infinity();
      for (Index u = 0; u < cand_emb.rows(); ++u) {
        const double d2 = (cand_emb.row(u).transpose() - e).squaredNorm();
        if (d2 < best_d2) {
          best_d2 = d2;
          best = u;
        }
      }
      p.anchor_index[static_cast<std::size_t>(i)] = best;
      p.anchored.row(i) = cand.row(best);
      p.anchored_coords.row(i) = cand_emb.row(best);
    }
    p.vectors = p.anchored;
  });
  if (warnings)
    for (auto& n : notes) warnings->insert(warnings->end(), n.begin(), n.end());
  return out;
}

/// d_{c,i} = || embedding_c(z) - embedding_c(anchored p_{c,i}) ||, per class.
inline std::vector<Vector> prototype_distances(const std::vector<Vector>& query_embeddings,
                                               const PrototypeBank& bank) {
  std::vector<Vector> out;
  for (int c = 0; c < bank.class_count(); ++c) {
    const auto& p = bank.classes[static_cast<std::size_t>(c)];
    const Vector& q = query_embeddings[static_cast<std::size_t>(c)];
    out.push_back((p.anchored_coords.rowwise() - q.transpose()).rowwise().norm());
  }
  return out;
}

/// score_c = sum_i head_{c,i} * sim_{c,i}; with several patches (rows of each
/// class's distance matrix) sim_{c,i} is the max over patches.
inline Vector class_scores(const std::vector<Matrix>& patch_distances, const PrototypeBank& bank) {
  Vector scores = Vector::Zero(bank.class_count());
  for (int c = 0; c < bank.class_count(); ++c) {
    const Matrix& d = patch_distances[static_cast<std::size_t>(c)];
    const Vector& head = bank.classes[static_cast<std::size_t>(c)].head;
    for (Index i = 0; i < d.cols(); ++i) scores(c) += head(i) * similarity(d.col(i).minCoeff(), bank.epsilon_sim);
  }
  return scores;
}

inline Vector class_scores(const std::vector<Vector>& distances, const PrototypeBank& bank) {
  std::vector<Matrix> as_patches;
  for (const auto& d : distances) as_patches.emplace_back(d.transpose());
  return class_scores(as_patches, bank);
}

/// Lowest index among the maxima.
inline Index argmax_lowest(const Vector& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

struct PrototypeMatch {
  ClassId class_id = 0;
  int prototype = 0;
  Index anchor = -1;
  Index patch = 0;
  double distance = 0.0;
  double similarity = 0.0;
};

struct Explanation {
  Vector scores;
  ClassId predicted = 1;
  /// Every (class, prototype) pair, class-major.
  std::vector<PrototypeMatch> matches;
  bool off_manifold = false;

  /// Closest prototype of class c (lowest index on ties).
  const PrototypeMatch& nearest(ClassId c) const {
    const PrototypeMatch* best = nullptr;
    for (const auto& m : matches)
      if (m.class_id == c && (!best || m.distance < best->distance)) best = &m;
    ensure(best != nullptr, "explanation has no prototypes for class");
    return *best;
  }
};

/// Classifies a patch set (rows of `patches`; a single query is one row).
inline Explanation classify(const Matrix& patches, const ManifoldSet& manifolds, const PrototypeBank& bank) {
  if (!bank.projected()) fail(ErrorKind::InvalidArgument, "prototype bank must be projected before classify");
  Explanation ex;
  std::vector<Matrix> dists;
  for (int c = 0; c < bank.class_count(); ++c) {
    const auto* manifold = detail::manifold_for(manifolds, bank, c);
    const auto& p = bank.classes[static_cast<std::size_t>(c)];
    if (patches.cols() != p.anchored.cols())
      fail(ErrorKind::DimensionMismatch, "query has " + std::to_string(patches.cols()) +
                                             " features, model has " + std::to_string(p.anchored.cols()));
    Matrix d(patches.rows(), bank.m);
    for (Index r = 0; r < patches.rows(); ++r) {
      bool off = false;
      const Vector e = embed(manifold, patches.row(r).transpose(), bank, &off);
      ex.off_manifold = ex.off_manifold || off;
      d.row(r) = (p.anchored_coords.rowwise() - e.transpose()).rowwise().norm().transpose();
    }
    for (int i = 0; i < bank.m; ++i) {
      PrototypeMatch match;
      match.class_id = c + 1;
      match.prototype = i;
      match.anchor = p.anchor_index[static_cast<std::size_t>(i)];
      match.distance = d.col(i).minCoeff(&match.patch);
      match.similarity = similarity(match.distance, bank.epsilon_sim);
      ex.matches.push_back(match);
    }
    dists.push_back(std::move(d));
  }
  ex.scores = class_scores(dists, bank);
  ex.predicted = static_cast<ClassId>(argmax_lowest(ex.scores)) + 1;
  return ex;
}

inline Explanation classify(const Vector& z, const ManifoldSet& manifolds, const PrototypeBank& bank) {
  return classify(Matrix(z.transpose()), manifolds, bank);
}

/// Embeddings of every row of `features` in every class space: out[c] is N x E.
inline std::vector<Matrix> embed_all(const Matrix& features, const ManifoldSet& manifolds, const PrototypeBank& bank,
                                     int threads = 1) {
  std::vector<Matrix> out(static_cast<std::size_t>(bank.class_count()));
  for (int c = 0; c < bank.class_count(); ++c) {
    const auto* manifold = detail::manifold_for(manifolds, bank, c);
    const Index width = manifold ? manifold->cfg.L : features.cols();
    Matrix& e = out[static_cast<std::size_t>(c)];
    e.resize(features.rows(), width);
    parallel_for(features.rows(), threads, [&](std::ptrdiff_t r) {
      e.row(r) = embed(manifold, features.row(r).transpose(), bank).transpose();
    });
  }
  return out;
}

struct LossGradient {
  double loss = 0.0;
  /// d loss / d vectors, per class (m x D).
  std::vector<Matrix> prototypes;
  /// d loss / d head, per class (m).
  std::vector<Vector> head;
};

/// Mean softmax cross-entropy of the class scores, matching each sample
/// against the learnable (un-anchored) prototype vectors, and its gradient.
/// `query_embeddings[c]` holds every sample embedded in class c's space.
inline LossGradient loss_and_gradient(const ManifoldSet& manifolds, const PrototypeBank& bank,
                                      const std::vector<Matrix>& query_embeddings, const std::vector<ClassId>& labels,
                                      int threads = 1) {
  const int classes = bank.class_count();
  const auto n = static_cast<Index>(labels.size());
  const int m = bank.m;

  // Relaxed prototype embeddings and Jacobians.
  std::vector<Matrix> proto_emb(static_cast<std::size_t>(classes));
  std::vector<std::vector<Matrix>> proto_jac(static_cast<std::size_t>(classes));
  for (int c = 0; c < classes; ++c) {
    proto_emb[static_cast<std::size_t>(c)].resize(m, query_embeddings[static_cast<std::size_t>(c)].cols());
    proto_jac[static_cast<std::size_t>(c)].resize(static_cast<std::size_t>(m));
  }
  parallel_for(static_cast<std::ptrdiff_t>(classes) * m, threads, [&](std::ptrdiff_t k) {
    const int c = static_cast<int>(k / m);
    const int i = static_cast<int>(k % m);
    const auto* manifold = detail::manifold_for(manifolds, bank, c);
    const Vector v = bank.classes[static_cast<std::size_t>(c)].vectors.row(i).transpose();
    proto_emb[static_cast<std::size_t>(c)].row(i) = embed_relaxed(manifold, v, bank).transpose();
    proto_jac[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)] = embed_jacobian(manifold, v, bank);
  });

  // Per-sample squared distances, similarities and d loss / d score.
  std::vector<Matrix> d2(static_cast<std::size_t>(classes), Matrix(n, m));
  Matrix score_grad(n, classes);
  Vector sample_loss(n);
  parallel_for(n, threads, [&](std::ptrdiff_t r) {
    Vector scores = Vector::Zero(classes);
    for (int c = 0; c < classes; ++c) {
      const auto& p = bank.classes[static_cast<std::size_t>(c)];
      for (int i = 0; i < m; ++i) {
        const double u = (query_embeddings[static_cast<std::size_t>(c)].row(r) -
                          proto_emb[static_cast<std::size_t>(c)].row(i)).squaredNorm();
        d2[static_cast<std::size_t>(c)](r, i) = u;
        scores(c) += p.head(i) * std::log((u + 1.0) / (u + bank.epsilon_sim));
      }
    }
    const double top = scores.maxCoeff();
    const Vector ex = (scores.array() - top).exp().matrix();
    const double z = ex.sum();
    const int y = labels[static_cast<std::size_t>(r)] - 1;
    sample_loss(r) = std::log(z) + top - scores(y);
    score_grad.row(r) = (ex / z).transpose();
    score_grad(r, y) -= 1.0;
  });

  LossGradient out;
  out.loss = sample_loss.sum() / static_cast<double>(n);
  out.prototypes.resize(static_cast<std::size_t>(classes));
  out.head.resize(static_cast<std::size_t>(classes));
  for (int c = 0; c < classes; ++c) {
    out.prototypes[static_cast<std::size_t>(c)].resize(m, bank.classes[static_cast<std::size_t>(c)].vectors.cols());
    out.head[static_cast<std::size_t>(c)].resize(m);
  }
  // Reduce each prototype serially over samples so results are thread-count independent.
  parallel_for(static_cast<std::ptrdiff_t>(classes) * m, threads, [&](std::ptrdiff_t k) {
    const int c = static_cast<int>(k / m);
    const int i = static_cast<int>(k % m);
    const auto& p = bank.classes[static_cast<std::size_t>(c)];
    const Matrix& q = query_embeddings[static_cast<std::size_t>(c)];
    const RowVector e = proto_emb[static_cast<std::size_t>(c)].row(i);
    RowVector grad_e = RowVector::Zero(e.size());
    double grad_h = 0.0;
    for (Index r = 0; r < n; ++r) {
      const double u = d2[static_cast<std::size_t>(c)](r, i);
      const double g = score_grad(r, c);
      const double ds_du = 1.0 / (u + 1.0) - 1.0 / (u + bank.epsilon_sim);
      grad_e += (g * p.head(i) * ds_du * -2.0) * (q.row(r) - e);
      grad_h += g * std::log((u + 1.0) / (u + bank.epsilon_sim));
    }
    grad_e /= static_cast<double>(n);
    out.prototypes[static_cast<std::size_t>(c)].row(i) =
        grad_e * proto_jac[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)];
    out.head[static_cast<std::size_t>(c)](i) = grad_h / static_cast<double>(n);
  });
  return out;
}

struct TrainConfig {
  GraphConfig graph;
  DiffusionConfig diffusion;
  LandmarkConfig landmarks;
  NystromMode mode = NystromMode::row;
  MatchMetric metric = MatchMetric::diffusion;
  int m = 10;
  double epsilon_sim = 1e-4;
  bool head_trainable = false;
  int epochs = 50;
  double step_size = 0.1;
  double head_step_size = 0.1;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct TrainResult {
  PrototypeBank bank;
  ManifoldSet manifolds;
  /// Mean training loss at the start of every epoch.
  std::vector<double> loss_trace;
  std::vector<int> refresh_epochs;
  std::vector<std::string> warnings;
};

class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(int epoch, std::vector<double> trace)
      : Error(ErrorKind::NonFiniteLoss, "non-finite loss at epoch " + std::to_string(epoch)),
        trace_(std::move(trace)) {}
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

inline TrainResult train_prototypes(const FeatureSet& fs, const CandidatePool& pool, const TrainConfig& cfg) {
  if (cfg.epochs < 0) fail(ErrorKind::InvalidConfig, "epochs must be non-negative");
  if (cfg.step_size < 0.0 || cfg.head_step_size < 0.0) fail(ErrorKind::InvalidConfig, "step sizes must be non-negative");
  if (static_cast<int>(pool.size()) != fs.class_count)
    fail(ErrorKind::InvalidArgument, "candidate pool must have one entry per class");

  TrainResult out;
  auto refit = [&] {
    if (cfg.metric == MatchMetric::diffusion)
      out.manifolds = refresh_manifolds(fs, cfg.landmarks, cfg.graph, cfg.diffusion, cfg.threads, &out.warnings);
  };
  refit();
  out.bank = init_prototypes(pool, cfg.m, cfg.seed, cfg.epsilon_sim, cfg.metric, cfg.mode);
  auto queries = embed_all(fs.features, out.manifolds, out.bank, cfg.threads);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto lg = loss_and_gradient(out.manifolds, out.bank, queries, fs.labels, cfg.threads);
    out.loss_trace.push_back(lg.loss);
    if (!std::isfinite(lg.loss)) throw NonFiniteLossError(epoch, out.loss_trace);
    for (int c = 0; c < out.bank.class_count(); ++c) {
      auto& p = out.bank.classes[static_cast<std::size_t>(c)];
      p.vectors -= cfg.step_size * lg.prototypes[static_cast<std::size_t>(c)];
      if (cfg.head_trainable)
        p.head = (p.head - cfg.head_step_size * lg.head[static_cast<std::size_t>(c)]).cwiseMax(0.0);
    }
    if (should_refresh(epoch, cfg.landmarks)) {
      refit();
      queries = embed_all(fs.features, out.manifolds, out.bank, cfg.threads);
      out.bank = project_prototypes(out.bank, out.manifolds, pool, cfg.threads, &out.warnings);
      out.refresh_epochs.push_back(epoch);
    }
  }
  out.bank = project_prototypes(out.bank, out.manifolds, pool, cfg.threads, &out.warnings);
  return out;
}

}  // namespace geoproto
