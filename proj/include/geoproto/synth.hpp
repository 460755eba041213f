#pragma once

// Synthetic manifolds with exact geodesic oracles, and evaluation metrics.

#include "geoproto/error.hpp"
#include "geoproto/features_io.hpp"
#include "geoproto/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace geoproto::synth {

enum class Generator { swiss_roll, circles };

inline std::string_view to_string(Generator g) { return g == Generator::swiss_roll ? "swiss_roll" : "circles"; }

struct SyntheticSet {
  FeatureSet data;
  /// swiss_roll: (s, h). circles: (theta, radius).
  Matrix intrinsic;
  Generator generator = Generator::swiss_roll;
  std::uint64_t seed = 0;

  /// True intrinsic distance between two samples of the same class.
  double geodesic(Index i, Index j) const;
};

/// Arc length of the spiral (s cos s, s sin s) from 0 to s.
inline double swiss_roll_arclength(double s) {
  return 0.5 * (s * std::sqrt(1.0 + s * s) + std::asinh(s));
}

inline double SyntheticSet::geodesic(Index i, Index j) const {
  if (generator == Generator::swiss_roll) {
    const double ds = swiss_roll_arclength(intrinsic(i, 0)) - swiss_roll_arclength(intrinsic(j, 0));
    const double dh = intrinsic(i, 1) - intrinsic(j, 1);
    return std::sqrt(ds * ds + dh * dh);
  }
  if (data.labels[static_cast<std::size_t>(i)] != data.labels[static_cast<std::size_t>(j)])
    fail(ErrorKind::InvalidArgument, "no geodesic between different circles");
  double dt = std::fmod(std::abs(intrinsic(i, 0) - intrinsic(j, 0)), 2.0 * std::numbers::pi);
  dt = std::min(dt, 2.0 * std::numbers::pi - dt);
  return intrinsic(i, 1) * dt;
}

/// (s cos s, h, s sin s), s ~ U[1.5 pi, 4.5 pi], h ~ U[0, 21], plus N(0, noise^2) per axis. One class.
inline SyntheticSet gen_swiss_roll(Index n, double noise, std::uint64_t seed) {
  if (n < 10) fail(ErrorKind::InvalidArgument, "swiss roll needs n >= 10");
  if (noise < 0.0) fail(ErrorKind::InvalidArgument, "noise must be non-negative");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> s_dist(1.5 * std::numbers::pi, 4.5 * std::numbers::pi);
  std::uniform_real_distribution<double> h_dist(0.0, 21.0);
  std::normal_distribution<double> eps(0.0, 1.0);

  SyntheticSet out;
  out.generator = Generator::swiss_roll;
  out.seed = seed;
  out.intrinsic.resize(n, 2);
  out.data.features.resize(n, 3);
  out.data.labels.assign(static_cast<std::size_t>(n), 1);
  out.data.class_count = 1;
  for (Index i = 0; i < n; ++i) {
    const double s = s_dist(rng);
    const double h = h_dist(rng);
    out.intrinsic(i, 0) = s;
    out.intrinsic(i, 1) = h;
    out.data.features(i, 0) = s * std::cos(s);
    out.data.features(i, 1) = h;
    out.data.features(i, 2) = s * std::sin(s);
  }
  if (noise > 0.0)
    for (Index i = 0; i < n; ++i)
      for (Index d = 0; d < 3; ++d) out.data.features(i, d) += noise * eps(rng);
  return out;
}

/// Two concentric circles: first n/2 samples on r1 (class 1), the rest on r2 (class 2).
inline SyntheticSet gen_circles(Index n, double r1, double r2, double noise, std::uint64_t seed) {
  if (!(r1 > 0.0 && r1 < r2)) fail(ErrorKind::InvalidArgument, "circles need 0 < r1 < r2");
  if (n < 2 || n % 2 != 0) fail(ErrorKind::InvalidArgument, "circles need an even n >= 2");
  if (noise < 0.0) fail(ErrorKind::InvalidArgument, "noise must be non-negative");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> eps(0.0, 1.0);

  SyntheticSet out;
  out.generator = Generator::circles;
  out.seed = seed;
  out.intrinsic.resize(n, 2);
  out.data.features.resize(n, 2);
  out.data.labels.resize(static_cast<std::size_t>(n));
  out.data.class_count = 2;
  for (Index i = 0; i < n; ++i) {
    const bool inner = i < n / 2;
    const double r = inner ? r1 : r2;
    const double theta = angle(rng);
    out.intrinsic(i, 0) = theta;
    out.intrinsic(i, 1) = r;
    out.data.labels[static_cast<std::size_t>(i)] = inner ? 1 : 2;
    out.data.features(i, 0) = r * std::cos(theta) + noise * eps(rng);
    out.data.features(i, 1) = r * std::sin(theta) + noise * eps(rng);
  }
  return out;
}

/// Average (1-based) ranks, ties share the mean of their positions.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Spearman rank correlation (Pearson correlation of average ranks).
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) fail(ErrorKind::InvalidArgument, "spearman inputs differ in length");
  if (a.size() < 2) fail(ErrorKind::InvalidArgument, "spearman needs at least 2 values");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - mean) * (rb[i] - mean);
    saa += (ra[i] - mean) * (ra[i] - mean);
    sbb += (rb[i] - mean) * (rb[i] - mean);
  }
  if (saa == 0.0 || sbb == 0.0) fail(ErrorKind::ConstantInput, "spearman of a constant vector is undefined");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// Expected calibration error over equal-width bins on [0, 1].
inline double ece(const std::vector<double>& confidences, const std::vector<bool>& correct, int bins) {
  if (confidences.size() != correct.size()) fail(ErrorKind::InvalidArgument, "ece inputs differ in length");
  if (bins < 1) fail(ErrorKind::InvalidArgument, "ece needs at least one bin");
  if (confidences.empty()) return 0.0;
  std::vector<double> conf_sum(static_cast<std::size_t>(bins), 0.0), hits(static_cast<std::size_t>(bins), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) fail(ErrorKind::InvalidArgument, "confidence outside [0, 1]");
    const auto b = std::min(static_cast<std::size_t>(c * bins), static_cast<std::size_t>(bins - 1));
    conf_sum[b] += c;
    hits[b] += correct[i] ? 1.0 : 0.0;
    ++count[b];
  }
  const double total = static_cast<double>(confidences.size());
  double out = 0.0;
  for (std::size_t b = 0; b < count.size(); ++b) {
    if (count[b] == 0) continue;
    const double nb = static_cast<double>(count[b]);
    out += (nb / total) * std::abs(hits[b] / nb - conf_sum[b] / nb);
  }
  return out;
}

/// Softmax of class scores (temperature 1); the confidence used for ECE.
inline Vector softmax(const Vector& scores) {
  const Vector e = (scores.array() - scores.maxCoeff()).exp().matrix();
  return e / e.sum();
}

}  // namespace geoproto::synth
