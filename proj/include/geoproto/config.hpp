#pragma once

// FitConfig: every tunable of a fit, read from key-value text. Unknown keys
// are rejected.

#include "geoproto/error.hpp"
#include "geoproto/graph.hpp"
#include "geoproto/kv.hpp"
#include "geoproto/landmarks.hpp"
#include "geoproto/nystrom.hpp"
#include "geoproto/proto.hpp"
#include "geoproto/spectral.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>

namespace geoproto {

struct PrototypeConfig {
  int m = 10;
  double epsilon_sim = 1e-4;
  bool head_trainable = false;
};

/// Gradient training of the prototypes during `fit`; 0 epochs only anchors
/// the seeded initial prototypes.
struct TrainingConfig {
  int epochs = 0;
  double step_size = 0.1;
  double head_step_size = 0.1;
};

struct FitConfig {
  GraphConfig graph;
  DiffusionConfig diffusion;
  LandmarkConfig landmarks;
  NystromMode nystrom_mode = NystromMode::row;
  PrototypeConfig prototypes;
  TrainingConfig training;
  std::uint64_t seed = 0;
};

namespace detail {

[[noreturn]] inline void bad_value(const std::string& field, const std::string& expected) {
  fail(ErrorKind::InvalidConfig, field + " must be " + expected);
}

inline int positive_int(const std::string& field, const std::string& value) {
  auto v = kv::parse_integer<int>(value);
  if (!v || *v < 1) bad_value(field, "a positive integer");
  return *v;
}

inline int non_negative_int(const std::string& field, const std::string& value) {
  auto v = kv::parse_integer<int>(value);
  if (!v || *v < 0) bad_value(field, "a non-negative integer");
  return *v;
}

inline std::uint64_t seed_value(const std::string& field, const std::string& value) {
  auto v = kv::parse_integer<std::uint64_t>(value);
  if (!v) bad_value(field, "a non-negative integer");
  return *v;
}

inline double positive_real(const std::string& field, const std::string& value) {
  auto v = kv::parse_double(value);
  if (!v || !(*v > 0.0) || !std::isfinite(*v)) bad_value(field, "a positive real");
  return *v;
}

inline double non_negative_real(const std::string& field, const std::string& value) {
  auto v = kv::parse_double(value);
  if (!v || !(*v >= 0.0) || !std::isfinite(*v)) bad_value(field, "a non-negative real");
  return *v;
}

inline bool flag(const std::string& field, const std::string& value) {
  auto v = kv::parse_bool(value);
  if (!v) bad_value(field, "true or false");
  return *v;
}

using Setter = std::function<void(FitConfig&, const std::string&)>;

inline const std::map<std::string, Setter>& config_setters() {
  static const std::map<std::string, Setter> setters = {
      {"graph.k", [](FitConfig& c, const std::string& v) { c.graph.k = positive_int("k", v); }},
      {"graph.local_scaling", [](FitConfig& c, const std::string& v) { c.graph.local_scaling = flag("local_scaling", v); }},
      {"graph.epsilon_sigma", [](FitConfig& c, const std::string& v) { c.graph.epsilon_sigma = positive_real("epsilon_sigma", v); }},
      {"graph.connect_components", [](FitConfig& c, const std::string& v) { c.graph.connect_components = flag("connect_components", v); }},
      {"diffusion.t", [](FitConfig& c, const std::string& v) { c.diffusion.t = positive_int("t", v); }},
      {"diffusion.L", [](FitConfig& c, const std::string& v) { c.diffusion.L = positive_int("L", v); }},
      {"diffusion.normalization",
       [](FitConfig& c, const std::string& v) {
         if (v == "none") c.diffusion.normalization = Normalization::none;
         else if (v == "energy") c.diffusion.normalization = Normalization::energy;
         else if (v == "zca") c.diffusion.normalization = Normalization::zca;
         else bad_value("normalization", "one of none, energy, zca");
       }},
      {"diffusion.zca_epsilon", [](FitConfig& c, const std::string& v) { c.diffusion.zca_epsilon = positive_real("zca_epsilon", v); }},
      {"landmarks.selection",
       [](FitConfig& c, const std::string& v) {
         if (v == "random") c.landmarks.selection = LandmarkSelection::random;
         else if (v == "kmeans") c.landmarks.selection = LandmarkSelection::kmeans;
         else bad_value("selection", "random or kmeans");
       }},
      {"landmarks.pool",
       [](FitConfig& c, const std::string& v) {
         if (v == "per_class") c.landmarks.pool = LandmarkPool::per_class;
         else if (v == "global") c.landmarks.pool = LandmarkPool::global;
         else bad_value("pool", "per_class or global");
       }},
      {"landmarks.count", [](FitConfig& c, const std::string& v) { c.landmarks.count = positive_int("count", v); }},
      {"landmarks.update_every", [](FitConfig& c, const std::string& v) { c.landmarks.update_every = non_negative_int("update_every", v); }},
      {"landmarks.seed", [](FitConfig& c, const std::string& v) { c.landmarks.seed = seed_value("landmarks.seed", v); }},
      {"landmarks.kmeans_max_iters", [](FitConfig& c, const std::string& v) { c.landmarks.kmeans_max_iters = positive_int("kmeans_max_iters", v); }},
      {"nystrom_mode",
       [](FitConfig& c, const std::string& v) {
         if (v == "row") c.nystrom_mode = NystromMode::row;
         else if (v == "paper") c.nystrom_mode = NystromMode::paper;
         else bad_value("nystrom_mode", "row or paper");
       }},
      {"prototypes.m", [](FitConfig& c, const std::string& v) { c.prototypes.m = positive_int("m", v); }},
      {"prototypes.epsilon_sim",
       [](FitConfig& c, const std::string& v) {
         c.prototypes.epsilon_sim = positive_real("epsilon_sim", v);
         if (c.prototypes.epsilon_sim >= 1.0) bad_value("epsilon_sim", "in (0, 1)");
       }},
      {"prototypes.head_trainable", [](FitConfig& c, const std::string& v) { c.prototypes.head_trainable = flag("head_trainable", v); }},
      {"training.epochs", [](FitConfig& c, const std::string& v) { c.training.epochs = non_negative_int("epochs", v); }},
      {"training.step_size", [](FitConfig& c, const std::string& v) { c.training.step_size = non_negative_real("step_size", v); }},
      {"training.head_step_size", [](FitConfig& c, const std::string& v) { c.training.head_step_size = non_negative_real("head_step_size", v); }},
      {"seed", [](FitConfig& c, const std::string& v) { c.seed = seed_value("seed", v); }},
  };
  return setters;
}

}  // namespace detail

/// Applies `key = value` entries on top of `base` (defaults when omitted).
inline FitConfig parse_fit_config(std::string_view text, std::string_view origin, FitConfig base = {}) {
  const auto& setters = detail::config_setters();
  for (const auto& e : kv::parse(text, origin)) {
    auto it = setters.find(e.key);
    // A bare leaf name ("t = 4") is accepted when exactly one field has it.
    if (it == setters.end() && e.key.find('.') == std::string::npos) {
      auto match = setters.end();
      int hits = 0;
      for (auto s = setters.begin(); s != setters.end(); ++s) {
        const auto dot = s->first.rfind('.');
        if (dot != std::string::npos && s->first.compare(dot + 1, std::string::npos, e.key) == 0) {
          match = s;
          ++hits;
        }
      }
      if (hits == 1) it = match;
    }
    if (it == setters.end())
      fail(ErrorKind::InvalidConfig, std::string(origin) + ":" + std::to_string(e.line) + ": unknown config key '" +
                                         e.key + "'");
    it->second(base, e.value);
  }
  return base;
}

inline FitConfig load_fit_config(const std::filesystem::path& path) {
  return parse_fit_config(detail::read_text_file(path), path.string());
}

/// Canonical text form; parse_fit_config(serialize(c)) == c.
inline std::string serialize(const FitConfig& c) {
  std::ostringstream out;
  out << "graph.k = " << c.graph.k << '\n'
      << "graph.local_scaling = " << kv::format_bool(c.graph.local_scaling) << '\n'
      << "graph.epsilon_sigma = " << kv::format_double(c.graph.epsilon_sigma) << '\n'
      << "graph.connect_components = " << kv::format_bool(c.graph.connect_components) << '\n'
      << "diffusion.t = " << c.diffusion.t << '\n'
      << "diffusion.L = " << c.diffusion.L << '\n'
      << "diffusion.normalization = " << to_string(c.diffusion.normalization) << '\n'
      << "diffusion.zca_epsilon = " << kv::format_double(c.diffusion.zca_epsilon) << '\n'
      << "landmarks.selection = " << to_string(c.landmarks.selection) << '\n'
      << "landmarks.pool = " << to_string(c.landmarks.pool) << '\n'
      << "landmarks.count = " << c.landmarks.count << '\n'
      << "landmarks.update_every = " << c.landmarks.update_every << '\n'
      << "landmarks.seed = " << c.landmarks.seed << '\n'
      << "landmarks.kmeans_max_iters = " << c.landmarks.kmeans_max_iters << '\n'
      << "nystrom_mode = " << to_string(c.nystrom_mode) << '\n'
      << "prototypes.m = " << c.prototypes.m << '\n'
      << "prototypes.epsilon_sim = " << kv::format_double(c.prototypes.epsilon_sim) << '\n'
      << "prototypes.head_trainable = " << kv::format_bool(c.prototypes.head_trainable) << '\n'
      << "training.epochs = " << c.training.epochs << '\n'
      << "training.step_size = " << kv::format_double(c.training.step_size) << '\n'
      << "training.head_step_size = " << kv::format_double(c.training.head_step_size) << '\n'
      << "seed = " << c.seed << '\n';
  return out.str();
}

inline bool operator==(const FitConfig& a, const FitConfig& b) { return serialize(a) == serialize(b); }

inline TrainConfig to_train_config(const FitConfig& c, int threads) {
  TrainConfig t;
  t.graph = c.graph;
  t.diffusion = c.diffusion;
  t.landmarks = c.landmarks;
  t.mode = c.nystrom_mode;
  t.m = c.prototypes.m;
  t.epsilon_sim = c.prototypes.epsilon_sim;
  t.head_trainable = c.prototypes.head_trainable;
  t.epochs = c.training.epochs;
  t.step_size = c.training.step_size;
  t.head_step_size = c.training.head_step_size;
  t.seed = c.seed;
  t.threads = threads;
  return t;
}

}  // namespace geoproto
