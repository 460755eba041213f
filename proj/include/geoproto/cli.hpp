#pragma once

// The geoproto command line, runnable in-process:
//   fit       features (+ config) -> model file and a fit report
//   classify  model + queries -> per-query CSV with the explanation record
//   bench     model + queries -> latency and geodesic-agreement report
//   synth     swiss roll / circles -> feature CSV plus intrinsic sidecar
//
// Exit codes: 0 success, 1 user or data error, 2 internal invariant violation.

#include "geoproto/config.hpp"
#include "geoproto/error.hpp"
#include "geoproto/features_io.hpp"
#include "geoproto/graph.hpp"
#include "geoproto/kv.hpp"
#include "geoproto/model_io.hpp"
#include "geoproto/parallel.hpp"
#include "geoproto/proto.hpp"
#include "geoproto/synth.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

namespace geoproto::cli {

namespace fs = std::filesystem;

/// Sidecar with the intrinsic coordinates of a synthetic feature file:
/// data.csv -> data.intrinsic.csv
inline fs::path intrinsic_path(const fs::path& features) {
  auto p = features;
  p.replace_extension(".intrinsic.csv");
  return p;
}

inline FeatureFormat detect_format(const fs::path& path, const std::string& requested) {
  if (requested == "csv") return FeatureFormat::csv;
  if (requested == "f32") return FeatureFormat::raw_f32;
  const auto ext = path.extension().string();
  return ext == ".meta" || ext == ".f32" ? FeatureFormat::raw_f32 : FeatureFormat::csv;
}

inline void write_intrinsic(const fs::path& path, const synth::SyntheticSet& s) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << (s.generator == synth::Generator::swiss_roll ? "s,h" : "theta,radius") << '\n';
  for (Index i = 0; i < s.intrinsic.rows(); ++i)
    out << kv::format_double(s.intrinsic(i, 0)) << ',' << kv::format_double(s.intrinsic(i, 1)) << '\n';
  if (!out) fail(ErrorKind::Io, "write to " + path.string() + " failed");
}

/// Reads an intrinsic sidecar back into a SyntheticSet around `data`.
inline synth::SyntheticSet read_intrinsic(const fs::path& path, FeatureSet data) {
  const auto text = detail::read_text_file(path);
  std::istringstream in(text);
  std::string header;
  std::getline(in, header);
  header = std::string(kv::trim(header));
  synth::SyntheticSet s;
  if (header == "s,h") s.generator = synth::Generator::swiss_roll;
  else if (header == "theta,radius") s.generator = synth::Generator::circles;
  else fail(ErrorKind::MalformedFile, path.string() + ": unrecognized intrinsic header '" + header + "'");
  s.intrinsic.resize(data.size(), 2);
  Index row = 0;
  for (std::string line; std::getline(in, line);) {
    if (kv::trim(line).empty()) continue;
    const auto cells = detail::split_commas(line);
    if (row >= data.size() || cells.size() != 2)
      fail(ErrorKind::MalformedFile, path.string() + ": intrinsic rows do not match the feature file");
    for (int c = 0; c < 2; ++c) {
      auto v = kv::parse_double(kv::trim(cells[static_cast<std::size_t>(c)]));
      if (!v) fail(ErrorKind::MalformedFile, path.string() + ": bad number on row " + std::to_string(row + 1));
      s.intrinsic(row, c) = *v;
    }
    ++row;
  }
  if (row != data.size()) fail(ErrorKind::MalformedFile, path.string() + ": intrinsic rows do not match the feature file");
  s.data = std::move(data);
  return s;
}

/// Spearman agreement of model-space and feature-space distances with the
/// true geodesic, over `pairs` seeded random same-class pairs. Diffusion
/// distances use the un-normalized extension coordinates of the pair's class.
struct GeodesicAgreement {
  double spearman_diffusion = 0.0;
  double spearman_euclidean = 0.0;
  int pairs = 0;
};

inline GeodesicAgreement geodesic_agreement(const synth::SyntheticSet& s, const ManifoldSet& manifolds,
                                            NystromMode mode, int pairs, std::uint64_t seed, int threads) {
  const auto& fs = s.data;
  std::vector<IndexList> by_class(manifolds.size());
  for (Index i = 0; i < fs.size(); ++i) {
    const int c = fs.labels[static_cast<std::size_t>(i)];
    if (c >= 1 && c <= static_cast<int>(manifolds.size())) by_class[static_cast<std::size_t>(c - 1)].push_back(i);
  }
  std::vector<Matrix> coords(manifolds.size());
  for (std::size_t c = 0; c < manifolds.size(); ++c) {
    ClassManifold raw = manifolds[c];
    raw.norm = NormState{};
    const auto& rows = by_class[c];
    coords[c].resize(static_cast<Index>(rows.size()), raw.cfg.L);
    parallel_for(static_cast<std::ptrdiff_t>(rows.size()), threads, [&](std::ptrdiff_t r) {
      coords[c].row(r) = extend(raw, fs.features.row(rows[static_cast<std::size_t>(r)]).transpose(), mode).coords.transpose();
    });
  }

  IndexList eligible;
  for (std::size_t c = 0; c < by_class.size(); ++c)
    if (by_class[c].size() >= 2) eligible.push_back(static_cast<Index>(c));
  if (eligible.empty()) fail(ErrorKind::InvalidArgument, "no class has two labeled queries for geodesic agreement");

  std::mt19937_64 rng(seed);
  std::vector<double> geo, diff, eucl;
  for (int p = 0; p < pairs; ++p) {
    const auto c = static_cast<std::size_t>(eligible[rng() % eligible.size()]);
    const auto& rows = by_class[c];
    const auto a = static_cast<Index>(rng() % rows.size());
    auto b = static_cast<Index>(rng() % (rows.size() - 1));
    if (b >= a) ++b;
    const Index i = rows[static_cast<std::size_t>(a)], j = rows[static_cast<std::size_t>(b)];
    geo.push_back(s.geodesic(i, j));
    diff.push_back((coords[c].row(a) - coords[c].row(b)).norm());
    eucl.push_back((fs.features.row(i) - fs.features.row(j)).norm());
  }
  return {synth::spearman(diff, geo), synth::spearman(eucl, geo), pairs};
}

struct FitReport {
  std::string text;
  ModelBundle bundle;
};

/// Fits a bundle and renders the report. Deterministic for fixed inputs.
inline FitReport fit_model(const FeatureSet& data, const CandidatePool& pool, const FitConfig& cfg, int threads) {
  const auto result = train_prototypes(data, pool, to_train_config(cfg, threads));
  FitReport r;
  r.bundle.manifolds = result.manifolds;
  r.bundle.bank = result.bank;
  r.bundle.config = cfg;

  std::ostringstream out;
  out << "samples = " << data.size() << '\n'
      << "dim = " << data.dim() << '\n'
      << "classes = " << data.class_count << '\n';
  for (std::size_t c = 0; c < result.manifolds.size(); ++c) {
    const auto& m = result.manifolds[c];
    const auto diag = graph_diagnostics(m.graph);
    const auto p = "class." + std::to_string(c + 1) + ".";
    out << p << "n = " << data.class_rows(static_cast<ClassId>(c + 1)).size() << '\n'
        << p << "landmarks = " << m.size() << '\n'
        << p << "components = " << diag.components << '\n'
        << p << "bridges_added = " << m.graph.bridges_added << '\n'
        << p << "avg_path_length = " << kv::format_double(diag.avg_path_length) << '\n'
        << p << "L = " << m.basis.L << '\n'
        << p << "lambda_1 = " << kv::format_double(m.basis.eigenvalues(1)) << '\n';
  }
  for (std::size_t e = 0; e < result.loss_trace.size(); ++e)
    out << "epoch." << e + 1 << ".loss = " << kv::format_double(result.loss_trace[e]) << '\n';
  for (const auto& w : result.warnings) out << "warning = " << w << '\n';
  r.text = out.str();
  return r;
}

inline std::string classify_header(int classes) {
  std::string h = "index,predicted";
  for (int c = 1; c <= classes; ++c) h += ",score_" + std::to_string(c);
  return h + ",prototype_class,prototype,anchor,distance";
}

/// One CSV line per query; the explanation is the nearest prototype of the predicted class.
inline std::string classify_row(Index index, const Explanation& ex) {
  std::string line = std::to_string(index) + "," + std::to_string(ex.predicted);
  for (Index c = 0; c < ex.scores.size(); ++c) line += "," + kv::format_double(ex.scores(c));
  const auto& m = ex.nearest(ex.predicted);
  line += "," + std::to_string(m.class_id) + "," + std::to_string(m.prototype) + "," + std::to_string(m.anchor) + "," +
          kv::format_double(m.distance);
  return line;
}

inline std::vector<Explanation> classify_all(const Matrix& queries, const ModelBundle& model, int threads) {
  std::vector<Explanation> out(static_cast<std::size_t>(queries.rows()));
  parallel_for(queries.rows(), threads, [&](std::ptrdiff_t r) {
    out[static_cast<std::size_t>(r)] = classify(Vector(queries.row(r).transpose()), model.manifolds, model.bank);
  });
  return out;
}

namespace detail {

inline int run_fit(const std::string& features, const std::string& format, const std::string& config_path,
                   const std::string& candidates, const std::string& out_path, int threads, std::ostream& out) {
  const auto data = load_feature_set(features, detect_format(features, format));
  const FitConfig cfg = config_path.empty() ? FitConfig{} : load_fit_config(config_path);
  CandidatePool pool;
  if (candidates.empty()) {
    pool = default_candidates(data);
  } else {
    LoadOptions opts;
    opts.require_all_classes = false;
    const auto cand = load_feature_set(candidates, detect_format(candidates, format), opts);
    if (cand.dim() != data.dim())
      fail(ErrorKind::DimensionMismatch, "candidates have " + std::to_string(cand.dim()) +
                                             " features, training data has " + std::to_string(data.dim()));
    for (ClassId c = 1; c <= data.class_count; ++c) {
      IndexList rows;
      for (Index i = 0; i < cand.size(); ++i)
        if (cand.labels[static_cast<std::size_t>(i)] == c) rows.push_back(i);
      if (rows.empty()) fail(ErrorKind::EmptyClass, "candidate file has no rows for class " + std::to_string(c));
      pool.push_back(cand.rows(rows));
    }
  }
  const auto report = fit_model(data, pool, cfg, threads);
  save_model(report.bundle, out_path);
  out << report.text;
  return 0;
}

inline FeatureSet load_queries(const std::string& path, const std::string& format) {
  LoadOptions opts;
  opts.require_all_classes = false;
  return load_feature_set(path, detect_format(path, format), opts);
}

inline int run_classify(const std::string& model_path, const std::string& features, const std::string& format,
                        const std::string& out_path, int threads, std::ostream& out) {
  const auto model = load_model(model_path);
  const auto queries = load_queries(features, format);
  if (queries.dim() != model.dim())
    fail(ErrorKind::DimensionMismatch, "query has " + std::to_string(queries.dim()) + " features, model has " +
                                           std::to_string(model.dim()));
  const auto results = classify_all(queries.features, model, threads);

  std::ofstream csv(out_path);
  if (!csv) fail(ErrorKind::Io, "cannot open " + out_path + " for writing");
  csv << classify_header(model.class_count()) << '\n';
  Index labeled = 0, correct = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    csv << classify_row(static_cast<Index>(i), results[i]) << '\n';
    const int y = queries.labels[i];
    if (y != 0) {
      ++labeled;
      if (y == results[i].predicted) ++correct;
    }
  }
  if (!csv) fail(ErrorKind::Io, "write to " + out_path + " failed");
  out << "queries = " << results.size() << '\n';
  if (labeled > 0)
    out << "labeled = " << labeled << '\n'
        << "accuracy = " << kv::format_double(static_cast<double>(correct) / static_cast<double>(labeled)) << '\n';
  return 0;
}

inline double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const auto at = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
  return v[std::min(at, v.size() - 1)];
}

inline int run_bench(const std::string& model_path, const std::string& queries_path, const std::string& format,
                     int repeat, int pairs, int threads, std::ostream& out) {
  if (repeat < 1) fail(ErrorKind::InvalidArgument, "repeat must be at least 1");
  const auto model = load_model(model_path);
  const auto queries = load_queries(queries_path, format);
  if (queries.dim() != model.dim())
    fail(ErrorKind::DimensionMismatch, "query has " + std::to_string(queries.dim()) + " features, model has " +
                                           std::to_string(model.dim()));

  // Latency is per query, single-threaded, so it measures one embed + score.
  std::vector<double> latency_ms;
  std::vector<ClassId> predicted(static_cast<std::size_t>(queries.size()));
  for (int r = 0; r < repeat; ++r)
    for (Index i = 0; i < queries.size(); ++i) {
      const Vector z = queries.features.row(i).transpose();
      const auto t0 = std::chrono::steady_clock::now();
      const auto ex = classify(z, model.manifolds, model.bank);
      const auto t1 = std::chrono::steady_clock::now();
      latency_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      predicted[static_cast<std::size_t>(i)] = ex.predicted;
    }

  Index labeled = 0, correct = 0;
  for (Index i = 0; i < queries.size(); ++i) {
    const int y = queries.labels[static_cast<std::size_t>(i)];
    if (y == 0) continue;
    ++labeled;
    if (y == predicted[static_cast<std::size_t>(i)]) ++correct;
  }
  out << "queries = " << queries.size() << '\n' << "classes = " << model.class_count() << '\n';
  if (labeled > 0)
    out << "accuracy = " << kv::format_double(static_cast<double>(correct) / static_cast<double>(labeled)) << '\n';

  const auto sidecar = intrinsic_path(queries_path);
  if (fs::exists(sidecar) && !model.manifolds.empty()) {
    const auto s = read_intrinsic(sidecar, queries);
    const auto agreement = geodesic_agreement(s, model.manifolds, model.bank.mode, pairs, 0, threads);
    out << "pairs = " << agreement.pairs << '\n'
        << "spearman_diffusion = " << kv::format_double(agreement.spearman_diffusion) << '\n'
        << "spearman_euclidean = " << kv::format_double(agreement.spearman_euclidean) << '\n';
  }
  out << "repeat = " << repeat << '\n'
      << "latency_median_ms = " << kv::format_double(percentile(latency_ms, 0.5)) << '\n'
      << "latency_p95_ms = " << kv::format_double(percentile(latency_ms, 0.95)) << '\n';
  return 0;
}

inline int run_synth(const std::string& generator, Index n, double noise, double r1, double r2, std::uint64_t seed,
                     const std::string& out_path, std::ostream& out) {
  synth::SyntheticSet s;
  if (generator == "swiss_roll") s = synth::gen_swiss_roll(n, noise, seed);
  else if (generator == "circles") s = synth::gen_circles(n, r1, r2, noise, seed);
  else fail(ErrorKind::InvalidArgument, "unknown generator '" + generator + "'");
  save_feature_csv(out_path, s.data);
  write_intrinsic(intrinsic_path(out_path), s);
  out << "generator = " << generator << '\n'
      << "samples = " << s.data.size() << '\n'
      << "classes = " << s.data.class_count << '\n'
      << "intrinsic = " << intrinsic_path(out_path).string() << '\n';
  return 0;
}

}  // namespace detail

/// Runs one command line (args excludes the program name).
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Class-conditional diffusion geometry for prototype matching", "geoproto"};
  app.require_subcommand(1);
  int threads = default_thread_count();
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  std::string format = "auto";
  app.add_option("--format", format, "Feature file format")->check(CLI::IsMember({"auto", "csv", "f32"}));

  std::string features, config, candidates, model, out_path, generator = "swiss_roll";
  int repeat = 1, pairs = 20000;
  Index n = 2000;
  double noise = 0.0, r1 = 1.0, r2 = 1.3;
  std::uint64_t seed = 0;

  auto* fit = app.add_subcommand("fit", "Fit class manifolds and prototypes");
  fit->add_option("--features", features, "Training features")->required();
  fit->add_option("--config", config, "Config file");
  fit->add_option("--candidates", candidates, "Prototype candidate features");
  fit->add_option("--out", out_path, "Model file")->required();

  auto* cls = app.add_subcommand("classify", "Classify queries");
  cls->add_option("--model", model, "Model file")->required();
  cls->add_option("--features", features, "Query features")->required();
  cls->add_option("--out", out_path, "Result CSV")->required();

  auto* bench = app.add_subcommand("bench", "Latency and geodesic agreement");
  bench->add_option("--model", model, "Model file")->required();
  bench->add_option("--queries", features, "Query features")->required();
  bench->add_option("--repeat", repeat, "Timing passes over the queries");
  bench->add_option("--pairs", pairs, "Random pairs for geodesic agreement")->check(CLI::Range(2, 100000000));

  auto* syn = app.add_subcommand("synth", "Generate a synthetic manifold");
  syn->add_option("--generator", generator, "swiss_roll or circles")->check(CLI::IsMember({"swiss_roll", "circles"}));
  syn->add_option("--n", n, "Samples");
  syn->add_option("--noise", noise, "Gaussian noise per axis");
  syn->add_option("--r1", r1, "Inner circle radius");
  syn->add_option("--r2", r2, "Outer circle radius");
  syn->add_option("--seed", seed, "Seed");
  syn->add_option("--out", out_path, "Feature CSV")->required();

  for (auto* sub : {fit, cls, bench, syn}) sub->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (fit->parsed()) return detail::run_fit(features, format, config, candidates, out_path, threads, out);
    if (cls->parsed()) return detail::run_classify(model, features, format, out_path, threads, out);
    if (bench->parsed()) return detail::run_bench(model, features, format, repeat, pairs, threads, out);
    return detail::run_synth(generator, n, noise, r1, r2, seed, out_path, out);
  } catch (const Error& e) {
    err << "error: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return 1;
  } catch (const InvariantViolation& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace geoproto::cli
