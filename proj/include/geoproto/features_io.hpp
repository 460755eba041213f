#pragma once

#include "geoproto/error.hpp"
#include "geoproto/kv.hpp"
#include "geoproto/types.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace geoproto {

/// Labeled N x D feature matrix. Labels are class ids in 1..class_count.
struct FeatureSet {
  Matrix features;
  std::vector<ClassId> labels;
  int class_count = 0;

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }

  /// Row indices of class `c`, in file order.
  IndexList class_rows(ClassId c) const {
    IndexList rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) rows.push_back(static_cast<Index>(i));
    return rows;
  }

  Matrix rows(const IndexList& idx) const {
    Matrix out(static_cast<Index>(idx.size()), dim());
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Index>(r)) = features.row(idx[r]);
    return out;
  }

  Matrix class_features(ClassId c) const { return rows(class_rows(c)); }
};

enum class FeatureFormat { csv, raw_f32 };

struct LoadOptions {
  /// Queries may be unlabeled (label 0) and may not cover every class.
  bool require_all_classes = true;
};

namespace detail {

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(kv::trim(line.substr(start)));
      break;
    }
    out.push_back(kv::trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

inline ClassId parse_label(std::string_view token, const std::string& where, bool allow_zero) {
  auto label = kv::parse_integer<int>(token);
  if (!label || *label < (allow_zero ? 0 : 1))
    fail(ErrorKind::MalformedFile, where + ": bad label '" + std::string(token) + "'");
  return *label;
}

inline void finish_feature_set(FeatureSet& fs, const LoadOptions& opts, const std::string& origin) {
  if (fs.size() < 1) fail(ErrorKind::MalformedFile, origin + ": no samples");
  if (fs.dim() < 1) fail(ErrorKind::MalformedFile, origin + ": no feature columns");
  fs.class_count = fs.labels.empty() ? 0 : *std::max_element(fs.labels.begin(), fs.labels.end());
  if (!opts.require_all_classes) return;
  std::vector<int> counts(static_cast<std::size_t>(fs.class_count) + 1, 0);
  for (ClassId l : fs.labels) ++counts[static_cast<std::size_t>(l)];
  for (int c = 1; c <= fs.class_count; ++c)
    if (counts[static_cast<std::size_t>(c)] == 0)
      fail(ErrorKind::EmptyClass, origin + ": class " + std::to_string(c) + " has no samples");
}

inline double checked_value(double v, std::size_t row, std::size_t col, const std::string& origin) {
  if (!std::isfinite(v))
    fail(ErrorKind::NonFiniteValue, origin + ": non-finite value at row " + std::to_string(row) +
                                        ", column " + std::to_string(col));
  return v;
}

}  // namespace detail

/// Parses `label,f0,...,f{D-1}` CSV text. Row order is preserved.
inline FeatureSet parse_feature_csv(std::string_view text, const std::string& origin,
                                    const LoadOptions& opts = {}) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = kv::trim(text.substr(pos, end - pos));
    if (!line.empty()) lines.push_back(line);
    pos = end + 1;
  }
  if (lines.empty()) fail(ErrorKind::MalformedFile, origin + ": empty file");

  const auto header = detail::split_commas(lines.front());
  if (header.size() < 2 || header[0] != "label")
    fail(ErrorKind::MalformedFile, origin + ": header must be 'label,f0,f1,...'");
  for (std::size_t c = 1; c < header.size(); ++c)
    if (header[c] != "f" + std::to_string(c - 1))
      fail(ErrorKind::MalformedFile, origin + ": bad header column '" + std::string(header[c]) + "'");

  const auto dim = static_cast<Index>(header.size() - 1);
  FeatureSet fs;
  fs.features.resize(static_cast<Index>(lines.size() - 1), dim);
  fs.labels.reserve(lines.size() - 1);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto row = r - 1;
    const auto cells = detail::split_commas(lines[r]);
    const std::string where = origin + ": row " + std::to_string(row);
    if (static_cast<Index>(cells.size()) != dim + 1)
      fail(ErrorKind::MalformedFile, where + " has " + std::to_string(cells.size()) +
                                         " fields, expected " + std::to_string(dim + 1));
    fs.labels.push_back(detail::parse_label(cells[0], where, !opts.require_all_classes));
    for (Index c = 0; c < dim; ++c) {
      auto v = kv::parse_double(cells[static_cast<std::size_t>(c) + 1]);
      if (!v) fail(ErrorKind::MalformedFile, where + ": bad number '" +
                                                 std::string(cells[static_cast<std::size_t>(c) + 1]) + "'");
      fs.features(static_cast<Index>(row), c) =
          detail::checked_value(*v, row, static_cast<std::size_t>(c), origin);
    }
  }
  detail::finish_feature_set(fs, opts, origin);
  return fs;
}

/// Raw float32 features: `<name>.f32` little-endian row-major, described by
/// `<name>.meta` with keys n, d, labels_path (relative to the meta file).
/// Either file of the pair may be passed.
inline FeatureSet load_raw_f32(const std::filesystem::path& path, const LoadOptions& opts = {}) {
  auto meta_path = path;
  auto data_path = path;
  meta_path.replace_extension(".meta");
  data_path.replace_extension(".f32");
  const std::string origin = meta_path.string();

  long long n = -1, d = -1;
  std::string labels_path;
  for (const auto& e : kv::parse(detail::read_text_file(meta_path), origin)) {
    if (e.key == "n") {
      auto v = kv::parse_integer<long long>(e.value);
      if (!v || *v < 1) fail(ErrorKind::MalformedFile, origin + ": bad n");
      n = *v;
    } else if (e.key == "d") {
      auto v = kv::parse_integer<long long>(e.value);
      if (!v || *v < 1) fail(ErrorKind::MalformedFile, origin + ": bad d");
      d = *v;
    } else if (e.key == "labels_path") {
      labels_path = e.value;
    } else {
      fail(ErrorKind::MalformedFile, origin + ": unknown key '" + e.key + "'");
    }
  }
  if (n < 1 || d < 1 || labels_path.empty())
    fail(ErrorKind::MalformedFile, origin + ": meta needs n, d and labels_path");

  std::ifstream in(data_path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '" + data_path.string() + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != static_cast<std::size_t>(n * d * 4))
    fail(ErrorKind::MalformedFile, data_path.string() + ": expected " + std::to_string(n * d * 4) +
                                       " bytes, found " + std::to_string(bytes.size()));

  FeatureSet fs;
  fs.features.resize(n, d);
  for (long long i = 0; i < n; ++i) {
    for (long long j = 0; j < d; ++j) {
      const auto* p = &bytes[static_cast<std::size_t>((i * d + j) * 4)];
      const std::uint32_t u = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
                              (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
      const double v = static_cast<double>(std::bit_cast<float>(u));
      fs.features(i, j) = detail::checked_value(v, static_cast<std::size_t>(i),
                                                static_cast<std::size_t>(j), data_path.string());
    }
  }

  auto labels_file = std::filesystem::path(labels_path);
  if (labels_file.is_relative()) labels_file = meta_path.parent_path() / labels_file;
  std::istringstream ls(detail::read_text_file(labels_file));
  std::string token;
  while (ls >> token)
    fs.labels.push_back(detail::parse_label(token, labels_file.string(), !opts.require_all_classes));
  if (static_cast<long long>(fs.labels.size()) != n)
    fail(ErrorKind::MalformedFile, labels_file.string() + ": expected " + std::to_string(n) +
                                       " labels, found " + std::to_string(fs.labels.size()));
  detail::finish_feature_set(fs, opts, origin);
  return fs;
}

inline FeatureSet load_feature_set(const std::filesystem::path& path, FeatureFormat format,
                                   const LoadOptions& opts = {}) {
  if (format == FeatureFormat::raw_f32) return load_raw_f32(path, opts);
  return parse_feature_csv(detail::read_text_file(path), path.string(), opts);
}

inline void write_feature_csv(std::ostream& out, const FeatureSet& fs) {
  out << "label";
  for (Index c = 0; c < fs.dim(); ++c) out << ",f" << c;
  out << '\n';
  for (Index r = 0; r < fs.size(); ++r) {
    out << fs.labels[static_cast<std::size_t>(r)];
    for (Index c = 0; c < fs.dim(); ++c) out << ',' << kv::format_double(fs.features(r, c));
    out << '\n';
  }
}

inline void save_feature_csv(const std::filesystem::path& path, const FeatureSet& fs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
  write_feature_csv(out, fs);
}

}  // namespace geoproto
