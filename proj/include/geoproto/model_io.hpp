#pragma once

// Model container:
//
//   "GPRO" | u32 version | u32 header_bytes | header text | f64 arrays | u32 crc32
//
// Integers are little-endian. The header is key-value text holding the fit
// config, per-class scalars and one `array = name rows cols` line per array,
// in payload order. Arrays are row-major f64. The CRC covers every byte before it.

#include "geoproto/config.hpp"
#include "geoproto/error.hpp"
#include "geoproto/kv.hpp"
#include "geoproto/landmarks.hpp"
#include "geoproto/nystrom.hpp"
#include "geoproto/proto.hpp"

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace geoproto {

inline constexpr std::uint32_t kModelFormatVersion = 1;
inline constexpr char kModelMagic[4] = {'G', 'P', 'R', 'O'};

struct ModelBundle {
  /// manifolds[c - 1]; empty for euclidean-matching banks.
  ManifoldSet manifolds;
  PrototypeBank bank;
  FitConfig config;
  std::uint32_t format_version = kModelFormatVersion;

  int class_count() const { return bank.class_count(); }
  Index dim() const {
    return bank.classes.empty() ? 0 : bank.classes.front().anchored.cols();
  }
};

namespace detail {

inline std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  const auto* p = reinterpret_cast<const Bytef*>(bytes.data());
  std::size_t left = bytes.size();
  while (left > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

inline void put_f64(std::string& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline double get_f64(std::string_view in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return std::bit_cast<double>(v);
}

class ArrayWriter {
 public:
  void add(const std::string& name, const Matrix& m) {
    header_ << "array = " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c) put_f64(payload_, m(r, c));
  }
  void add(const std::string& name, const Vector& v) { add(name, Matrix(v)); }
  void add(const std::string& name, const IndexList& idx) {
    Matrix m(static_cast<Index>(idx.size()), 1);
    for (std::size_t i = 0; i < idx.size(); ++i) m(static_cast<Index>(i), 0) = static_cast<double>(idx[i]);
    add(name, m);
  }

  std::string header() const { return header_.str(); }
  const std::string& payload() const { return payload_; }

 private:
  std::ostringstream header_;
  std::string payload_;
};

inline std::string class_prefix(std::size_t c) { return "class." + std::to_string(c + 1) + "."; }

}  // namespace detail

/// Serializes a bundle to its on-disk bytes.
inline std::string encode_model(const ModelBundle& b) {
  using detail::class_prefix;
  const auto classes = b.bank.classes.size();
  if (!b.manifolds.empty() && b.manifolds.size() != classes)
    fail(ErrorKind::InvalidArgument, "bundle has manifolds for a different set of classes than its prototypes");

  std::ostringstream h;
  h << "format_version = " << b.format_version << '\n'
    << "classes = " << classes << '\n'
    << "dim = " << b.dim() << '\n'
    << "manifolds = " << b.manifolds.size() << '\n';
  std::istringstream cfg(serialize(b.config));
  for (std::string line; std::getline(cfg, line);) h << "config." << line << '\n';
  h << "bank.m = " << b.bank.m << '\n'
    << "bank.epsilon_sim = " << kv::format_double(b.bank.epsilon_sim) << '\n'
    << "bank.metric = " << to_string(b.bank.metric) << '\n'
    << "bank.mode = " << to_string(b.bank.mode) << '\n';

  detail::ArrayWriter arrays;
  for (std::size_t c = 0; c < b.manifolds.size(); ++c) {
    const auto& m = b.manifolds[c];
    const auto p = class_prefix(c);
    h << p << "k = " << m.graph.k << '\n'
      << p << "sigma_floor = " << kv::format_double(m.graph.sigma_floor) << '\n'
      << p << "bridges_added = " << m.graph.bridges_added << '\n'
      << p << "t = " << m.cfg.t << '\n'
      << p << "L = " << m.basis.L << '\n'
      << p << "requested_L = " << m.basis.requested_L << '\n'
      << p << "normalization = " << to_string(m.cfg.normalization) << '\n'
      << p << "zca_epsilon = " << kv::format_double(m.cfg.zca_epsilon) << '\n'
      << p << "k_oos = " << m.k_oos << '\n';

    Matrix edges(static_cast<Index>(m.graph.edges.size()), 2);
    Vector weights(static_cast<Index>(m.graph.edges.size()));
    for (std::size_t e = 0; e < m.graph.edges.size(); ++e) {
      const auto [i, j] = m.graph.edges[e];
      edges(static_cast<Index>(e), 0) = static_cast<double>(i);
      edges(static_cast<Index>(e), 1) = static_cast<double>(j);
      weights(static_cast<Index>(e)) = m.graph.affinity.coeff(i, j);
    }
    arrays.add(p + "landmark_indices", m.landmark_indices);
    arrays.add(p + "landmarks", m.graph.node_features);
    arrays.add(p + "scales", m.graph.scales);
    arrays.add(p + "edges", edges);
    arrays.add(p + "edge_weights", weights);
    arrays.add(p + "eigenvalues", m.basis.eigenvalues);
    arrays.add(p + "eigenvectors", m.basis.eigenvectors);
    arrays.add(p + "norm_mean", m.norm.mean);
    arrays.add(p + "norm_transform", m.norm.transform);
    arrays.add(p + "landmark_coords", m.landmark_coords);
  }
  for (std::size_t c = 0; c < classes; ++c) {
    const auto& p = b.bank.classes[c];
    const auto pre = "proto." + std::to_string(c + 1) + ".";
    arrays.add(pre + "vectors", p.vectors);
    arrays.add(pre + "anchored", p.anchored);
    arrays.add(pre + "anchor_index", p.anchor_index);
    arrays.add(pre + "anchored_coords", p.anchored_coords);
    arrays.add(pre + "head", p.head);
  }
  const std::string header = h.str() + arrays.header();

  std::string out(kModelMagic, 4);
  detail::put_u32(out, b.format_version);
  detail::put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  out += arrays.payload();
  detail::put_u32(out, detail::crc32_of(out));
  return out;
}

namespace detail {

class HeaderFields {
 public:
  HeaderFields(const std::vector<kv::Entry>& entries, std::string origin) : origin_(std::move(origin)) {
    for (const auto& e : entries)
      if (e.key != "array") values_[e.key] = e.value;
  }

  const std::string& text(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) fail(ErrorKind::MalformedFile, origin_ + ": header lacks '" + key + "'");
    return it->second;
  }

  template <typename T>
  T integer(const std::string& key) const {
    auto v = kv::parse_integer<T>(text(key));
    if (!v) fail(ErrorKind::MalformedFile, origin_ + ": header field '" + key + "' is not an integer");
    return *v;
  }

  double real(const std::string& key) const {
    auto v = kv::parse_double(text(key));
    if (!v) fail(ErrorKind::MalformedFile, origin_ + ": header field '" + key + "' is not a number");
    return *v;
  }

 private:
  std::map<std::string, std::string> values_;
  std::string origin_;
};

inline Index to_index(double v, const std::string& origin) {
  if (!(v >= -1.0) || v != std::floor(v) || v > 9.0e15)
    fail(ErrorKind::MalformedFile, origin + ": stored index is not an integer");
  return static_cast<Index>(v);
}

inline IndexList to_index_list(const Matrix& m, const std::string& origin) {
  IndexList out(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.size(); ++i) out[static_cast<std::size_t>(i)] = to_index(m(i), origin);
  return out;
}

}  // namespace detail

inline ModelBundle decode_model(std::string_view bytes, const std::string& origin = "<model>") {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kModelMagic, 4) != 0)
    fail(ErrorKind::VersionMismatch, origin + ": not a model file (bad magic)");
  const auto version = detail::get_u32(bytes, 4);
  if (version != kModelFormatVersion)
    fail(ErrorKind::VersionMismatch, origin + ": unsupported model version " + std::to_string(version));
  if (bytes.size() < 16) fail(ErrorKind::MalformedFile, origin + ": truncated model file");
  const auto stored_crc = detail::get_u32(bytes, bytes.size() - 4);
  if (detail::crc32_of(bytes.substr(0, bytes.size() - 4)) != stored_crc)
    fail(ErrorKind::ChecksumFailure, origin + ": checksum mismatch");

  const auto header_len = detail::get_u32(bytes, 8);
  if (12 + static_cast<std::size_t>(header_len) > bytes.size() - 4)
    fail(ErrorKind::MalformedFile, origin + ": header length exceeds file size");
  const auto entries = kv::parse(bytes.substr(12, header_len), origin);
  const detail::HeaderFields fields(entries, origin);

  std::map<std::string, Matrix> arrays;
  std::size_t at = 12 + header_len;
  const std::size_t payload_end = bytes.size() - 4;
  for (const auto& e : entries) {
    if (e.key != "array") continue;
    std::istringstream decl(e.value);
    std::string name;
    Index rows = -1, cols = -1;
    if (!(decl >> name >> rows >> cols) || rows < 0 || cols < 0)
      fail(ErrorKind::MalformedFile, origin + ": bad array declaration '" + e.value + "'");
    const auto count = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    if (count > (payload_end - at) / 8) fail(ErrorKind::MalformedFile, origin + ": array '" + name + "' overruns payload");
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c, at += 8) m(r, c) = detail::get_f64(bytes, at);
    arrays[name] = std::move(m);
  }
  if (at != payload_end) fail(ErrorKind::MalformedFile, origin + ": trailing bytes after arrays");

  auto array = [&](const std::string& name) -> Matrix& {
    auto it = arrays.find(name);
    if (it == arrays.end()) fail(ErrorKind::MalformedFile, origin + ": missing array '" + name + "'");
    return it->second;
  };
  auto vec = [&](const std::string& name) -> Vector {
    const Matrix& m = array(name);
    return Eigen::Map<const Vector>(m.data(), m.size());
  };

  ModelBundle b;
  b.format_version = version;
  {
    std::string cfg;
    for (const auto& e : entries)
      if (e.key.rfind("config.", 0) == 0) cfg += e.key.substr(7) + " = " + e.value + "\n";
    b.config = parse_fit_config(cfg, origin);
  }
  const auto classes = fields.integer<std::size_t>("classes");
  const auto manifold_count = fields.integer<std::size_t>("manifolds");
  if (manifold_count != 0 && manifold_count != classes)
    fail(ErrorKind::MalformedFile, origin + ": manifold count does not match class count");

  b.bank.m = fields.integer<int>("bank.m");
  b.bank.epsilon_sim = fields.real("bank.epsilon_sim");
  const auto& metric = fields.text("bank.metric");
  if (metric == "diffusion") b.bank.metric = MatchMetric::diffusion;
  else if (metric == "euclidean") b.bank.metric = MatchMetric::euclidean;
  else fail(ErrorKind::MalformedFile, origin + ": unknown metric '" + metric + "'");
  b.bank.mode = fields.text("bank.mode") == "paper" ? NystromMode::paper : NystromMode::row;

  b.manifolds.resize(manifold_count);
  for (std::size_t c = 0; c < manifold_count; ++c) {
    const auto p = detail::class_prefix(c);
    auto& m = b.manifolds[c];
    m.graph.node_features = array(p + "landmarks");
    m.graph.k = fields.integer<int>(p + "k");
    m.graph.sigma_floor = fields.real(p + "sigma_floor");
    m.graph.bridges_added = fields.integer<int>(p + "bridges_added");
    m.graph.scales = vec(p + "scales");
    const Matrix& edges = array(p + "edges");
    const Vector weights = vec(p + "edge_weights");
    if (edges.cols() != 2 || weights.size() != edges.rows())
      fail(ErrorKind::MalformedFile, origin + ": inconsistent edge arrays for class " + std::to_string(c + 1));
    const Index n = m.graph.node_features.rows();
    for (Index e = 0; e < edges.rows(); ++e) {
      const Index i = detail::to_index(edges(e, 0), origin), j = detail::to_index(edges(e, 1), origin);
      if (i < 0 || j <= i || j >= n) fail(ErrorKind::MalformedFile, origin + ": edge index out of range");
      m.graph.edges.emplace_back(i, j);
    }
    assemble_operators(m.graph, std::vector<double>(weights.data(), weights.data() + weights.size()));

    m.basis.eigenvalues = vec(p + "eigenvalues");
    m.basis.eigenvectors = array(p + "eigenvectors");
    m.basis.L = fields.integer<int>(p + "L");
    m.basis.requested_L = fields.integer<int>(p + "requested_L");
    m.basis.degrees = m.graph.degrees;
    if (m.basis.eigenvalues.size() != m.basis.L + 1 || m.basis.eigenvectors.rows() != n ||
        m.basis.eigenvectors.cols() != m.basis.L + 1)
      fail(ErrorKind::MalformedFile, origin + ": inconsistent spectral arrays for class " + std::to_string(c + 1));

    m.cfg = parse_fit_config("t = " + fields.text(p + "t") + "\nL = " + fields.text(p + "L") +
                                 "\nnormalization = " + fields.text(p + "normalization") +
                                 "\nzca_epsilon = " + fields.text(p + "zca_epsilon") + "\n",
                             origin)
                .diffusion;
    m.norm.mode = m.cfg.normalization;
    m.norm.mean = vec(p + "norm_mean");
    m.norm.transform = array(p + "norm_transform");
    m.landmark_coords = array(p + "landmark_coords");
    m.k_oos = fields.integer<int>(p + "k_oos");
    m.landmark_indices = detail::to_index_list(array(p + "landmark_indices"), origin);
  }

  b.bank.classes.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    const auto pre = "proto." + std::to_string(c + 1) + ".";
    auto& p = b.bank.classes[c];
    p.vectors = array(pre + "vectors");
    p.anchored = array(pre + "anchored");
    p.anchor_index = detail::to_index_list(array(pre + "anchor_index"), origin);
    p.anchored_coords = array(pre + "anchored_coords");
    p.head = vec(pre + "head");
  }
  return b;
}

inline void save_model(const ModelBundle& bundle, const std::filesystem::path& path) {
  const auto bytes = encode_model(bundle);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "write to " + path.string() + " failed");
}

inline ModelBundle load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_model(bytes, path.string());
}

}  // namespace geoproto
