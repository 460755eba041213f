#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace geoproto;
using geoproto::testing::make_feature_set;
using geoproto::testing::random_matrix;
using geoproto::testing::scratch_dir;

namespace {

ModelBundle random_bundle(std::uint64_t seed, int classes, Index per, Normalization norm) {
  std::mt19937_64 rng(seed);
  Matrix x = random_matrix(classes * per, 2 + static_cast<Index>(rng() % 4), rng());
  std::vector<ClassId> labels;
  for (Index i = 0; i < x.rows(); ++i) {
    labels.push_back(static_cast<ClassId>(1 + i % classes));
    x(i, 0) += 3.0 * static_cast<double>(i % classes);
  }
  const auto fs = make_feature_set(x, labels);
  FitConfig cfg;
  cfg.graph.k = 2 + static_cast<int>(rng() % 5);
  cfg.diffusion.L = 3 + static_cast<int>(rng() % 6);
  cfg.diffusion.normalization = norm;
  cfg.landmarks.count = static_cast<int>(per) - static_cast<int>(rng() % 3);
  cfg.prototypes.m = 1 + static_cast<int>(rng() % 3);
  cfg.seed = seed;
  const auto r = train_prototypes(fs, default_candidates(fs), to_train_config(cfg, 1));
  ModelBundle b;
  b.manifolds = r.manifolds;
  b.bank = r.bank;
  b.config = cfg;
  return b;
}

void expect_bitwise_equal(const ModelBundle& a, const ModelBundle& b) {
  ASSERT_EQ(a.manifolds.size(), b.manifolds.size());
  EXPECT_EQ(a.config, b.config);
  EXPECT_EQ(a.format_version, b.format_version);
  for (std::size_t c = 0; c < a.manifolds.size(); ++c) {
    const auto& x = a.manifolds[c];
    const auto& y = b.manifolds[c];
    EXPECT_TRUE(x.basis.eigenvalues == y.basis.eigenvalues);
    EXPECT_TRUE(x.basis.eigenvectors == y.basis.eigenvectors);
    EXPECT_TRUE(x.basis.degrees == y.basis.degrees);
    EXPECT_EQ(x.basis.L, y.basis.L);
    EXPECT_EQ(x.basis.requested_L, y.basis.requested_L);
    EXPECT_TRUE(x.graph.node_features == y.graph.node_features);
    EXPECT_TRUE(x.graph.scales == y.graph.scales);
    EXPECT_TRUE(x.graph.degrees == y.graph.degrees);
    EXPECT_TRUE(Matrix(x.graph.affinity) == Matrix(y.graph.affinity));
    EXPECT_TRUE(Matrix(x.graph.transition) == Matrix(y.graph.transition));
    EXPECT_EQ(x.graph.edges, y.graph.edges);
    EXPECT_EQ(x.graph.sigma_floor, y.graph.sigma_floor);
    EXPECT_TRUE(x.norm.mean == y.norm.mean);
    EXPECT_TRUE(x.norm.transform == y.norm.transform);
    EXPECT_EQ(x.norm.mode, y.norm.mode);
    EXPECT_TRUE(x.landmark_coords == y.landmark_coords);
    EXPECT_EQ(x.landmark_indices, y.landmark_indices);
    EXPECT_EQ(x.k_oos, y.k_oos);
    EXPECT_EQ(x.cfg.t, y.cfg.t);
    EXPECT_EQ(x.cfg.L, y.cfg.L);
  }
  ASSERT_EQ(a.bank.classes.size(), b.bank.classes.size());
  EXPECT_EQ(a.bank.m, b.bank.m);
  EXPECT_EQ(a.bank.epsilon_sim, b.bank.epsilon_sim);
  for (std::size_t c = 0; c < a.bank.classes.size(); ++c) {
    EXPECT_TRUE(a.bank.classes[c].vectors == b.bank.classes[c].vectors);
    EXPECT_TRUE(a.bank.classes[c].anchored == b.bank.classes[c].anchored);
    EXPECT_TRUE(a.bank.classes[c].anchored_coords == b.bank.classes[c].anchored_coords);
    EXPECT_TRUE(a.bank.classes[c].head == b.bank.classes[c].head);
    EXPECT_EQ(a.bank.classes[c].anchor_index, b.bank.classes[c].anchor_index);
  }
}

ErrorKind decode_kind(const std::string& bytes) {
  try {
    decode_model(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode succeeded";
  return ErrorKind::Io;
}

}  // namespace

TEST(ModelIo, TwoClassRoundTripIsBitExact) {
  const auto b = random_bundle(1, 2, 30, Normalization::zca);
  const auto dir = scratch_dir("model_io");
  save_model(b, dir / "m.gpro");
  const auto back = load_model(dir / "m.gpro");
  expect_bitwise_equal(b, back);
  EXPECT_EQ(encode_model(back), encode_model(b));
}

TEST(ModelIo, RandomBundlesRoundTrip) {
  for (std::uint64_t seed = 2; seed < 12; ++seed) {
    const auto b = random_bundle(seed, 1 + static_cast<int>(seed % 3), 12 + static_cast<Index>(seed), 
                                 static_cast<Normalization>(seed % 3));
    const auto back = decode_model(encode_model(b));
    expect_bitwise_equal(b, back);
    // The decoded model classifies identically.
    const Vector z = b.manifolds[0].landmarks().row(0).transpose();
    EXPECT_TRUE(classify(z, b.manifolds, b.bank).scores == classify(z, back.manifolds, back.bank).scores);
  }
}

TEST(ModelIo, SpecialValuesSurvive) {
  auto b = random_bundle(13, 2, 20, Normalization::none);
  b.bank.classes[0].vectors(0, 0) = -0.0;
  b.bank.classes[0].vectors(0, 1) = 5e-324;
  b.bank.classes[1].head(0) = std::numeric_limits<double>::max();
  const auto back = decode_model(encode_model(b));
  EXPECT_TRUE(std::signbit(back.bank.classes[0].vectors(0, 0)));
  EXPECT_EQ(back.bank.classes[0].vectors(0, 1), 5e-324);
  EXPECT_EQ(back.bank.classes[1].head(0), std::numeric_limits<double>::max());
}

TEST(ModelIo, LayoutHeader) {
  const auto bytes = encode_model(random_bundle(14, 2, 15, Normalization::zca));
  EXPECT_EQ(bytes.substr(0, 4), "GPRO");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_NE(bytes.find("config.diffusion.t = 4"), std::string::npos);
}

TEST(ModelIo, WrongMagicOrVersion) {
  auto bytes = encode_model(random_bundle(15, 2, 15, Normalization::zca));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(decode_kind(bad), ErrorKind::VersionMismatch);
  bad = bytes;
  bad[4] = 2;
  EXPECT_EQ(decode_kind(bad), ErrorKind::VersionMismatch);
  EXPECT_EQ(decode_kind("GP"), ErrorKind::VersionMismatch);
}

TEST(ModelIo, FlippedPayloadByteFailsChecksum) {
  const auto bytes = encode_model(random_bundle(16, 2, 15, Normalization::zca));
  for (std::size_t at : {std::size_t{20}, bytes.size() / 2, bytes.size() - 5, bytes.size() - 1}) {
    auto bad = bytes;
    bad[at] = static_cast<char>(bad[at] ^ 0x10);
    EXPECT_EQ(decode_kind(bad), ErrorKind::ChecksumFailure) << at;
  }
}

TEST(ModelIo, TruncatedFileFails) {
  const auto bytes = encode_model(random_bundle(17, 2, 15, Normalization::zca));
  EXPECT_THROW(decode_model(bytes.substr(0, bytes.size() - 9)), Error);
}

TEST(ModelIo, FixedSeedGivesIdenticalBytes) {
  EXPECT_EQ(encode_model(random_bundle(18, 3, 20, Normalization::zca)),
            encode_model(random_bundle(18, 3, 20, Normalization::zca)));
}

TEST(ModelIo, MissingFile) {
  try {
    load_model("/nonexistent/model.gpro");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
  }
}
