#include "test_util.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace geoproto;
using geoproto::testing::make_feature_set;
using geoproto::testing::random_matrix;

namespace {

FeatureSet three_classes(Index per, std::uint64_t seed) {
  Matrix x = random_matrix(3 * per, 4, seed);
  std::vector<ClassId> labels;
  for (Index i = 0; i < 3 * per; ++i) {
    labels.push_back(static_cast<ClassId>(1 + i % 3));
    x(i, 0) += 6.0 * static_cast<double>(i % 3);
  }
  return make_feature_set(x, labels);
}

}  // namespace

TEST(LandmarkConfig, Defaults) {
  const LandmarkConfig cfg;
  EXPECT_EQ(cfg.selection, LandmarkSelection::kmeans);
  EXPECT_EQ(cfg.pool, LandmarkPool::per_class);
  EXPECT_EQ(cfg.count, 768);
  EXPECT_EQ(cfg.update_every, 20);
}

TEST(SelectLandmarks, CountEqualToClassSizeTakesEveryRow) {
  const auto fs = three_classes(20, 1);
  for (auto sel : {LandmarkSelection::random, LandmarkSelection::kmeans}) {
    LandmarkConfig cfg;
    cfg.selection = sel;
    cfg.count = 20;
    std::vector<std::string> warnings;
    const auto set = select_landmarks(fs, cfg, 5, &warnings);
    for (ClassId c = 1; c <= 3; ++c) EXPECT_EQ(set.indices[static_cast<std::size_t>(c - 1)], fs.class_rows(c));
    EXPECT_TRUE(warnings.empty());
  }
}

TEST(SelectLandmarks, OversizedCountWarnsAndTakesAll) {
  const auto fs = three_classes(10, 2);
  LandmarkConfig cfg;
  cfg.count = 50;
  std::vector<std::string> warnings;
  const auto set = select_landmarks(fs, cfg, 5, &warnings);
  EXPECT_EQ(warnings.size(), 3u);
  EXPECT_EQ(set.indices[0], fs.class_rows(1));
}

TEST(SelectLandmarks, KMeansSplitsSeparatedPairs) {
  Matrix x(4, 2);
  x << 0, 0, 0.1, 0, 10, 10, 10.1, 10;
  const auto fs = make_feature_set(x, {1, 1, 1, 1});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    LandmarkConfig cfg;
    cfg.count = 2;
    cfg.seed = seed;
    const auto idx = select_landmarks(fs, cfg, 2).indices[0];
    ASSERT_EQ(idx.size(), 2u);
    EXPECT_LT(idx[0], 2);
    EXPECT_GE(idx[1], 2);
  }
}

TEST(SelectLandmarks, MembershipUniquenessAndDeterminism) {
  const auto fs = three_classes(60, 3);
  for (auto sel : {LandmarkSelection::random, LandmarkSelection::kmeans})
    for (auto pool : {LandmarkPool::per_class, LandmarkPool::global}) {
      LandmarkConfig cfg;
      cfg.selection = sel;
      cfg.pool = pool;
      cfg.count = pool == LandmarkPool::per_class ? 15 : 45;
      cfg.seed = 9;
      const auto a = select_landmarks(fs, cfg, 5);
      const auto b = select_landmarks(fs, cfg, 5);
      EXPECT_EQ(a.indices, b.indices);
      for (ClassId c = 1; c <= 3; ++c) {
        const auto& idx = a.indices[static_cast<std::size_t>(c - 1)];
        EXPECT_FALSE(idx.empty());
        EXPECT_EQ(std::set<Index>(idx.begin(), idx.end()).size(), idx.size());
        for (Index i : idx) EXPECT_EQ(fs.labels[static_cast<std::size_t>(i)], c);
        if (pool == LandmarkPool::per_class) {
          EXPECT_EQ(idx.size(), 15u);
        }
      }
    }
}

TEST(SelectLandmarks, CountBelowKPlusOne) {
  const auto fs = three_classes(10, 4);
  LandmarkConfig cfg;
  cfg.count = 4;
  try {
    select_landmarks(fs, cfg, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CountTooSmall);
  }
}

TEST(SelectLandmarks, GlobalPoolThatMissesAClass) {
  Matrix x = random_matrix(41, 2, 5);
  std::vector<ClassId> labels(41, 1);
  labels[40] = 2;
  x.row(40) = x.row(0);  // duplicate: k-means with one cluster cannot reach it
  LandmarkConfig cfg;
  cfg.pool = LandmarkPool::global;
  cfg.selection = LandmarkSelection::kmeans;
  cfg.count = 1;
  try {
    select_landmarks(make_feature_set(x, labels), cfg, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CountTooSmall);
  }
}

TEST(KMeans, WcssNonIncreasing) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto km = kmeans(random_matrix(300, 5, seed), 12, seed, 100);
    ASSERT_FALSE(km.wcss.empty());
    for (std::size_t i = 1; i < km.wcss.size(); ++i) EXPECT_LE(km.wcss[i], km.wcss[i - 1] * (1.0 + 1e-12));
  }
}

TEST(KMeans, DuplicatePointsRepairEmptyClusters) {
  Matrix x = Matrix::Zero(10, 2);
  x.row(9) << 1, 1;
  const auto km = kmeans(x, 4, 0, 10);
  const auto snapped = snap_to_rows(x, km.centroids);
  EXPECT_EQ(snapped.size(), 4u);
  EXPECT_EQ(std::set<Index>(snapped.begin(), snapped.end()).size(), 4u);
}

TEST(ShouldRefresh, Schedule) {
  LandmarkConfig cfg;
  EXPECT_TRUE(should_refresh(20, cfg));
  EXPECT_FALSE(should_refresh(19, cfg));
  EXPECT_TRUE(should_refresh(40, cfg));
  cfg.update_every = 0;
  for (int e = 1; e < 100; ++e) EXPECT_FALSE(should_refresh(e, cfg));
}

TEST(RefreshManifolds, ShapesAndDeterminism) {
  const auto fs = three_classes(50, 6);
  LandmarkConfig lcfg;
  lcfg.count = 32;
  GraphConfig gcfg;
  gcfg.k = 5;
  DiffusionConfig dcfg;
  dcfg.L = 8;
  const auto a = refresh_manifolds(fs, lcfg, gcfg, dcfg, 1);
  const auto b = refresh_manifolds(fs, lcfg, gcfg, dcfg, 3);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(a[c].size(), 32);
    EXPECT_TRUE(a[c].basis.eigenvectors == b[c].basis.eigenvectors);
    EXPECT_TRUE(a[c].landmark_coords == b[c].landmark_coords);
  }
}

TEST(RefreshManifolds, TranslatingOneClassKeepsItsAffinity) {
  auto fs = three_classes(40, 7);
  fs.features = (fs.features * 16.0).array().round().matrix();
  LandmarkConfig lcfg;
  lcfg.count = 20;
  lcfg.selection = LandmarkSelection::random;
  GraphConfig gcfg;
  gcfg.k = 4;
  DiffusionConfig dcfg;
  dcfg.L = 4;
  const auto before = refresh_manifolds(fs, lcfg, gcfg, dcfg);
  for (Index i : fs.class_rows(2)) fs.features.row(i).array() += 512.0;
  const auto after = refresh_manifolds(fs, lcfg, gcfg, dcfg);
  EXPECT_TRUE(Matrix(before[1].graph.affinity) == Matrix(after[1].graph.affinity));
}

TEST(RefreshManifolds, ClassFailureAbortsRefresh) {
  Matrix x = random_matrix(12, 2, 8);
  std::vector<ClassId> labels(12, 1);
  labels[11] = 2;
  LandmarkConfig lcfg;
  lcfg.count = 4;
  GraphConfig gcfg;
  gcfg.k = 3;
  EXPECT_THROW(refresh_manifolds(make_feature_set(x, labels), lcfg, gcfg, DiffusionConfig{}), Error);
}

TEST(ManifoldStore, SnapshotSurvivesPublish) {
  ManifoldStore store;
  EXPECT_EQ(store.snapshot(), nullptr);
  ManifoldSet first(1);
  first[0].k_oos = 1;
  store.publish(first);
  const auto snap = store.snapshot();
  ManifoldSet second(2);
  store.publish(second);
  EXPECT_EQ(snap->size(), 1u);
  EXPECT_EQ(store.snapshot()->size(), 2u);
}
