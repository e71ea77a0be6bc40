#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "oracles/oracles.hpp"
#include "shadowscope/classifier.hpp"
#include "shadowscope/error.hpp"
#include "shadowscope/random.hpp"
#include "shadowscope/roc.hpp"
#include "shadowscope/shadow_features.hpp"

using namespace shadowscope;

namespace {

std::vector<Position> cluster_at(double x, double y, std::size_t n, double spread, Rng& rng) {
  std::vector<Position> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({x + uniform_real(rng, -spread, spread), y + uniform_real(rng, -spread, spread),
                   uniform_real(rng, -spread, spread)});
  }
  return out;
}

// A mix of dense blobs and scattered points, so every label kind appears.
std::vector<Position> random_point_set(Rng& rng, std::size_t n) {
  std::vector<Position> pts;
  const std::size_t blobs = uniform_index(rng, 6);
  for (std::size_t b = 0; b < blobs && pts.size() < n; ++b) {
    const double cx = uniform_real(rng, -2, 2);
    const double cy = uniform_real(rng, -2, 2);
    const auto blob =
        cluster_at(cx, cy, std::min<std::size_t>(n - pts.size(), 5 + uniform_index(rng, 40)),
                   uniform_real(rng, 0.05, 0.4), rng);
    pts.insert(pts.end(), blob.begin(), blob.end());
  }
  while (pts.size() < n) {
    pts.push_back({uniform_real(rng, -2.5, 2.5), uniform_real(rng, -2.5, 2.5),
                   uniform_real(rng, -0.3, 0.3)});
  }
  shuffle(pts, rng);
  return pts;
}

std::vector<oracle::P3> as_oracle(const std::vector<Position>& pts) {
  return {pts.begin(), pts.end()};
}

std::vector<LabeledFeatures> separable_set(Rng& rng, std::size_t n) {
  std::vector<LabeledFeatures> data;
  for (std::size_t i = 0; i < n; ++i) {
    LabeledFeatures s;
    s.label = static_cast<int>(i % 2);
    if (s.label == 1) {
      s.features = {10 + uniform_index(rng, 20), uniform_real(rng, 12, 40)};
    } else if (i % 4 == 0) {
      s.features = {0, 0.0};
    } else {
      s.features = {1 + uniform_index(rng, 3), uniform_real(rng, 6, 9)};
    }
    data.push_back(s);
  }
  return data;
}

}  // namespace

// ---- dbscan ----

TEST(Dbscan, Examples) {
  Rng rng(1);
  const DbscanParams p{0.2, 6};
  EXPECT_TRUE(dbscan({}, p).empty());
  const auto six = cluster_at(1, 1, 6, 0.05, rng);
  EXPECT_EQ(dbscan(six, p), std::vector<int>(6, 0));
  std::vector<Position> isolated;
  for (int i = 0; i < 5; ++i) isolated.push_back({i * 1.0, 0, 0});
  EXPECT_EQ(dbscan(isolated, p), std::vector<int>(5, kNoise));
}

TEST(Dbscan, BoundaryDistanceIsInclusive) {
  std::vector<Position> pair{{0, 0, 0}, {0.5, 0, 0}};
  EXPECT_EQ(dbscan(pair, {0.5, 2}), (std::vector<int>{0, 0}));
  EXPECT_EQ(dbscan(pair, {0.49, 2}), (std::vector<int>{kNoise, kNoise}));
  // min_pts = 1: every point is core.
  EXPECT_EQ(dbscan(pair, {0.1, 1}), (std::vector<int>{0, 1}));
}

TEST(Dbscan, MatchesBruteForceOracle) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pts = random_point_set(rng, 1 + uniform_index(rng, 300));
    const DbscanParams p{uniform_real(rng, 0.05, 0.5), 2 + uniform_index(rng, 7)};
    const auto got = dbscan(pts, p);
    const auto expected = oracle::dbscan(as_oracle(pts), p.epsilon, p.min_pts);
    ASSERT_TRUE(oracle::same_partition(got, expected)) << "trial " << trial;
  }
}

TEST(Dbscan, CanonicalIdsFollowFirstMember) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto labels = dbscan(random_point_set(rng, 200), {0.2, 4});
    int next = 0;
    for (int l : labels) {
      if (l == kNoise) continue;
      EXPECT_LE(l, next);
      if (l == next) ++next;
    }
  }
}

TEST(Dbscan, CorePointsAlwaysClustered) {
  // Border points can be claimed by a neighboring cluster, so cluster sizes
  // are only bounded below by one; every core point must be clustered.
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto pts = random_point_set(rng, 150);
    const DbscanParams p{uniform_real(rng, 0.1, 0.4), 2 + uniform_index(rng, 6)};
    const auto labels = dbscan(pts, p);
    std::map<int, std::size_t> sizes;
    for (int l : labels) {
      if (l != kNoise) ++sizes[l];
    }
    for (const auto& [id, size] : sizes) EXPECT_GE(size, 1u);
    // Every core point is clustered.
    for (std::size_t i = 0; i < pts.size(); ++i) {
      std::size_t count = 0;
      for (const auto& q : pts) {
        const double d = std::hypot(pts[i][0] - q[0], pts[i][1] - q[1], pts[i][2] - q[2]);
        count += d <= p.epsilon ? 1 : 0;
      }
      if (count >= p.min_pts) EXPECT_NE(labels[i], kNoise);
    }
  }
}

TEST(Dbscan, SharedBorderGoesToLowestIndexCore) {
  // b lies within eps of two cores that are not connected to each other.
  const std::vector<Position> pts{{-1, 0, 0},     {1, 0, 0},      {0, 0, 0},
                                  {-1.5, 0.3, 0}, {-1.5, -0.3, 0}, {1.5, 0.3, 0},
                                  {1.5, -0.3, 0}};
  const auto labels = dbscan(pts, {1.0, 4});
  EXPECT_EQ(labels, (std::vector<int>{0, 1, 0, 0, 0, 1, 1}));
  // The second cluster ends up below min_pts.
  EXPECT_EQ(features_from_labels(labels), (ShadowFeatures{2, 3.5}));
}

TEST(ShadowFeatures, Examples) {
  EXPECT_EQ(features_from_labels(std::vector<int>{}), (ShadowFeatures{0, 0.0}));
  Rng rng(6);
  auto pts = cluster_at(0, 0, 6, 0.04, rng);
  const auto far = cluster_at(5, 5, 6, 0.04, rng);
  pts.insert(pts.end(), far.begin(), far.end());
  const auto f = features_from_labels(dbscan(pts, {0.2, 6}));
  EXPECT_EQ(f.n_clusters, 2u);
  EXPECT_EQ(f.mean_cluster_density, 6.0);
  EXPECT_EQ(features_from_labels(std::vector<int>{kNoise, kNoise}), (ShadowFeatures{0, 0.0}));
  EXPECT_EQ(features_from_labels(std::vector<int>{0, 0, kNoise, 1}), (ShadowFeatures{2, 1.5}));
}

TEST(ShadowFeatures, ExtractReadsSourcePositions) {
  Rng rng(7);
  PointCloud cloud;
  for (int i = 0; i < 50; ++i) cloud.push_back({100.0 + i, 0, 0, 0});  // never referenced
  std::vector<ShadowPointLocal> locals;
  for (const auto& p : cluster_at(10, 0, 8, 0.05, rng)) {
    locals.push_back({0.5, 0.5, cloud.size()});
    cloud.push_back({p[0], p[1], p[2], 0});
  }
  const auto f = extract_features(locals, cloud, {0.2, 6});
  EXPECT_EQ(f, (ShadowFeatures{1, 8.0}));
  EXPECT_EQ(extract_features({}, cloud, {0.2, 6}), (ShadowFeatures{0, 0.0}));
}

TEST(ShadowFeatures, InvariantUnderPermutationTranslationRotation) {
  Rng rng(8);
  const DbscanParams p{0.2, 6};
  for (int trial = 0; trial < 60; ++trial) {
    auto pts = random_point_set(rng, 120);
    const auto base = features_from_labels(dbscan(pts, p));
    auto shuffled = pts;
    shuffle(shuffled, rng);
    EXPECT_EQ(features_from_labels(dbscan(shuffled, p)), base);
    // Quarter turn plus a shift; pairwise distances move by rounding only.
    const double dx = uniform_real(rng, -20, 20);
    auto moved = pts;
    for (auto& q : moved) {
      const double x = q[0];
      q[0] = -q[1] + dx;
      q[1] = x - dx;
    }
    EXPECT_EQ(features_from_labels(dbscan(moved, p)), base);
  }
}

// ---- classifier ----

TEST(ClassifierSpec, ParseAndFormat) {
  EXPECT_EQ(parse_classifier_spec("svm-poly"), (ClassifierSpec{ClassifierKind::kSvmPoly, 2}));
  EXPECT_EQ(parse_classifier_spec("svm-poly:3"), (ClassifierSpec{ClassifierKind::kSvmPoly, 3}));
  EXPECT_EQ(parse_classifier_spec("random-forest").kind, ClassifierKind::kRandomForest);
  EXPECT_THROW(parse_classifier_spec("svm-poly:0"), ConfigError);
  EXPECT_THROW(parse_classifier_spec("knn"), ConfigError);
  for (const auto& spec : all_classifier_specs()) {
    EXPECT_EQ(parse_classifier_spec(to_string(spec)), spec);
  }
  EXPECT_EQ(all_classifier_specs().size(), 6u);
}

TEST(Classifier, EveryKindSeparatesCleanData) {
  Rng rng(11);
  const auto train_set = separable_set(rng, 300);
  const auto test_set = separable_set(rng, 200);
  for (const auto& spec : all_classifier_specs()) {
    const auto model = train(train_set, spec, Hyperparams{}, 3);
    const auto m = evaluate(model, test_set);
    EXPECT_GE(m.accuracy, 0.98) << to_string(spec);
    EXPECT_GE(m.auc_or_throw(), 0.99) << to_string(spec);
    EXPECT_EQ(predict(model, {0, 0.0}).label, 0) << to_string(spec);
    EXPECT_EQ(predict(model, {25, 30.0}).label, 1) << to_string(spec);
  }
}

TEST(Classifier, PersistLoadPredictsIdenticallyOnGrid) {
  Rng rng(12);
  const auto data = separable_set(rng, 200);
  for (const auto& spec : all_classifier_specs()) {
    const auto model = train(data, spec, Hyperparams{}, 9);
    const auto text = model_to_json(model);
    const auto loaded = model_from_json(text);
    EXPECT_EQ(model_to_json(loaded), text);
    for (int i = 0; i < 100; ++i) {
      for (int j = 0; j < 100; ++j) {
        const FeatureVector x{0.5 * i, 0.4 * j};
        ASSERT_EQ(margin(model, x), margin(loaded, x)) << to_string(spec) << " " << i << " " << j;
      }
    }
  }
}

TEST(Classifier, TrainingIsDeterministic) {
  Rng rng(13);
  const auto data = separable_set(rng, 150);
  const auto spec = parse_classifier_spec("random-forest");
  EXPECT_EQ(model_to_json(train(data, spec, Hyperparams{}, 5)),
            model_to_json(train(data, spec, Hyperparams{}, 5)));
}

TEST(Classifier, RejectsBadTrainingData) {
  std::vector<LabeledFeatures> one_class(10, LabeledFeatures{{1, 6.0}, 1});
  EXPECT_THROW(train(one_class, {}, Hyperparams{}, 1), InvalidInputError);
  EXPECT_THROW(train({}, {}, Hyperparams{}, 1), InvalidInputError);
  auto bad = one_class;
  bad[0].label = 0;
  bad[1].features.mean_cluster_density = std::nan("");
  EXPECT_THROW(train(bad, {}, Hyperparams{}, 1), InvalidInputError);
  EXPECT_THROW(model_from_json("{\"kind\": 1}"), MalformedInputError);
}

TEST(Classifier, SingleClassMetricsHaveNoAuc) {
  Rng rng(14);
  const auto model = train(separable_set(rng, 100), {}, Hyperparams{}, 1);
  std::vector<LabeledFeatures> negatives(5, LabeledFeatures{{0, 0.0}, 0});
  const auto m = evaluate(model, negatives);
  EXPECT_FALSE(m.auc.has_value());
  EXPECT_THROW(m.auc_or_throw(), UndefinedMetricError);
  EXPECT_EQ(m.tpr, 0.0);
}

TEST(Classifier, GridSearchPicksFromGrid) {
  Rng rng(15);
  Hyperparams h;
  h.c_grid = {0.1, 10};
  h.gamma_grid = {0.1, 1};
  h.cv_folds = 3;
  const auto model = train(separable_set(rng, 120), parse_classifier_spec("svm-rbf"), h, 2);
  EXPECT_TRUE(model.c == 0.1 || model.c == 10);
  EXPECT_TRUE(model.gamma == 0.1 || model.gamma == 1);
}

// ---- roc ----

TEST(Roc, AucMatchesMannWhitney) {
  Rng rng(16);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 80);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(uniform_index(rng, 2));
      // Coarse scores force ties.
      s[i] = std::round(uniform_real(rng, 0, 5) + y[i]) / 5.0;
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_NEAR(roc_auc(s, y), oracle::mann_whitney_auc(s, y), 1e-12);
  }
}

TEST(Roc, CurveShape) {
  const std::vector<double> s{0.9, 0.8, 0.8, 0.1};
  const std::vector<int> y{1, 0, 1, 0};
  const auto curve = roc_curve(s, y);
  ASSERT_GE(curve.size(), 3u);
  EXPECT_EQ(curve.front().fpr, 0.0);
  EXPECT_EQ(curve.front().tpr, 0.0);
  EXPECT_EQ(curve.back().fpr, 1.0);
  EXPECT_EQ(curve.back().tpr, 1.0);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    EXPECT_GE(curve[i].fpr, curve[i - 1].fpr);
    EXPECT_GE(curve[i].tpr, curve[i - 1].tpr);
  }
  EXPECT_DOUBLE_EQ(roc_auc(s, y), 0.875);
  const std::vector<int> single{1, 1, 1, 1};
  EXPECT_THROW(roc_auc(s, single), UndefinedMetricError);
}
