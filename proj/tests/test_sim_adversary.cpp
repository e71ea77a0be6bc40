#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "oracles/oracles.hpp"
#include "shadowscope/adversary.hpp"
#include "shadowscope/dataset.hpp"
#include "shadowscope/error.hpp"
#include "shadowscope/lidar_sim.hpp"
#include "shadowscope/random.hpp"
#include "shadowscope/shadow_region.hpp"

using namespace shadowscope;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

BoundingBox3D car_at(double x, double y, const SensorGeometry& g) {
  BoundingBox3D b;
  b.label = ObjectClass::kCar;
  b.center_x = x;
  b.center_y = y;
  b.length = 4.0;
  b.width = 1.8;
  b.yaw = 0.3;
  b.z_bottom = g.ground_z;
  b.z_top = g.ground_z + 1.5;
  return b;
}

oracle::OBox to_oracle(const BoundingBox3D& b) {
  return {b.center_x, b.center_y, b.z_bottom, b.z_top, b.length, b.width, b.yaw};
}

std::multiset<std::tuple<double, double, double, double>> as_set(const PointCloud& c) {
  std::multiset<std::tuple<double, double, double, double>> s;
  for (const auto& p : c) s.insert({p.x, p.y, p.z, p.reflectance});
  return s;
}

ShadowDecision threshold_rule(std::size_t min_clusters, double min_rho) {
  return [=](double rho, std::size_t n) { return n >= min_clusters && rho >= min_rho ? 1 : 0; };
}

}  // namespace

// ---- lidar_sim ----

TEST(Scanner, JsonRoundTripAndValidation) {
  ScannerSpec s;
  s.n_lasers = 32;
  s.azimuth_step_deg = 0.2;
  s.geometry = SensorGeometry::with_height(1.9, 70);
  const auto back = scanner_from_json(scanner_to_json(s));
  EXPECT_EQ(scanner_to_json(back), scanner_to_json(s));
  EXPECT_EQ(back.n_lasers, 32u);
  EXPECT_EQ(back.geometry, s.geometry);
  EXPECT_THROW(scanner_from_json("{\"lasers\": 3}"), ConfigError);
  s.n_lasers = 0;
  EXPECT_THROW(validate(s), ConfigError);
  s.n_lasers = 4;
  s.vertical_min_deg = 3;
  EXPECT_THROW(validate(s), ConfigError);
}

TEST(Simulator, EmptyWorldIsPureGround) {
  const ScannerSpec spec;
  const auto scan = simulate_scan(spec, {}, 1);
  ASSERT_FALSE(scan.scene.cloud.empty());
  for (const auto& p : scan.scene.cloud) {
    EXPECT_NEAR(p.z, spec.geometry.ground_z, 1e-5);
    EXPECT_LE(p.radial(), spec.geometry.max_range + 0.02);
  }
  EXPECT_TRUE(scan.scene.boxes.empty());
}

TEST(Simulator, FirstHitMatchesRayOracle) {
  const ScannerSpec spec;
  const auto& g = spec.geometry;
  const auto box = car_at(6.0, 0.5, g);
  const auto scan = simulate_scan(spec, {{box, 0.1}}, 3);
  ASSERT_EQ(scan.scene.boxes.size(), 1u);
  std::map<RayId, Point3> by_ray;
  for (std::size_t i = 0; i < scan.rays.size(); ++i) by_ray.emplace(scan.rays[i], scan.scene.cloud[i]);
  ASSERT_EQ(by_ray.size(), scan.rays.size());

  const auto ob = to_oracle(box);
  std::size_t box_hits = 0;
  for (std::uint32_t c = 0; c < spec.column_count(); ++c) {
    const double az = spec.column_azimuth(c);
    if (std::abs(normalize_angle(az - std::atan2(0.5, 6.0))) > 25 * kDeg) continue;
    for (std::uint32_t k = 0; k < spec.n_lasers; ++k) {
      const double el = spec.laser_elevation(k);
      const oracle::P3 d{std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
      std::optional<double> expected = oracle::march_hit(ob, d, 12.0);
      if (expected) ++box_hits;
      if (!expected && el < 0) expected = g.ground_z / d[2];
      if (expected && std::hypot(*expected * d[0], *expected * d[1]) > g.max_range) expected.reset();
      const auto it = by_ray.find({k, c});
      if (!expected) {
        EXPECT_EQ(it, by_ray.end()) << k << " " << c;
        continue;
      }
      ASSERT_NE(it, by_ray.end()) << k << " " << c;
      const auto& p = it->second;
      EXPECT_NEAR(std::hypot(p.x, p.y, p.z), *expected, spec.jitter + 1e-3) << k << " " << c;
    }
  }
  EXPECT_GT(box_hits, 100u);
}

TEST(Simulator, NaturalShadowIsEmpty) {
  const ScannerSpec spec;
  const auto& g = spec.geometry;
  auto box = car_at(6.0, 0.0, g);
  box.z_top = g.ground_z + 1.68;
  ASSERT_TRUE(shadow_reaches_max_range(box, g));
  const auto scene = synthesize_scene(spec, {{box, 0.1}}, 4);
  for (const auto& mode : {HeightMode::ray_height(), HeightMode::uniform(0.2)}) {
    EXPECT_TRUE(collect_shadow_points(propose_region(box, g, mode), scene.cloud).empty());
  }
}

TEST(Simulator, DeterministicAcrossRunsAndJobs) {
  const ScannerSpec spec;
  const auto layout = random_layout(spec, LayoutParams{}, 77);
  const auto a = simulate_scan(spec, layout, 5, 1);
  const auto b = simulate_scan(spec, layout, 5, 1);
  const auto c = simulate_scan(spec, layout, 5, 3);
  EXPECT_EQ(a.scene.cloud, b.scene.cloud);
  EXPECT_EQ(a.scene.cloud, c.scene.cloud);
  EXPECT_EQ(a.rays, c.rays);
  EXPECT_NE(simulate_scan(spec, layout, 6, 1).scene.cloud, a.scene.cloud);
}

TEST(Simulator, OnePointPerRayAndOrdered) {
  const ScannerSpec spec;
  const auto scan = simulate_scan(spec, random_layout(spec, LayoutParams{}, 8), 9);
  std::set<RayId> seen(scan.rays.begin(), scan.rays.end());
  EXPECT_EQ(seen.size(), scan.rays.size());
  EXPECT_TRUE(std::is_sorted(scan.rays.begin(), scan.rays.end(), [](RayId x, RayId y) {
    return std::tie(x.column, x.laser) < std::tie(y.column, y.laser);
  }));
  for (std::size_t i = 0; i < scan.rays.size(); i += 97) {
    EXPECT_EQ(nearest_ray(spec, scan.scene.cloud[i]), scan.rays[i]);
  }
}

TEST(Simulator, RejectsOverlapAndOutOfRange) {
  const ScannerSpec spec;
  const auto& g = spec.geometry;
  EXPECT_THROW(synthesize_scene(spec, {{car_at(10, 0, g), 0.1}, {car_at(11, 0.5, g), 0.1}}, 1),
               InvalidInputError);
  EXPECT_THROW(synthesize_scene(spec, {{car_at(85, 0, g), 0.1}}, 1), InvalidInputError);
}

TEST(Simulator, RandomLayoutsKeepInvariants) {
  const ScannerSpec spec;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto layout = random_layout(spec, LayoutParams{}, seed);
    ASSERT_GE(layout.size(), 1u);
    for (std::size_t i = 0; i < layout.size(); ++i) {
      EXPECT_TRUE(shadow_reaches_max_range(layout[i].box, spec.geometry));
      for (std::size_t j = i + 1; j < layout.size(); ++j) {
        EXPECT_FALSE(boxes_overlap(layout[i].box, layout[j].box));
      }
    }
  }
}

TEST(Density, EnvProfileNonIncreasingWhereRingsAreDense) {
  // Past ~26 m consecutive ground rings lie more than a cell apart.
  const ScannerSpec spec;
  const auto scene = synthesize_scene(spec, {}, 2);
  std::vector<double> edges;
  for (double e = 4; e <= 26; e += 2) edges.push_back(e);
  const auto bins = density_profile(scene, DensityMode::kEnv2x2, edges);
  ASSERT_EQ(bins.size(), edges.size() - 1);
  for (std::size_t i = 1; i < bins.size(); ++i) {
    EXPECT_LE(bins[i].mean_count, bins[i - 1].mean_count) << bins[i].lo;
  }
}

TEST(Density, EmptySceneAndModes) {
  Scene empty;
  const std::vector<double> edges{0, 10, 20};
  EXPECT_TRUE(density_profile(empty, DensityMode::kEnv2x2, edges).empty());
  EXPECT_TRUE(density_profile(empty, DensityMode::kBbox, edges).empty());
  EXPECT_EQ(parse_density_mode("bbox"), DensityMode::kBbox);
  EXPECT_EQ(parse_density_mode(to_string(DensityMode::kEnv2x2)), DensityMode::kEnv2x2);
  const ScannerSpec spec;
  const auto scene = synthesize_scene(spec, {{car_at(12, 0, spec.geometry), 0.1}}, 1);
  EXPECT_THROW(density_profile(scene, DensityMode::kEnv2x2, edges), InvalidInputError);
  const auto bins = density_profile(scene, DensityMode::kBbox, edges);
  ASSERT_EQ(bins.size(), 1u);
  EXPECT_EQ(bins[0].lo, 10);
  EXPECT_GT(bins[0].mean_count, 50);
}

// ---- prune_trace / inject_ghost ----

TEST(PruneTrace, BudgetAndWedge) {
  const ScannerSpec spec;
  const auto trace = make_trace(spec, ObjectClass::kCar, 4, 10, 12);
  ASSERT_GT(trace.size(), 300u);
  double cx = 0, cy = 0;
  for (const auto& p : trace) {
    cx += p.x;
    cy += p.y;
  }
  const double center = std::atan2(cy, cx);
  SpooferBudget wide{200, 60.0};
  const auto pruned = prune_trace(trace, wide, center, 1);
  EXPECT_EQ(pruned.size(), 200u);
  EXPECT_EQ(prune_trace(trace, wide, center, 1), pruned);
  // Output keeps input order and draws only from the input.
  const auto all = as_set(trace);
  for (const auto& p : pruned) EXPECT_TRUE(all.count({p.x, p.y, p.z, p.reflectance}));

  const PointCloud small(trace.begin(), trace.begin() + 150);
  EXPECT_EQ(prune_trace(small, wide, center, 1), small);
  EXPECT_TRUE(prune_trace(trace, SpooferBudget{200, 10.0}, center + std::numbers::pi, 1).empty());
  for (const auto& p : prune_trace(trace, SpooferBudget{1000, 2.0}, center, 1)) {
    EXPECT_LE(std::abs(normalize_angle(p.azimuth() - center)), 1.0 * kDeg + 1e-12);
  }
}

class Injection : public ::testing::Test {
 protected:
  void SetUp() override {
    scene = synthesize_scene(spec, random_layout(spec, LayoutParams{}, 21), 22);
    trace = make_trace(spec, ObjectClass::kPedestrian, 5, 10, 15);
    // Place the ghost away from every genuine wedge.
    angle = 0.0;
    for (double a = -60; a <= 60; a += 1) {
      bool clear = true;
      for (const auto& b : scene.boxes) {
        const auto r = propose_region(b, spec.geometry, HeightMode::bev());
        if (std::abs(normalize_angle(a * kDeg - r.angle_center())) < r.half_width() + 8 * kDeg) {
          clear = false;
        }
      }
      if (clear) {
        angle = a * kDeg;
        break;
      }
    }
  }

  ScannerSpec spec;
  Scene scene;
  PointCloud trace;
  double angle = 0.0;
};

TEST_F(Injection, EmptyTraceLeavesSceneUnchanged) {
  const auto r = inject_ghost(scene, {}, {6.0, angle}, {}, spec, ObjectClass::kCar, 1);
  EXPECT_EQ(r.scene.cloud, scene.cloud);
  EXPECT_EQ(r.scene.boxes, scene.boxes);
  EXPECT_FALSE(r.ghost.has_value());
  EXPECT_EQ(r.injected, 0u);
}

TEST_F(Injection, OutOfRangePlacementRejected) {
  EXPECT_THROW(inject_ghost(scene, trace, {90.0, 0.0}, {}, spec, ObjectClass::kCar, 1),
               InvalidInputError);
}

TEST_F(Injection, StrongestReturnRemovalMatchesScan) {
  const auto r = inject_ghost(scene, trace, {6.0, angle}, {}, spec, ObjectClass::kPedestrian, 1);
  ASSERT_TRUE(r.ghost.has_value());
  EXPECT_GT(r.injected, 0u);
  EXPECT_LE(r.injected, 200u);
  EXPECT_EQ(r.scene.boxes.size(), scene.boxes.size() + 1);
  EXPECT_EQ(r.scene.cloud.size(), scene.cloud.size() + r.injected - r.removed);

  const auto original = as_set(scene.cloud);
  PointCloud spoofed;
  for (const auto& p : r.scene.cloud) {
    if (!original.count({p.x, p.y, p.z, p.reflectance})) spoofed.push_back(p);
  }
  ASSERT_EQ(spoofed.size(), r.injected);
  std::map<std::uint32_t, double> front;
  for (const auto& p : spoofed) {
    const auto col = nearest_ray(spec, p).column;
    front[col] = front.count(col) ? std::min(front[col], p.radial()) : p.radial();
  }
  // Oracle scan: no surviving original point sits behind a spoofed one.
  for (const auto& p : r.scene.cloud) {
    if (!original.count({p.x, p.y, p.z, p.reflectance})) continue;
    const auto it = front.find(nearest_ray(spec, p).column);
    if (it != front.end()) EXPECT_LE(p.radial(), it->second);
  }
  // And every removed point was behind one (or on a spoofed ray).
  const auto kept = as_set(r.scene.cloud);
  std::set<RayId> spoofed_rays;
  for (const auto& p : spoofed) spoofed_rays.insert(nearest_ray(spec, p));
  for (const auto& p : scene.cloud) {
    if (kept.count({p.x, p.y, p.z, p.reflectance})) continue;
    const auto ray = nearest_ray(spec, p);
    const auto it = front.find(ray.column);
    EXPECT_TRUE((it != front.end() && p.radial() > it->second) || spoofed_rays.count(ray));
  }
  // One point per ray.
  std::set<RayId> rays;
  for (const auto& p : r.scene.cloud) EXPECT_TRUE(rays.insert(nearest_ray(spec, p)).second);
}

TEST_F(Injection, RepeatedInjectionIsIdempotent) {
  const GhostPlacement at{7.0, angle};
  const auto once = inject_ghost(scene, trace, at, {}, spec, ObjectClass::kPedestrian, 2);
  const auto twice = inject_ghost(once.scene, trace, at, {}, spec, ObjectClass::kPedestrian, 2);
  EXPECT_EQ(as_set(twice.scene.cloud), as_set(once.scene.cloud));
  EXPECT_EQ(twice.scene.boxes, once.scene.boxes);
  EXPECT_EQ(twice.injected, 0u);
  EXPECT_EQ(twice.removed, 0u);
}

TEST(TightBox, CoversPoints) {
  Rng rng(3);
  PointCloud pts;
  for (int i = 0; i < 300; ++i) {
    const double a = uniform_real(rng, -2, 2);
    const double b = uniform_real(rng, -0.5, 0.5);
    pts.push_back({10 + 0.8 * a - 0.6 * b, 3 + 0.6 * a + 0.8 * b, uniform_real(rng, -1.7, 0), 0});
  }
  const auto box = tight_box(pts, ObjectClass::kCar);
  for (const auto& p : pts) EXPECT_TRUE(box_contains(box, p, 1e-9));
  EXPECT_NEAR(box.length * box.width, 4.0, 0.3);
}

// ---- optimal_invalidation / moc ----

TEST(OptimalInvalidation, StubExamples) {
  const DbscanParams db{0.2, 6};
  const auto f = threshold_rule(3, 10);
  const auto a = optimal_invalidation(0, f, {}, db);
  ASSERT_TRUE(a.has_value());
  EXPECT_EQ(a->n_p, 30u);
  EXPECT_EQ(a->n_clusters, 3u);
  EXPECT_EQ(a->rho, 10.0);
  const auto b = optimal_invalidation(25, f, {}, db);
  ASSERT_TRUE(b.has_value());
  EXPECT_EQ(b->n_p, 5u);
  EXPECT_FALSE(optimal_invalidation(0, [](double, std::size_t) { return 0; }, {}, db).has_value());
  EXPECT_FALSE(optimal_invalidation(0, threshold_rule(3, 10), {29, 10.0}, db).has_value());
}

TEST(OptimalInvalidation, MatchesExhaustiveSearchAndReextracts) {
  Rng rng(31);
  const DbscanParams db{0.2, 6};
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n0 = uniform_index(rng, 40);
    const SpooferBudget budget{20 + uniform_index(rng, 181), 10.0};
    ShadowDecision f;
    switch (trial % 3) {
      case 0:
        f = threshold_rule(1 + uniform_index(rng, 8), uniform_real(rng, 0, 40));
        break;
      case 1: {
        const double w = uniform_real(rng, 0.2, 3);
        const double c = uniform_real(rng, 5, 80);
        f = [=](double rho, std::size_t n) { return rho + w * static_cast<double>(n) >= c; };
        break;
      }
      default: {
        // Non-monotone: a sparse pseudo-random table.
        const std::uint64_t salt = rng();
        f = [=](double rho, std::size_t n) {
          const auto key = mix_seed(salt, n * 1000 + static_cast<std::uint64_t>(rho * 7));
          return key % 23 == 0 ? 1 : 0;
        };
      }
    }
    const auto got = optimal_invalidation(n0, f, budget, db);
    const auto expected = oracle::min_invalidation(n0, budget.max_points, db.min_pts, f);
    ASSERT_EQ(got.has_value(), expected.has_value()) << "trial " << trial;
    if (!got) continue;
    EXPECT_EQ(got->n_p, expected->first) << "trial " << trial;
    EXPECT_EQ(got->n_clusters, expected->second) << "trial " << trial;
    ASSERT_EQ(got->original_points.size(), n0);
    ASSERT_EQ(got->injected_points.size(), got->n_p);
    std::vector<Position> pos;
    for (const auto* part : {&got->original_points, &got->injected_points}) {
      for (const auto& p : *part) pos.push_back({p.x, p.y, p.z});
    }
    const auto features = features_from_labels(dbscan(pos, db));
    EXPECT_EQ(features.n_clusters, got->n_clusters) << "trial " << trial;
    EXPECT_DOUBLE_EQ(features.mean_cluster_density, got->rho) << "trial " << trial;
  }
}

TEST(OptimalInvalidation, PointsLandInsideTheRegion) {
  const SensorGeometry g;
  const auto region = propose_region(car_at(12, 1, g), g, HeightMode::uniform(0.2));
  const DbscanParams db{0.2, 6};
  const auto plan = optimal_invalidation(3, threshold_rule(4, 9), {}, db, region);
  ASSERT_TRUE(plan.has_value());
  PointCloud all = plan->original_points;
  all.insert(all.end(), plan->injected_points.begin(), plan->injected_points.end());
  for (const auto& p : all) EXPECT_TRUE(localize(region, p).has_value());
  std::vector<Position> pos;
  for (const auto& p : all) pos.push_back({p.x, p.y, p.z});
  EXPECT_EQ(features_from_labels(dbscan(pos, db)),
            (ShadowFeatures{plan->n_clusters, plan->rho}));
}

TEST(OptimalInvalidation, MonotoneInBudget) {
  Rng rng(41);
  const DbscanParams db{0.2, 6};
  for (int trial = 0; trial < 30; ++trial) {
    const auto f = threshold_rule(1 + uniform_index(rng, 5), uniform_real(rng, 6, 30));
    const std::size_t n0 = uniform_index(rng, 20);
    std::optional<std::size_t> previous;
    for (std::size_t b = 10; b <= 200; b += 10) {
      const auto plan = optimal_invalidation(n0, f, {b, 10.0}, db);
      if (previous) {
        ASSERT_TRUE(plan.has_value());
        EXPECT_LE(plan->n_p, *previous);
      }
      if (plan) previous = plan->n_p;
    }
  }
}

TEST(Moc, Examples) {
  const auto m = moc_points(0, 200, 40);
  ASSERT_EQ(m.size(), 40u);
  EXPECT_EQ(m[9].n_clusters, 10u);
  EXPECT_EQ(m[9].rho_max, 20.0);
  EXPECT_EQ(moc_points(0, 20, 1)[0].rho_max, 20.0);
  EXPECT_EQ(moc_points(5, 20, 5)[4].rho_max, 5.0);
  EXPECT_TRUE(moc_points(0, 20, 0).empty());
}
