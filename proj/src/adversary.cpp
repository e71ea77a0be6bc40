#include "shadowscope/adversary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <tuple>

#include "shadowscope/error.hpp"
#include "shadowscope/random.hpp"

namespace shadowscope {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double to_float32(double v) { return static_cast<double>(static_cast<float>(v)); }

auto point_key(const Point3& p) { return std::make_tuple(p.x, p.y, p.z, p.reflectance); }

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(),
            [](const Vec2& a, const Vec2& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

// Sunflower disk: m distinct points within `radius` of the origin.
std::vector<Vec2> disk_offsets(std::size_t m, double radius) {
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Vec2> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double r = radius * std::sqrt((static_cast<double>(i) + 0.5) / static_cast<double>(m));
    const double a = golden * static_cast<double>(i);
    out.push_back({r * std::cos(a), r * std::sin(a)});
  }
  return out;
}

struct Slot {
  double x, y, z;
};

// Cluster centers in decreasing scoring weight, `pitch` apart.
std::vector<Slot> cluster_slots(std::size_t count, double pitch, double radius,
                                const std::optional<ShadowRegion>& region) {
  std::vector<Slot> out;
  if (!region) {
    const SensorGeometry g;
    for (std::size_t k = 0; k < count; ++k) {
      out.push_back({5.0 + pitch * static_cast<double>(k), 0.0, g.ground_z + 0.05});
    }
    return out;
  }
  const auto& r = *region;
  const double center = r.angle_center();
  const Vec2 along{std::cos(center), std::sin(center)};
  const Vec2 lateral{-along.y, along.x};
  const double z = r.geometry.ground_z + 0.05;
  struct Candidate {
    double key;
    std::size_t row;
    long lane;
    Slot slot;
  };
  std::vector<Candidate> candidates;
  const auto rows = static_cast<std::size_t>((r.d_end - r.d_start) / pitch) + 1;
  for (std::size_t row = 0; row < rows; ++row) {
    const double s = r.d_start + radius + 0.01 + pitch * static_cast<double>(row);
    if (s + radius > r.d_end) break;
    const long lanes = static_cast<long>(s * std::tan(std::min(r.half_width(), 1.5)) / pitch) + 1;
    for (long lane = -lanes; lane <= lanes; ++lane) {
      const double v = pitch * static_cast<double>(lane);
      const Point3 p{s * along.x + v * lateral.x, s * along.y + v * lateral.y, z, 0.0};
      // The whole disk must fit: keep its rim inside the wedge.
      const double rel = std::abs(std::atan2(v, s));
      if (rel + std::asin(std::min(1.0, radius / std::hypot(s, v))) > r.half_width()) continue;
      if (std::hypot(s, v) + radius > r.d_end) continue;
      const auto local = localize(r, p, 0);
      if (!local) continue;
      candidates.push_back({local->t + local->u, row, lane, {p.x, p.y, p.z}});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    return a.key < b.key;
  });
  if (candidates.size() < count) {
    throw DegenerateGeometryError("shadow region too small to host " + std::to_string(count) +
                                  " separated clusters");
  }
  for (std::size_t k = 0; k < count; ++k) out.push_back(candidates[k].slot);
  return out;
}

}  // namespace

void validate(const SpooferBudget& budget) {
  if (budget.max_points < 1) throw ConfigError("spoofing budget must allow at least one point");
  if (!(budget.max_wedge_deg > 0.0 && budget.max_wedge_deg <= 360.0)) {
    throw ConfigError("spoofing wedge must lie in (0, 360] degrees");
  }
}

PointCloud prune_trace(const PointCloud& trace, const SpooferBudget& budget,
                       double target_center_angle, std::uint64_t seed) {
  validate(budget);
  const double half = budget.max_wedge_deg * kDeg / 2.0;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (std::abs(normalize_angle(trace[i].azimuth() - target_center_angle)) <= half) {
      kept.push_back(i);
    }
  }
  if (kept.size() > budget.max_points) {
    Rng rng(mix_seed(seed, 0x7072756e65ULL));
    shuffle(kept, rng);
    kept.resize(budget.max_points);
    std::sort(kept.begin(), kept.end());
  }
  PointCloud out;
  out.reserve(kept.size());
  for (std::size_t i : kept) out.push_back(trace[i]);
  return out;
}

BoundingBox3D tight_box(const PointCloud& points, ObjectClass label, double min_extent) {
  if (points.empty()) throw InvalidInputError("cannot bound an empty point set");
  std::vector<Vec2> xy;
  xy.reserve(points.size());
  double z_min = std::numeric_limits<double>::infinity();
  double z_max = -z_min;
  for (const auto& p : points) {
    xy.push_back({p.x, p.y});
    z_min = std::min(z_min, p.z);
    z_max = std::max(z_max, p.z);
  }
  const auto hull = convex_hull(xy);

  // The optimal rectangle has a side collinear with a hull edge.
  std::vector<double> angles;
  if (hull.size() >= 3) {
    for (std::size_t i = 0; i < hull.size(); ++i) {
      const Vec2& a = hull[i];
      const Vec2& b = hull[(i + 1) % hull.size()];
      angles.push_back(std::atan2(b.y - a.y, b.x - a.x));
    }
  } else if (hull.size() == 2) {
    angles.push_back(std::atan2(hull[1].y - hull[0].y, hull[1].x - hull[0].x));
  } else {
    angles.push_back(0.0);
  }

  double best_area = std::numeric_limits<double>::infinity();
  BoundingBox3D best;
  for (double theta : angles) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    double u0 = std::numeric_limits<double>::infinity(), u1 = -u0;
    double v0 = u0, v1 = -u0;
    for (const auto& p : hull) {
      const double u = c * p.x + s * p.y;
      const double v = -s * p.x + c * p.y;
      u0 = std::min(u0, u);
      u1 = std::max(u1, u);
      v0 = std::min(v0, v);
      v1 = std::max(v1, v);
    }
    const double area = (u1 - u0) * (v1 - v0);
    if (area < best_area - 1e-12) {
      best_area = area;
      const double uc = (u0 + u1) / 2.0;
      const double vc = (v0 + v1) / 2.0;
      best.center_x = c * uc - s * vc;
      best.center_y = s * uc + c * vc;
      best.length = std::max(u1 - u0, min_extent);
      best.width = std::max(v1 - v0, min_extent);
      best.yaw = normalize_angle(theta);
    }
  }
  best.z_bottom = z_min;
  best.z_top = std::max(z_max, z_min + min_extent);
  best.label = label;
  // Rounding in the frame change can leave a hull point a hair outside.
  best.length += 1e-6;
  best.width += 1e-6;
  return best;
}

InjectionResult inject_ghost(const Scene& scene, const PointCloud& trace,
                             const GhostPlacement& placement, const SpooferBudget& budget,
                             const ScannerSpec& scanner, ObjectClass label, std::uint64_t seed) {
  validate(budget);
  InjectionResult out;
  out.scene = scene;
  if (trace.empty()) return out;
  if (!std::isfinite(placement.range) || !std::isfinite(placement.angle) ||
      placement.range <= 0.0 || placement.range >= scene.geometry.max_range) {
    throw InvalidInputError("ghost placement lies outside the sensor range");
  }

  double cx = 0.0;
  double cy = 0.0;
  for (const auto& p : trace) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(trace.size());
  cy /= static_cast<double>(trace.size());
  const double source_range = std::hypot(cx, cy);
  if (source_range == 0.0) throw InvalidInputError("trace centroid sits on the sensor");
  const double turn = placement.angle - std::atan2(cy, cx);
  const double ct = std::cos(turn);
  const double st = std::sin(turn);
  const double shift = placement.range - source_range;
  PointCloud moved;
  moved.reserve(trace.size());
  for (const auto& p : trace) {
    Point3 q = p;
    q.x = to_float32(ct * p.x - st * p.y + shift * std::cos(placement.angle));
    q.y = to_float32(st * p.x + ct * p.y + shift * std::sin(placement.angle));
    q.z = to_float32(p.z);
    moved.push_back(q);
  }
  const PointCloud pruned = prune_trace(moved, budget, placement.angle, seed);
  if (pruned.empty()) return out;

  // One spoofed return per ray: the nearest wins.
  std::map<RayId, std::size_t> by_ray;
  for (std::size_t i = 0; i < pruned.size(); ++i) {
    const RayId ray = nearest_ray(scanner, pruned[i]);
    auto [it, inserted] = by_ray.emplace(ray, i);
    if (!inserted && pruned[i].radial() < pruned[it->second].radial()) it->second = i;
  }
  std::vector<std::size_t> spoof_index;
  for (const auto& [ray, i] : by_ray) spoof_index.push_back(i);
  std::sort(spoof_index.begin(), spoof_index.end());
  PointCloud spoofed;
  for (std::size_t i : spoof_index) spoofed.push_back(pruned[i]);

  std::map<std::uint32_t, double> column_front;
  std::set<decltype(point_key(Point3{}))> spoofed_keys;
  for (const auto& p : spoofed) {
    const RayId ray = nearest_ray(scanner, p);
    auto [it, inserted] = column_front.emplace(ray.column, p.radial());
    if (!inserted) it->second = std::min(it->second, p.radial());
    spoofed_keys.insert(point_key(p));
  }

  PointCloud cloud;
  cloud.reserve(scene.cloud.size() + spoofed.size());
  std::set<decltype(point_key(Point3{}))> present;
  for (const auto& p : scene.cloud) {
    const auto key = point_key(p);
    if (spoofed_keys.count(key)) {
      cloud.push_back(p);
      present.insert(key);
      continue;
    }
    const RayId ray = nearest_ray(scanner, p);
    const auto col = column_front.find(ray.column);
    if ((col != column_front.end() && p.radial() > col->second) || by_ray.count(ray)) {
      ++out.removed;
      continue;
    }
    cloud.push_back(p);
  }
  for (const auto& p : spoofed) {
    if (present.insert(point_key(p)).second) {
      cloud.push_back(p);
      ++out.injected;
    }
  }
  out.scene.cloud = std::move(cloud);

  const BoundingBox3D ghost = tight_box(spoofed, label);
  out.ghost = ghost;
  if (std::find(out.scene.boxes.begin(), out.scene.boxes.end(), ghost) == out.scene.boxes.end()) {
    out.scene.boxes.push_back(ghost);
  }
  return out;
}

ShadowDecision decision_of(const ClassifierModel& model) {
  return [model](double rho, std::size_t n_clusters) {
    return margin(model, {rho, static_cast<double>(n_clusters)}) >= 0.0 ? 1 : 0;
  };
}

std::optional<InvalidationPlan> optimal_invalidation(std::size_t n0,
                                                     const ShadowDecision& decision,
                                                     const SpooferBudget& budget,
                                                     const DbscanParams& dbscan,
                                                     const std::optional<ShadowRegion>& region) {
  validate(budget);
  validate(dbscan);
  // F need not be monotone in n_p, so a scan (not bisection) is the exact
  // minimizer.
  for (std::size_t n_p = 0; n_p <= budget.max_points; ++n_p) {
    const std::size_t total = n0 + n_p;
    const std::size_t max_clusters = total / dbscan.min_pts;
    for (std::size_t n_c = 1; n_c <= max_clusters; ++n_c) {
      const double rho = static_cast<double>(total) / static_cast<double>(n_c);
      if (decision(rho, n_c) != 1) continue;

      InvalidationPlan plan;
      plan.n0 = n0;
      plan.n_p = n_p;
      plan.n_clusters = n_c;
      plan.rho = rho;
      const double radius = 0.4 * dbscan.epsilon;
      const auto slots = cluster_slots(n_c, 2.5 * dbscan.epsilon, radius, region);
      std::size_t placed = 0;
      for (std::size_t k = 0; k < n_c; ++k) {
        const std::size_t size = total / n_c + (k < total % n_c ? 1 : 0);
        for (const auto& d : disk_offsets(size, radius)) {
          const Point3 p{slots[k].x + d.x, slots[k].y + d.y, slots[k].z, 0.0};
          (placed < n0 ? plan.original_points : plan.injected_points).push_back(p);
          ++placed;
        }
      }
      return plan;
    }
  }
  return std::nullopt;
}

std::optional<InvalidationPlan> optimal_invalidation(std::size_t n0, const ClassifierModel& model,
                                                     const SpooferBudget& budget,
                                                     const DbscanParams& dbscan,
                                                     const std::optional<ShadowRegion>& region) {
  return optimal_invalidation(n0, decision_of(model), budget, dbscan, region);
}

std::vector<MocPoint> moc_points(std::size_t n0, std::size_t budget, std::size_t n_max) {
  std::vector<MocPoint> out;
  out.reserve(n_max);
  for (std::size_t n = 1; n <= n_max; ++n) {
    out.push_back({n, static_cast<double>(n0 + budget) / static_cast<double>(n)});
  }
  return out;
}

}  // namespace shadowscope
