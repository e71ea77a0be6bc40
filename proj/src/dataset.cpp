#include "shadowscope/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "shadowscope/error.hpp"
#include "shadowscope/parallel.hpp"
#include "shadowscope/random.hpp"

namespace shadowscope {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Angular wedge of a box as (center, half width).
std::pair<double, double> wedge_of(const BoundingBox3D& box) {
  const double reference = std::atan2(box.center_y, box.center_x);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& c : ground_corners(box)) {
    const double rel = normalize_angle(std::atan2(c.y, c.x) - reference);
    lo = std::min(lo, rel);
    hi = std::max(hi, rel);
  }
  return {normalize_angle(reference + (lo + hi) / 2.0), (hi - lo) / 2.0};
}

}  // namespace

void validate(const DatasetParams& params) {
  validate(params.scanner);
  validate(params.budget);
  validate(params.layout);
  if (!(params.attacked_fraction >= 0.0 && params.attacked_fraction <= 1.0)) {
    throw ConfigError("attacked_fraction must lie in [0, 1]");
  }
  if (!(params.ghost_range_min > 0.0 && params.ghost_range_min <= params.ghost_range_max &&
        params.ghost_range_max < params.scanner.geometry.max_range)) {
    throw ConfigError("ghost range band must lie inside the sensor range");
  }
  if (!(params.trace_range_min > 0.0 && params.trace_range_min <= params.trace_range_max &&
        params.trace_range_max < params.scanner.geometry.max_range)) {
    throw ConfigError("trace range band must lie inside the sensor range");
  }
  if (!(params.ghost_half_fov_deg > 0.0 && params.ghost_half_fov_deg <= 90.0)) {
    throw ConfigError("ghost_half_fov_deg must lie in (0, 90]");
  }
}

PointCloud make_trace(const ScannerSpec& scanner, ObjectClass cls, std::uint64_t seed,
                      double range_min, double range_max) {
  Rng rng(mix_seed(seed, 0x7472616365ULL));
  const ClassShape shape = default_shape(cls);
  const auto& g = scanner.geometry;
  BoundingBox3D box;
  box.label = cls;
  box.length = uniform_real(rng, shape.length_min, shape.length_max);
  box.width = uniform_real(rng, shape.width_min, shape.width_max);
  box.z_bottom = g.ground_z;
  box.z_top = g.ground_z + uniform_real(rng, shape.top_min, shape.top_max);
  box.yaw = normalize_angle(uniform_real(rng, -std::numbers::pi, std::numbers::pi));
  box.center_x = uniform_real(rng, range_min, range_max);
  box.center_y = 0.0;
  // Only the columns around the obstacle matter.
  ScannerSpec narrow = scanner;
  narrow.azimuth_min_deg = -45.0;
  narrow.azimuth_max_deg = 45.0;
  const Scene scene = synthesize_scene(narrow, {{box, 0.1}}, mix_seed(seed, 1));
  return extract_trace(scene, box, 0.02);
}

LabeledScene generate_scene(const DatasetParams& params, std::uint64_t seed,
                            const std::string& id) {
  const auto layout = random_layout(params.scanner, params.layout, seed);
  LabeledScene out;
  out.scene = synthesize_scene(params.scanner, layout, mix_seed(seed, 2));
  out.scene.id = id;
  out.ghost.assign(out.scene.boxes.size(), 0);
  return out;
}

std::optional<AttackRecord> inject_trace(LabeledScene& scene, const PointCloud& trace,
                                         const GhostPlacement& placement,
                                         const SpooferBudget& budget,
                                         const ScannerSpec& scanner, ObjectClass ghost_class,
                                         std::uint64_t seed) {
  if (scene.ghost.size() != scene.scene.boxes.size()) {
    throw InvalidInputError("scene " + scene.scene.id + " lacks ground-truth labels");
  }
  auto injected = inject_ghost(scene.scene, trace, placement, budget, scanner, ghost_class, seed);
  if (!injected.ghost) return std::nullopt;
  AttackRecord record;
  record.object_id = scene.scene.boxes.size();
  record.ghost_class = ghost_class;
  record.placement = placement;
  record.injected = injected.injected;
  record.removed = injected.removed;
  record.seed = seed;
  scene.scene = std::move(injected.scene);
  scene.ghost.push_back(1);
  return record;
}

std::optional<AttackRecord> attack_scene(LabeledScene& scene, const DatasetParams& params,
                                         std::uint64_t seed, ObjectClass ghost_class) {
  Rng rng(mix_seed(seed, 0x67686f7374ULL));
  const PointCloud trace = make_trace(params.scanner, ghost_class, mix_seed(seed, 3),
                                      params.trace_range_min, params.trace_range_max);
  std::vector<std::pair<double, double>> wedges;
  for (const auto& b : scene.scene.boxes) wedges.push_back(wedge_of(b));
  const double ghost_half = params.budget.max_wedge_deg * kDeg / 2.0;
  for (int attempt = 0; attempt < 400; ++attempt) {
    // Widen the search if the frontal band is crowded.
    const double fov = std::min(90.0, params.ghost_half_fov_deg * (1.0 + attempt / 100));
    GhostPlacement placement;
    placement.range = uniform_real(rng, params.ghost_range_min, params.ghost_range_max);
    placement.angle = uniform_real(rng, -fov, fov) * kDeg;
    bool clear = true;
    for (const auto& [center, half] : wedges) {
      if (std::abs(normalize_angle(placement.angle - center)) <= half + ghost_half + 2.0 * kDeg) {
        clear = false;
      }
    }
    if (!clear) continue;
    return inject_trace(scene, trace, placement, params.budget, params.scanner, ghost_class,
                        mix_seed(seed, 4));
  }
  return std::nullopt;
}

bool is_attacked(std::size_t index, double fraction) {
  return std::floor(static_cast<double>(index + 1) * fraction) >
         std::floor(static_cast<double>(index) * fraction);
}

ObjectClass ghost_class_for(std::size_t k) {
  constexpr ObjectClass kCycle[] = {ObjectClass::kCar, ObjectClass::kPedestrian,
                                    ObjectClass::kCyclist};
  return kCycle[k % 3];
}

std::vector<LabeledScene> make_dataset(const DatasetParams& params, std::size_t n_scenes,
                                       std::uint64_t seed, unsigned jobs) {
  validate(params);
  std::vector<std::optional<ObjectClass>> ghost(n_scenes);
  std::size_t count = 0;
  for (std::size_t i = 0; i < n_scenes; ++i) {
    if (is_attacked(i, params.attacked_fraction)) ghost[i] = ghost_class_for(count++);
  }
  std::vector<LabeledScene> out(n_scenes);
  parallel_for(n_scenes, jobs, [&](std::size_t i) {
    const std::uint64_t scene_seed = mix_seed(seed, i);
    out[i] = generate_scene(params, scene_seed, scene_id_for(i));
    if (ghost[i]) attack_scene(out[i], params, mix_seed(scene_seed, 5), *ghost[i]);
  });
  return out;
}

std::string scene_id_for(std::size_t index) {
  char id[32];
  std::snprintf(id, sizeof id, "scene_%05zu", index);
  return id;
}

BoundingBox3D perturb_box(const BoundingBox3D& box, const BoxNoise& noise,
                          const SensorGeometry& geometry, Rng& rng) {
  BoundingBox3D b = box;
  b.center_x += noise.center_sigma * standard_normal(rng);
  b.center_y += noise.center_sigma * standard_normal(rng);
  b.length *= 1.0 + noise.scale_range * (2.0 * uniform01(rng) - 1.0);
  b.width *= 1.0 + noise.scale_range * (2.0 * uniform01(rng) - 1.0);
  b.yaw = normalize_angle(b.yaw + noise.yaw_sigma_deg * kDeg * standard_normal(rng));
  const double ceiling = geometry.ground_z + geometry.sensor_height - 0.01;
  b.z_top = std::clamp(b.z_top + noise.top_sigma * standard_normal(rng), b.z_bottom + 0.05,
                       std::max(ceiling, b.z_bottom + 0.05));
  return b;
}

std::vector<FeatureRecord> make_feature_records(const std::vector<LabeledScene>& scenes,
                                                const HeightMode& mode,
                                                const DbscanParams& dbscan,
                                                const BoxNoise& noise, std::uint64_t seed,
                                                unsigned jobs) {
  std::vector<std::vector<FeatureRecord>> per_scene(scenes.size());
  parallel_for(scenes.size(), jobs, [&](std::size_t s) {
    const auto& ls = scenes[s];
    Rng rng(mix_seed(seed, s));
    for (std::size_t b = 0; b < ls.scene.boxes.size(); ++b) {
      const BoundingBox3D box = perturb_box(ls.scene.boxes[b], noise, ls.scene.geometry, rng);
      try {
        const auto region = propose_region(box, ls.scene.geometry, mode);
        const auto locals = collect_shadow_points(region, ls.scene.cloud);
        FeatureRecord r;
        r.scene_id = ls.scene.id;
        r.object_id = b;
        r.object_class = box.label;
        r.sample.features = extract_features(locals, ls.scene.cloud, dbscan);
        r.sample.label = ls.ghost.at(b);
        per_scene[s].push_back(r);
      } catch (const DegenerateGeometryError&) {
      }
    }
  });
  std::vector<FeatureRecord> out;
  for (auto& v : per_scene) out.insert(out.end(), v.begin(), v.end());
  return out;
}

}  // namespace shadowscope
