#include "shadowscope/lidar_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <utility>

#include <json.hpp>

#include "shadowscope/error.hpp"
#include "shadowscope/parallel.hpp"
#include "shadowscope/random.hpp"

namespace shadowscope {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double to_float32(double v) { return static_cast<double>(static_cast<float>(v)); }

bool full_circle(const ScannerSpec& spec) {
  return spec.azimuth_max_deg - spec.azimuth_min_deg >= 360.0 - 1e-9;
}

// Box footprint in a form cheap to intersect.
struct BoxFrame {
  double cx, cy, cos_yaw, sin_yaw, half_length, half_width, z_bottom, z_top;

  explicit BoxFrame(const BoundingBox3D& b)
      : cx(b.center_x),
        cy(b.center_y),
        cos_yaw(std::cos(b.yaw)),
        sin_yaw(std::sin(b.yaw)),
        half_length(b.length / 2.0),
        half_width(b.width / 2.0),
        z_bottom(b.z_bottom),
        z_top(b.z_top) {}
};

// Slab test for a ray from the origin. Returns the parametric entry and exit
// distances when the ray meets the box.
bool intersect(const BoxFrame& b, double dx, double dy, double dz, double& t_in,
               double& t_out) {
  const double ox = -(b.cos_yaw * b.cx + b.sin_yaw * b.cy);
  const double oy = b.sin_yaw * b.cx - b.cos_yaw * b.cy;
  const double lx = b.cos_yaw * dx + b.sin_yaw * dy;
  const double ly = -b.sin_yaw * dx + b.cos_yaw * dy;
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  auto slab = [&](double o, double d, double min, double max) {
    if (d == 0.0) return o >= min && o <= max;
    double t0 = (min - o) / d;
    double t1 = (max - o) / d;
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
    return lo <= hi;
  };
  if (!slab(ox, lx, -b.half_length, b.half_length)) return false;
  if (!slab(oy, ly, -b.half_width, b.half_width)) return false;
  if (!slab(0.0, dz, b.z_bottom, b.z_top)) return false;
  t_in = lo;
  t_out = hi;
  return true;
}

// Stateless per-ray draw in [-1, 1).
double ray_jitter_unit(std::uint64_t seed, std::uint64_t ray) {
  return static_cast<double>(mix_seed(seed, ray) >> 11) * 0x1.0p-52 - 1.0;
}

// Interval covered by the corners along `axis`, as (min, max).
Vec2 project_onto(const std::array<Vec2, 4>& corners, Vec2 axis) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& c : corners) {
    const double v = c.x * axis.x + c.y * axis.y;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {lo, hi};
}

struct Wedge {
  double center;
  double half;
};

Wedge box_wedge(const BoundingBox3D& box) {
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

double ScannerSpec::laser_elevation(std::size_t k) const {
  if (n_lasers == 1) return vertical_min_deg * kDeg;
  const double step = (vertical_max_deg - vertical_min_deg) / static_cast<double>(n_lasers - 1);
  return (vertical_min_deg + step * static_cast<double>(k)) * kDeg;
}

std::size_t ScannerSpec::column_count() const {
  const double span = azimuth_max_deg - azimuth_min_deg;
  const auto steps = static_cast<std::size_t>(std::floor(span / azimuth_step_deg + 1e-9));
  if (full_circle(*this)) {
    // The column at azimuth_max would repeat the first one.
    return std::abs(steps * azimuth_step_deg - span) < 1e-9 ? steps : steps + 1;
  }
  return steps + 1;
}

double ScannerSpec::column_azimuth(std::size_t c) const {
  return normalize_angle((azimuth_min_deg + azimuth_step_deg * static_cast<double>(c)) * kDeg);
}

void validate(const ScannerSpec& spec) {
  validate(spec.geometry);
  if (spec.n_lasers < 1 || spec.n_lasers > 1024) {
    throw ConfigError("scanner n_lasers must lie in 1..1024");
  }
  if (!(spec.vertical_min_deg < spec.vertical_max_deg) || spec.vertical_min_deg <= -90.0 ||
      spec.vertical_max_deg >= 90.0) {
    throw ConfigError("scanner vertical field of view must satisfy -90 < min < max < 90");
  }
  if (!std::isfinite(spec.azimuth_step_deg) || spec.azimuth_step_deg <= 0.0) {
    throw ConfigError("scanner azimuth_step must be positive");
  }
  if (!(spec.azimuth_min_deg < spec.azimuth_max_deg) ||
      spec.azimuth_max_deg - spec.azimuth_min_deg > 360.0 || spec.azimuth_min_deg < -360.0 ||
      spec.azimuth_max_deg > 360.0) {
    throw ConfigError("scanner azimuth range must satisfy min < max with a span of at most 360");
  }
  if (!(spec.jitter >= 0.0 && spec.jitter <= 0.01)) {
    throw ConfigError("scanner jitter must lie in [0, 0.01] meters");
  }
}

std::string scanner_to_json(const ScannerSpec& spec) {
  nlohmann::json j;
  j["n_lasers"] = spec.n_lasers;
  j["vertical_fov_deg"] = {spec.vertical_min_deg, spec.vertical_max_deg};
  j["azimuth_step_deg"] = spec.azimuth_step_deg;
  j["azimuth_range_deg"] = {spec.azimuth_min_deg, spec.azimuth_max_deg};
  j["jitter"] = spec.jitter;
  j["sensor_height"] = spec.geometry.sensor_height;
  j["ground_z"] = spec.geometry.ground_z;
  j["max_range"] = spec.geometry.max_range;
  return j.dump(2) + "\n";
}

ScannerSpec scanner_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("scanner config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("scanner config must be a JSON object");
  ScannerSpec spec;
  bool ground_given = false;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "n_lasers") {
        spec.n_lasers = value.get<std::size_t>();
      } else if (key == "vertical_fov_deg") {
        spec.vertical_min_deg = value.at(0).get<double>();
        spec.vertical_max_deg = value.at(1).get<double>();
      } else if (key == "azimuth_step_deg") {
        spec.azimuth_step_deg = value.get<double>();
      } else if (key == "azimuth_range_deg") {
        spec.azimuth_min_deg = value.at(0).get<double>();
        spec.azimuth_max_deg = value.at(1).get<double>();
      } else if (key == "jitter") {
        spec.jitter = value.get<double>();
      } else if (key == "sensor_height") {
        spec.geometry.sensor_height = value.get<double>();
      } else if (key == "ground_z") {
        spec.geometry.ground_z = value.get<double>();
        ground_given = true;
      } else if (key == "max_range") {
        spec.geometry.max_range = value.get<double>();
      } else {
        throw ConfigError("unknown scanner config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad scanner config value: ") + e.what());
  }
  if (!ground_given) spec.geometry.ground_z = -spec.geometry.sensor_height;
  validate(spec);
  return spec;
}

RayId nearest_ray(const ScannerSpec& spec, const Point3& p) {
  const double elevation = std::atan2(p.z, p.radial()) / kDeg;
  RayId id;
  if (spec.n_lasers > 1) {
    const double step =
        (spec.vertical_max_deg - spec.vertical_min_deg) / static_cast<double>(spec.n_lasers - 1);
    const double k = std::round((elevation - spec.vertical_min_deg) / step);
    id.laser = static_cast<std::uint32_t>(
        std::clamp(k, 0.0, static_cast<double>(spec.n_lasers - 1)));
  }
  const std::size_t columns = spec.column_count();
  double offset = p.azimuth() / kDeg - spec.azimuth_min_deg;
  if (full_circle(spec)) offset = std::fmod(std::fmod(offset, 360.0) + 360.0, 360.0);
  double c = std::round(offset / spec.azimuth_step_deg);
  if (full_circle(spec) && c >= static_cast<double>(columns)) {
    // Past the last column: the wrap-around neighbor is column 0.
    const double to_last = offset - static_cast<double>(columns - 1) * spec.azimuth_step_deg;
    const double to_first = 360.0 - offset;
    c = to_first < to_last ? 0.0 : static_cast<double>(columns - 1);
  }
  id.column = static_cast<std::uint32_t>(std::clamp(c, 0.0, static_cast<double>(columns - 1)));
  return id;
}

void validate(const SimObstacle& obstacle) {
  validate(obstacle.box);
  if (!std::isfinite(obstacle.surface_point_spacing) || obstacle.surface_point_spacing <= 0.0) {
    throw ConfigError("obstacle surface_point_spacing must be positive");
  }
}

bool boxes_overlap(const BoundingBox3D& a, const BoundingBox3D& b) {
  if (a.z_top <= b.z_bottom || b.z_top <= a.z_bottom) return false;
  const auto ca = ground_corners(a);
  const auto cb = ground_corners(b);
  // Separating axis test over the four edge normals.
  for (const double yaw : {a.yaw, a.yaw + std::numbers::pi / 2, b.yaw,
                           b.yaw + std::numbers::pi / 2}) {
    const Vec2 axis{std::cos(yaw), std::sin(yaw)};
    const Vec2 pa = project_onto(ca, axis);
    const Vec2 pb = project_onto(cb, axis);
    if (pa.y <= pb.x || pb.y <= pa.x) return false;
  }
  return true;
}

SimulatedScan simulate_scan(const ScannerSpec& spec, const std::vector<SimObstacle>& obstacles,
                            std::uint64_t seed, unsigned jobs) {
  validate(spec);
  const auto& g = spec.geometry;
  std::vector<BoxFrame> frames;
  for (std::size_t i = 0; i < obstacles.size(); ++i) {
    validate(obstacles[i]);
    const auto& box = obstacles[i].box;
    if (footprint_contains(box, 0.0, 0.0)) {
      throw InvalidInputError("obstacle " + std::to_string(i) + " contains the sensor");
    }
    for (const auto& c : ground_corners(box)) {
      if (std::hypot(c.x, c.y) > g.max_range) {
        throw InvalidInputError("obstacle " + std::to_string(i) + " lies beyond max_range");
      }
    }
    for (std::size_t k = 0; k < i; ++k) {
      if (boxes_overlap(obstacles[k].box, box)) {
        throw InvalidInputError("obstacles " + std::to_string(k) + " and " + std::to_string(i) +
                                " overlap");
      }
    }
    frames.emplace_back(box);
  }

  const std::size_t columns = spec.column_count();
  std::vector<double> sin_phi(spec.n_lasers);
  std::vector<double> cos_phi(spec.n_lasers);
  for (std::size_t k = 0; k < spec.n_lasers; ++k) {
    sin_phi[k] = std::sin(spec.laser_elevation(k));
    cos_phi[k] = std::cos(spec.laser_elevation(k));
  }

  std::vector<std::vector<Point3>> col_points(columns);
  std::vector<std::vector<RayId>> col_rays(columns);
  parallel_for(columns, jobs, [&](std::size_t c) {
    const double theta = spec.column_azimuth(c);
    const double ct = std::cos(theta);
    const double st = std::sin(theta);
    for (std::size_t k = 0; k < spec.n_lasers; ++k) {
      const double dx = cos_phi[k] * ct;
      const double dy = cos_phi[k] * st;
      const double dz = sin_phi[k];
      double best = std::numeric_limits<double>::infinity();
      double chord = 0.0;
      bool ground = false;
      if (dz < 0.0) {
        const double t = g.ground_z / dz;
        if (t * cos_phi[k] <= g.max_range) {
          best = t;
          ground = true;
        }
      }
      for (const auto& f : frames) {
        double t_in = 0.0;
        double t_out = 0.0;
        if (intersect(f, dx, dy, dz, t_in, t_out) && t_in > 0.0 && t_in < best &&
            t_in * cos_phi[k] <= g.max_range) {
          best = t_in;
          chord = t_out - t_in;
          ground = false;
        }
      }
      if (!std::isfinite(best)) continue;

      const std::uint64_t ray_index = static_cast<std::uint64_t>(c) * spec.n_lasers + k;
      const double delta = spec.jitter * ray_jitter_unit(seed, ray_index);
      Point3 p;
      if (ground) {
        // Radial jitter on the ground plane keeps ground points on it.
        const double r = std::min(g.max_range, best * cos_phi[k] + delta);
        p.x = r * ct;
        p.y = r * st;
        p.z = g.ground_z;
      } else {
        // Along-ray jitter, never deeper than half the chord so the return
        // stays inside the box it hit.
        const double t = best + std::min(delta, chord / 2.0);
        p.x = t * dx;
        p.y = t * dy;
        p.z = t * dz;
      }
      p.x = to_float32(p.x);
      p.y = to_float32(p.y);
      p.z = to_float32(p.z);
      col_points[c].push_back(p);
      col_rays[c].push_back({static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(c)});
    }
  });

  SimulatedScan out;
  out.scene.geometry = g;
  out.scene.id = "sim-" + std::to_string(seed);
  for (const auto& o : obstacles) out.scene.boxes.push_back(o.box);
  for (std::size_t c = 0; c < columns; ++c) {
    out.scene.cloud.insert(out.scene.cloud.end(), col_points[c].begin(), col_points[c].end());
    out.rays.insert(out.rays.end(), col_rays[c].begin(), col_rays[c].end());
  }
  return out;
}

Scene synthesize_scene(const ScannerSpec& spec, const std::vector<SimObstacle>& obstacles,
                       std::uint64_t seed, unsigned jobs) {
  return simulate_scan(spec, obstacles, seed, jobs).scene;
}

DensityMode parse_density_mode(std::string_view text) {
  if (text == "env-2x2" || text == "env") return DensityMode::kEnv2x2;
  if (text == "bbox") return DensityMode::kBbox;
  throw ConfigError("density mode must be env-2x2 or bbox, got '" + std::string(text) + "'");
}

std::string_view to_string(DensityMode mode) {
  return mode == DensityMode::kEnv2x2 ? "env-2x2" : "bbox";
}

std::vector<DensityBin> density_profile(const Scene& scene, DensityMode mode,
                                        std::span<const double> bin_edges) {
  if (bin_edges.size() < 2) throw InvalidInputError("density profile needs at least two edges");
  for (std::size_t i = 0; i < bin_edges.size(); ++i) {
    if (!std::isfinite(bin_edges[i]) || bin_edges[i] < 0.0 ||
        (i > 0 && !(bin_edges[i] > bin_edges[i - 1]))) {
      throw InvalidInputError("density bin edges must be finite, non-negative and increasing");
    }
  }
  const std::size_t n_bins = bin_edges.size() - 1;
  auto bin_of = [&](double d) -> std::optional<std::size_t> {
    if (d < bin_edges.front() || d >= bin_edges.back()) return std::nullopt;
    const auto it = std::upper_bound(bin_edges.begin(), bin_edges.end(), d);
    return static_cast<std::size_t>(it - bin_edges.begin()) - 1;
  };
  std::vector<double> totals(n_bins, 0.0);
  std::vector<std::size_t> samples(n_bins, 0);
  std::vector<bool> present(n_bins, false);

  if (mode == DensityMode::kEnv2x2) {
    if (!scene.boxes.empty()) {
      throw InvalidInputError("env-2x2 density needs an obstacle-free scene");
    }
    constexpr double kCell = 2.0;
    std::map<std::pair<long, long>, std::size_t> counts;
    for (const auto& p : scene.cloud) {
      if (p.x < 0.0) continue;
      counts[{static_cast<long>(std::floor(p.x / kCell)),
              static_cast<long>(std::floor(p.y / kCell))}]++;
    }
    const long reach = static_cast<long>(std::ceil(bin_edges.back() / kCell)) + 1;
    for (long ix = 0; ix <= reach; ++ix) {
      for (long iy = -reach; iy <= reach; ++iy) {
        const double d = std::hypot((static_cast<double>(ix) + 0.5) * kCell,
                                    (static_cast<double>(iy) + 0.5) * kCell);
        const auto b = bin_of(d);
        if (!b) continue;
        const auto it = counts.find({ix, iy});
        const std::size_t count = it == counts.end() ? 0 : it->second;
        totals[*b] += static_cast<double>(count);
        samples[*b]++;
        if (count > 0) present[*b] = true;
      }
    }
  } else {
    for (const auto& box : scene.boxes) {
      const auto b = bin_of(box.center_distance());
      if (!b) continue;
      std::size_t count = 0;
      for (const auto& p : scene.cloud) count += box_contains(box, p) ? 1 : 0;
      totals[*b] += static_cast<double>(count);
      samples[*b]++;
      present[*b] = true;
    }
  }

  std::vector<DensityBin> out;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (!present[b]) continue;
    out.push_back({bin_edges[b], bin_edges[b + 1], totals[b] / static_cast<double>(samples[b]),
                   samples[b]});
  }
  return out;
}

ClassShape default_shape(ObjectClass c) {
  switch (c) {
    case ObjectClass::kCar:
      return {3.6, 4.6, 1.6, 1.9, 1.45, 1.6};
    case ObjectClass::kPedestrian:
      return {0.5, 0.9, 0.5, 0.8, 1.55, 1.7};
    case ObjectClass::kCyclist:
      return {1.5, 1.9, 0.5, 0.8, 1.55, 1.7};
    case ObjectClass::kOther:
      return {1.0, 2.0, 1.0, 2.0, 1.0, 1.5};
  }
  return {1.0, 2.0, 1.0, 2.0, 1.0, 1.5};
}

bool shadow_reaches_max_range(const BoundingBox3D& box, const SensorGeometry& geometry) {
  const double h = box.z_top - geometry.ground_z;
  if (!(h < geometry.sensor_height) || !(h > 0.0)) return false;
  // Distance from the sensor to the nearest footprint point: rays leave the
  // footprint no nearer than this.
  const Vec2 o = to_box_frame(box, 0.0, 0.0);
  const double dx = std::max(std::abs(o.x) - box.length / 2.0, 0.0);
  const double dy = std::max(std::abs(o.y) - box.width / 2.0, 0.0);
  const double nearest = std::hypot(dx, dy);
  return nearest * geometry.sensor_height / (geometry.sensor_height - h) >=
         geometry.max_range + 1.0;
}

void validate(const LayoutParams& params) {
  if (params.min_obstacles > params.max_obstacles || !(params.min_distance > 0.0) ||
      !(params.min_distance < params.max_distance) || !(params.half_fov_deg > 0.0) ||
      params.half_fov_deg > 180.0 || !(params.wedge_gap_deg >= 0.0)) {
    throw ConfigError("invalid layout parameters");
  }
}

std::vector<SimObstacle> random_layout(const ScannerSpec& spec, const LayoutParams& params,
                                       std::uint64_t seed) {
  validate(spec);
  validate(params);
  const auto& g = spec.geometry;
  Rng rng(mix_seed(seed, 0x6c61796f7574ULL));
  const std::size_t count =
      params.min_obstacles +
      uniform_index(rng, params.max_obstacles - params.min_obstacles + 1);
  constexpr ObjectClass kClasses[] = {ObjectClass::kCar, ObjectClass::kPedestrian,
                                      ObjectClass::kCyclist};
  const double step = spec.azimuth_step_deg * kDeg;
  const double az0 = spec.azimuth_min_deg * kDeg;

  std::vector<SimObstacle> out;
  std::vector<Wedge> wedges;
  for (std::size_t i = 0; i < count; ++i) {
    const ObjectClass cls = kClasses[uniform_index(rng, 3)];
    const ClassShape shape = default_shape(cls);
    for (int attempt = 0; attempt < 500; ++attempt) {
      BoundingBox3D box;
      box.label = cls;
      box.length = uniform_real(rng, shape.length_min, shape.length_max);
      box.width = uniform_real(rng, shape.width_min, shape.width_max);
      box.z_bottom = g.ground_z;
      box.z_top = g.ground_z + uniform_real(rng, shape.top_min, shape.top_max);
      box.yaw = normalize_angle(uniform_real(rng, -std::numbers::pi, std::numbers::pi));
      const double d = uniform_real(rng, params.min_distance, params.max_distance);
      const double a = uniform_real(rng, -params.half_fov_deg, params.half_fov_deg) * kDeg;
      box.center_x = d * std::cos(a);
      box.center_y = d * std::sin(a);

      if (footprint_contains(box, 0.0, 0.0, 0.5)) continue;
      if (!shadow_reaches_max_range(box, g)) continue;
      bool ok = true;
      for (const auto& c : ground_corners(box)) {
        if (std::hypot(c.x, c.y) >= g.max_range) ok = false;
        // A silhouette corner on a scan column would let float32 storage nudge
        // a grazing return across the boundary ray.
        double offset = normalize_angle(std::atan2(c.y, c.x) - az0);
        if (offset < 0.0) offset += 2.0 * std::numbers::pi;
        const double k = offset / step;
        if (std::abs(k - std::round(k)) * step < 1e-5) ok = false;
      }
      if (!ok) continue;
      const Wedge w = box_wedge(box);
      for (const auto& other : wedges) {
        if (std::abs(normalize_angle(w.center - other.center)) <=
            w.half + other.half + params.wedge_gap_deg * kDeg) {
          ok = false;
        }
      }
      if (!ok) continue;
      wedges.push_back(w);
      out.push_back({box, 0.1});
      break;
    }
  }
  return out;
}

PointCloud extract_trace(const Scene& scene, const BoundingBox3D& box, double margin) {
  PointCloud out;
  for (const auto& p : scene.cloud) {
    if (box_contains(box, p, margin)) out.push_back(p);
  }
  return out;
}

}  // namespace shadowscope
