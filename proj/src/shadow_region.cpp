#include "shadowscope/shadow_region.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "shadowscope/error.hpp"
#include "shadowscope/io.hpp"

namespace shadowscope {

namespace {

// Angular slack for the closed boundary test; absorbs atan2 rounding of
// points constructed exactly on a boundary ray.
constexpr double kAngleSlack = 1e-12;
// Clouds are stored as float32, which moves a point lying exactly on the
// ground plane by up to ~1e-7 m; the lower slab bound tolerates that.
constexpr double kGroundSlack = 1e-6;

}  // namespace

std::string to_string(const HeightMode& mode) {
  switch (mode.kind) {
    case HeightMode::Kind::kBev:
      return "bev";
    case HeightMode::Kind::kRayHeight:
      return "ray-height";
    case HeightMode::Kind::kUniform:
      return "uniform:" + format_double(mode.uniform_height);
  }
  return "bev";
}

HeightMode parse_height_mode(std::string_view text) {
  if (text == "bev") return HeightMode::bev();
  if (text == "ray-height") return HeightMode::ray_height();
  constexpr std::string_view kPrefix = "uniform:";
  if (text.starts_with(kPrefix)) {
    const auto num = text.substr(kPrefix.size());
    double h = 0.0;
    auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), h);
    if (ec == std::errc() && ptr == num.data() + num.size()) {
      HeightMode mode = HeightMode::uniform(h);
      validate(mode);
      return mode;
    }
  }
  throw ConfigError("height mode must be bev, ray-height or uniform:<meters>, got '" +
                    std::string(text) + "'");
}

void validate(const HeightMode& mode) {
  if (mode.kind == HeightMode::Kind::kUniform &&
      (!std::isfinite(mode.uniform_height) || mode.uniform_height <= 0.0)) {
    throw ConfigError("uniform height must be positive");
  }
}

double shadow_length(double h, double sensor_height, double d_obj, double max_range) {
  if (!(h < sensor_height)) {
    throw DegenerateGeometryError("object top at or above the sensor: shadow is unbounded");
  }
  if (!(h > 0.0)) throw DegenerateGeometryError("object top must be above the ground");
  if (!(d_obj > 0.0)) throw DegenerateGeometryError("object distance must be positive");
  const double l = d_obj * h / (sensor_height - h);
  return std::min(l, std::max(0.0, max_range - d_obj));
}

ShadowRegion propose_region(const BoundingBox3D& box, const SensorGeometry& geometry,
                            const HeightMode& mode) {
  validate(box);
  validate(geometry);
  validate(mode);
  if (footprint_contains(box, 0.0, 0.0)) {
    throw DegenerateGeometryError("box footprint contains the sensor");
  }
  const auto corners = ground_corners(box);
  const double reference = std::atan2(box.center_y, box.center_x);
  double rel_min = std::numeric_limits<double>::infinity();
  double rel_max = -rel_min;
  double d_obj = 0.0;
  for (const auto& c : corners) {
    const double rel = normalize_angle(std::atan2(c.y, c.x) - reference);
    rel_min = std::min(rel_min, rel);
    rel_max = std::max(rel_max, rel);
    d_obj = std::max(d_obj, std::hypot(c.x, c.y));
  }
  if (rel_max - rel_min >= std::numbers::pi) {
    throw DegenerateGeometryError("box corners span half a turn or more around the sensor");
  }
  if (d_obj >= geometry.max_range) {
    throw DegenerateGeometryError("box reaches past the sensor max_range");
  }
  ShadowRegion region;
  region.angle_min = reference + rel_min;
  region.angle_max = reference + rel_max;
  region.d_start = d_obj;
  region.object_top_h = box.z_top - geometry.ground_z;
  region.d_end = d_obj + shadow_length(region.object_top_h, geometry.sensor_height, d_obj,
                                       geometry.max_range);
  region.height_mode = mode;
  region.geometry = geometry;
  if (!(region.d_end > region.d_start)) {
    throw DegenerateGeometryError("shadow region has zero length");
  }
  return region;
}

double region_ceiling(const ShadowRegion& region, double radial) {
  const auto& g = region.geometry;
  switch (region.height_mode.kind) {
    case HeightMode::Kind::kBev:
      return std::numeric_limits<double>::infinity();
    case HeightMode::Kind::kUniform:
      return g.ground_z + region.height_mode.uniform_height;
    case HeightMode::Kind::kRayHeight:
      return g.ground_z + (g.sensor_height -
                           (g.sensor_height - region.object_top_h) * radial / region.d_start);
  }
  return 0.0;
}

std::optional<ShadowPointLocal> localize(const ShadowRegion& region, const Point3& p,
                                         std::size_t source) {
  const double radial = p.radial();
  if (radial < region.d_start || radial > region.d_end) return std::nullopt;
  if (region.height_mode.kind != HeightMode::Kind::kBev) {
    if (p.z < region.geometry.ground_z - kGroundSlack ||
        p.z > region_ceiling(region, radial)) {
      return std::nullopt;
    }
  }
  const double half = region.half_width();
  const double rel = std::abs(normalize_angle(p.azimuth() - region.angle_center()));
  if (rel > half + kAngleSlack) return std::nullopt;
  ShadowPointLocal local;
  local.t = (radial - region.d_start) / (region.d_end - region.d_start);
  local.u = std::min(1.0, rel / half);
  local.source = source;
  return local;
}

std::vector<ShadowPointLocal> collect_shadow_points(const ShadowRegion& region,
                                                    const PointCloud& cloud) {
  // Cheap rejections before the atan2 in localize: squared radius, then a
  // half-plane test against the center direction.
  const double r2_min = region.d_start * region.d_start;
  const double r2_max = region.d_end * region.d_end;
  const double cx = std::cos(region.angle_center());
  const double cy = std::sin(region.angle_center());
  const double cos_limit = std::cos(std::min(std::numbers::pi, region.half_width() + 1e-6));
  std::vector<ShadowPointLocal> out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud[i];
    const double r2 = p.x * p.x + p.y * p.y;
    if (r2 < r2_min * (1.0 - 1e-12) || r2 > r2_max * (1.0 + 1e-12)) continue;
    if (p.x * cx + p.y * cy < cos_limit * std::sqrt(r2) - 1e-9) continue;
    if (auto local = localize(region, p, i)) out.push_back(*local);
  }
  return out;
}

std::vector<Vec2> region_polygon(const ShadowRegion& region, double max_step) {
  const double width = region.angle_max - region.angle_min;
  const auto segments =
      static_cast<std::size_t>(std::max(1.0, std::ceil(width / max_step - 1e-9)));
  std::vector<Vec2> out;
  out.reserve(2 * (segments + 1));
  for (std::size_t i = 0; i <= segments; ++i) {
    const double a = region.angle_min + width * static_cast<double>(i) / segments;
    out.push_back({region.d_end * std::cos(a), region.d_end * std::sin(a)});
  }
  for (std::size_t i = 0; i <= segments; ++i) {
    const double a = region.angle_max - width * static_cast<double>(i) / segments;
    out.push_back({region.d_start * std::cos(a), region.d_start * std::sin(a)});
  }
  return out;
}

}  // namespace shadowscope
