#pragma once

// Shadow region proposal.
//
// The region behind an object is a wedge bounded by the two rays from the
// sensor through the extreme ground corners of its box (selected by polar
// angle), starting at the furthest corner distance d_obj and extending by the
// similar-triangle shadow length l = d_obj * h / (H - h). Points inside are
// located in polar coordinates: t runs 0 -> 1 from the start line to the end
// line, u runs 0 -> 1 from the center line to a boundary ray.

#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "shadowscope/core_model.hpp"

namespace shadowscope {

/// Vertical extent of the region.
///   kBev        every z
///   kRayHeight  ground up to the grazing ray over the object's top far edge
///   kUniform    a slab of fixed height above the ground
struct HeightMode {
  enum class Kind { kBev, kRayHeight, kUniform };

  Kind kind = Kind::kUniform;
  double uniform_height = 0.2;

  static HeightMode bev() { return {Kind::kBev, 0.0}; }
  static HeightMode ray_height() { return {Kind::kRayHeight, 0.0}; }
  static HeightMode uniform(double height) { return {Kind::kUniform, height}; }

  friend bool operator==(const HeightMode&, const HeightMode&) = default;
};

/// "bev", "ray-height" or "uniform:<meters>".
std::string to_string(const HeightMode& mode);
HeightMode parse_height_mode(std::string_view text);
void validate(const HeightMode& mode);

struct ShadowRegion {
  double angle_min = 0.0;  // radians, boundary rays from the origin
  double angle_max = 0.0;
  double d_start = 0.0;    // furthest ground-corner distance (d_obj)
  double d_end = 0.0;      // d_start + shadow length
  HeightMode height_mode;
  double object_top_h = 0.0;  // object top above ground (h)
  SensorGeometry geometry;

  double angle_center() const { return 0.5 * (angle_min + angle_max); }
  double half_width() const { return 0.5 * (angle_max - angle_min); }
};

struct ShadowPointLocal {
  double t = 0.0;  // longitudinal fraction, 0 at the start line
  double u = 0.0;  // lateral fraction, 0 on the center line
  std::size_t source = 0;  // index into the scene cloud

  friend bool operator==(const ShadowPointLocal&, const ShadowPointLocal&) = default;
};

/// l = d_obj * h / (H - h), capped so that d_obj + l <= max_range.
/// Throws DegenerateGeometryError when h >= H (unbounded shadow).
double shadow_length(double h, double sensor_height, double d_obj,
                     double max_range = std::numeric_limits<double>::infinity());

/// Throws DegenerateGeometryError when the footprint contains the sensor, the
/// corners span pi or more, the object is not strictly between the ground and
/// the sensor height, or the object reaches past max_range.
ShadowRegion propose_region(const BoundingBox3D& box, const SensorGeometry& geometry,
                            const HeightMode& mode);

/// Height ceiling (absolute z) of the region at horizontal distance `radial`.
double region_ceiling(const ShadowRegion& region, double radial);

/// Closed-region membership; returns std::nullopt outside.
std::optional<ShadowPointLocal> localize(const ShadowRegion& region, const Point3& p,
                                         std::size_t source = 0);

/// All inside points, ordered by source index.
std::vector<ShadowPointLocal> collect_shadow_points(const ShadowRegion& region,
                                                    const PointCloud& cloud);

/// Closed counterclockwise outline: the far arc from angle_min to angle_max,
/// then the near arc back, each discretized at no more than `max_step` radians.
std::vector<Vec2> region_polygon(const ShadowRegion& region,
                                 double max_step = 0.5 * std::numbers::pi / 180.0);

}  // namespace shadowscope
