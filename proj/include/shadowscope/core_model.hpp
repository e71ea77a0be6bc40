#pragma once

// Domain types shared by every module.
//
// Frame convention: the sensor sits at the origin, x points forward, y left,
// z up. The ground plane is z = ground_z, which is -H for a sensor mounted H
// meters above the road.

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

namespace shadowscope {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  /// Carried through I/O, ignored by every analysis.
  double reflectance = 0.0;

  double radial() const { return std::hypot(x, y); }
  double azimuth() const { return std::atan2(y, x); }

  friend bool operator==(const Point3&, const Point3&) = default;
};

using PointCloud = std::vector<Point3>;

struct SensorGeometry {
  double sensor_height = 1.73;  // H, HDL-64E mount height on the KITTI car
  double ground_z = -1.73;
  double max_range = 80.0;

  static SensorGeometry with_height(double height, double max_range = 80.0) {
    return SensorGeometry{height, -height, max_range};
  }

  friend bool operator==(const SensorGeometry&, const SensorGeometry&) = default;
};

enum class ObjectClass { kCar, kPedestrian, kCyclist, kOther };

std::string_view to_string(ObjectClass c);
/// Accepts the native tags (case-insensitive) and the KITTI type names.
/// Unknown tags map to kOther.
ObjectClass parse_object_class(std::string_view tag);

struct BoundingBox3D {
  double center_x = 0.0;
  double center_y = 0.0;
  double z_bottom = 0.0;
  double z_top = 0.0;
  double length = 0.0;  // along the heading direction
  double width = 0.0;
  double yaw = 0.0;     // heading, radians, counterclockwise from +x
  ObjectClass label = ObjectClass::kOther;

  double height() const { return z_top - z_bottom; }
  double center_distance() const { return std::hypot(center_x, center_y); }

  friend bool operator==(const BoundingBox3D&, const BoundingBox3D&) = default;
};

struct Scene {
  std::string id;
  PointCloud cloud;
  std::vector<BoundingBox3D> boxes;
  SensorGeometry geometry;
};

// Validation. Each throws ConfigError / InvalidInputError naming the field.
void validate(const Point3& p);
void validate(const SensorGeometry& g);
void validate(const BoundingBox3D& box);
void validate(const Scene& scene);

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::remainder(a, kTwoPi);  // [-pi, pi]
  if (a <= -std::numbers::pi) a += kTwoPi;
  return a;
}

/// The four ground-plane corners of the box in counterclockwise order,
/// starting at the front-right corner (+length/2, -width/2 in box frame).
std::array<Vec2, 4> ground_corners(const BoundingBox3D& box);

/// Box-frame coordinates of an (x, y) position: first component along the
/// heading, second along the left-hand side.
Vec2 to_box_frame(const BoundingBox3D& box, double x, double y);

/// True when (x, y) lies within the box footprint grown by `margin`.
bool footprint_contains(const BoundingBox3D& box, double x, double y,
                        double margin = 0.0);

/// True when p lies inside the box grown by `margin` in every direction.
bool box_contains(const BoundingBox3D& box, const Point3& p, double margin = 0.0);

/// Drops z and reflectance; order and count are preserved.
std::vector<Vec2> bev_project(const PointCloud& cloud);

}  // namespace shadowscope
