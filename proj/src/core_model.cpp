#include "shadowscope/core_model.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "shadowscope/error.hpp"

namespace shadowscope {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

std::string_view to_string(ObjectClass c) {
  switch (c) {
    case ObjectClass::kCar:
      return "car";
    case ObjectClass::kPedestrian:
      return "pedestrian";
    case ObjectClass::kCyclist:
      return "cyclist";
    case ObjectClass::kOther:
      return "other";
  }
  return "other";
}

ObjectClass parse_object_class(std::string_view tag) {
  const std::string t = lower(tag);
  if (t == "car") return ObjectClass::kCar;
  if (t == "pedestrian" || t == "person_sitting") return ObjectClass::kPedestrian;
  if (t == "cyclist") return ObjectClass::kCyclist;
  return ObjectClass::kOther;
}

void validate(const Point3& p) {
  if (!finite(p.x) || !finite(p.y) || !finite(p.z) || !finite(p.reflectance)) {
    throw InvalidInputError("point has a non-finite coordinate");
  }
  if (p.reflectance < 0.0 || p.reflectance > 1.0) {
    throw InvalidInputError("point reflectance outside [0, 1]");
  }
}

void validate(const SensorGeometry& g) {
  if (!finite(g.sensor_height) || g.sensor_height <= 0.0) {
    throw ConfigError("sensor_height must be positive");
  }
  if (!finite(g.ground_z)) throw ConfigError("ground_z must be finite");
  if (!finite(g.max_range) || g.max_range <= 0.0) {
    throw ConfigError("max_range must be positive");
  }
}

void validate(const BoundingBox3D& box) {
  for (double v : {box.center_x, box.center_y, box.z_bottom, box.z_top, box.length,
                   box.width, box.yaw}) {
    if (!finite(v)) throw InvalidInputError("box has a non-finite field");
  }
  if (box.length <= 0.0 || box.width <= 0.0) {
    throw InvalidInputError("box length and width must be positive");
  }
  if (box.z_top <= box.z_bottom) throw InvalidInputError("box z_top must exceed z_bottom");
}

void validate(const Scene& scene) {
  validate(scene.geometry);
  for (const auto& box : scene.boxes) {
    validate(box);
    if (box.center_distance() > scene.geometry.max_range) {
      throw InvalidInputError("box lies beyond the sensor max_range");
    }
  }
}

std::array<Vec2, 4> ground_corners(const BoundingBox3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double hl = 0.5 * box.length;
  const double hw = 0.5 * box.width;
  // Box-frame corners, counterclockwise.
  const std::array<Vec2, 4> local{{{hl, -hw}, {hl, hw}, {-hl, hw}, {-hl, -hw}}};
  std::array<Vec2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {box.center_x + (c * local[i].x - s * local[i].y),
              box.center_y + (s * local[i].x + c * local[i].y)};
  }
  return out;
}

Vec2 to_box_frame(const BoundingBox3D& box, double x, double y) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double dx = x - box.center_x;
  const double dy = y - box.center_y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

bool footprint_contains(const BoundingBox3D& box, double x, double y, double margin) {
  const Vec2 local = to_box_frame(box, x, y);
  return std::abs(local.x) <= 0.5 * box.length + margin &&
         std::abs(local.y) <= 0.5 * box.width + margin;
}

bool box_contains(const BoundingBox3D& box, const Point3& p, double margin) {
  return p.z >= box.z_bottom - margin && p.z <= box.z_top + margin &&
         footprint_contains(box, p.x, p.y, margin);
}

std::vector<Vec2> bev_project(const PointCloud& cloud) {
  std::vector<Vec2> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud) out.push_back({p.x, p.y});
  return out;
}

}  // namespace shadowscope
