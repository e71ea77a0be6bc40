#pragma once

// Synthetic spinning-LiDAR scenes.
//
// Every (laser, azimuth column) ray returns its first hit against the
// obstacle boxes or the ground plane, or nothing when that hit lies beyond
// max_range. Returns are jittered by at most `jitter` meters and stored at
// float32 precision, the precision of the Velodyne binary format.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shadowscope/core_model.hpp"

namespace shadowscope {

struct ScannerSpec {
  std::size_t n_lasers = 64;
  double vertical_min_deg = -24.9;
  double vertical_max_deg = 2.0;
  double azimuth_step_deg = 0.17;
  double azimuth_min_deg = -180.0;
  double azimuth_max_deg = 180.0;
  double jitter = 0.01;  // meters
  SensorGeometry geometry;

  /// Elevation of laser k in radians; lasers are evenly spaced.
  double laser_elevation(std::size_t k) const;
  std::size_t column_count() const;
  /// Azimuth of column c in radians.
  double column_azimuth(std::size_t c) const;
};

void validate(const ScannerSpec& spec);
std::string scanner_to_json(const ScannerSpec& spec);
/// Missing keys keep their defaults; unknown keys are rejected.
ScannerSpec scanner_from_json(std::string_view text);

struct RayId {
  std::uint32_t laser = 0;
  std::uint32_t column = 0;

  friend bool operator==(const RayId&, const RayId&) = default;
  friend auto operator<=>(const RayId&, const RayId&) = default;
};

/// The ray whose nominal direction is closest to p's elevation and azimuth.
RayId nearest_ray(const ScannerSpec& spec, const Point3& p);

struct SimObstacle {
  BoundingBox3D box;
  /// Validated for compatibility with obstacle files; surface sampling
  /// density comes from the ray pattern itself.
  double surface_point_spacing = 0.1;
};

void validate(const SimObstacle& obstacle);

struct SimulatedScan {
  Scene scene;
  std::vector<RayId> rays;  // ray of each cloud point, same order
};

/// Points come out column by column in azimuth order, lasers bottom-up
/// within a column, independent of `jobs`. Throws InvalidInputError for
/// overlapping obstacles or obstacles beyond max_range.
SimulatedScan simulate_scan(const ScannerSpec& spec, const std::vector<SimObstacle>& obstacles,
                            std::uint64_t seed, unsigned jobs = 1);

Scene synthesize_scene(const ScannerSpec& spec, const std::vector<SimObstacle>& obstacles,
                       std::uint64_t seed, unsigned jobs = 1);

/// Whether two boxes share interior volume.
bool boxes_overlap(const BoundingBox3D& a, const BoundingBox3D& b);

// ---- density profiling ---------------------------------------------------

enum class DensityMode { kEnv2x2, kBbox };

DensityMode parse_density_mode(std::string_view text);
std::string_view to_string(DensityMode mode);

struct DensityBin {
  double lo = 0.0;
  double hi = 0.0;
  double mean_count = 0.0;
  std::size_t samples = 0;  // cells or boxes averaged
};

/// env-2x2: the half plane x >= 0 is tiled with 2 m x 2 m cells aligned to
/// the origin; each cell is binned by the distance of its center, and a bin
/// reports the mean point count over its cells. Bins whose cells hold no
/// point at all are omitted. Requires a scene without boxes.
/// bbox: each box contributes the number of points inside it, binned by the
/// distance of its center; bins without boxes are omitted.
/// Bins are half-open [lo, hi).
std::vector<DensityBin> density_profile(const Scene& scene, DensityMode mode,
                                        std::span<const double> bin_edges);

// ---- scene layouts ---------------------------------------------------------

struct ClassShape {
  double length_min, length_max;
  double width_min, width_max;
  double top_min, top_max;  // box top above the ground
};

ClassShape default_shape(ObjectClass c);

struct LayoutParams {
  std::size_t min_obstacles = 1;
  std::size_t max_obstacles = 4;
  double min_distance = 9.0;    // box center distance
  double max_distance = 40.0;
  double half_fov_deg = 60.0;   // obstacles are placed within +-half_fov
  double wedge_gap_deg = 2.0;   // clearance between obstacle wedges
};

void validate(const LayoutParams& params);

/// True when every ray that clears the box top lands past max_range (with
/// one meter to spare). Only then is the whole wedge behind the box dark.
bool shadow_reaches_max_range(const BoundingBox3D& box, const SensorGeometry& geometry);

/// Random obstacles with disjoint angular wedges, each satisfying
/// shadow_reaches_max_range, with silhouette corners kept off the scan
/// columns. Deterministic in `seed`.
std::vector<SimObstacle> random_layout(const ScannerSpec& spec, const LayoutParams& params,
                                       std::uint64_t seed);

/// Points of `scene.cloud` inside `box` grown by `margin`.
PointCloud extract_trace(const Scene& scene, const BoundingBox3D& box, double margin = 0.02);

}  // namespace shadowscope
